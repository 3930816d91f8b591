//! Local stable/unstable holonomies, joint rectangles and pseudo-isometry probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continua::{intersect, project, subcontinuum, MarkedContinuum, DEFAULT_TOL};
use crate::cwmetric::{d_metric, eigen_segment, MetricConstants};
use crate::error::{CwError, Result};
use crate::models::{ArcKind, Point, SystemModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolonomyParams {
    pub eps: f64,
    pub delta: f64,
    pub tol: f64,
    pub resolution: usize,
}

impl HolonomyParams {
    /// eps = c/2 and delta = δ′/2 with δ′ from [`lps_radius`].
    pub fn for_model(sys: &SystemModel) -> Result<Self> {
        let eps = sys.c / 2.0;
        let delta_prime = lps_radius(sys, eps, 8, 8)?;
        Ok(HolonomyParams { eps, delta: delta_prime / 2.0, tol: DEFAULT_TOL, resolution: 3 })
    }
}

/// Whether C^s_eps(x) ∩ C^u_eps(y) is nonempty for every sampled pair at distance `r`.
fn lps_holds(sys: &SystemModel, eps: f64, r: f64, grid: usize, dirs: usize) -> Result<bool> {
    for i in 0..grid * grid {
        let x = sys.point((i % grid) as f64 / grid as f64 + 0.013, (i / grid) as f64 / grid as f64 + 0.029);
        let sx = sys.local_arc(&x, ArcKind::Stable, eps, 3)?;
        for k in 0..dirs {
            let th = std::f64::consts::PI * 2.0 * k as f64 / dirs as f64 + 0.1;
            let [u, v] = x.coords();
            let y = sys.point(u + r * th.cos(), v + r * th.sin());
            let uy = sys.local_arc(&y, ArcKind::Unstable, eps, 3)?;
            if intersect(&sx, &uy, DEFAULT_TOL)?.is_empty() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Bisection for the cw-local-product radius δ′ on a sample grid.
pub fn lps_radius(sys: &SystemModel, eps: f64, grid: usize, dirs: usize) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, eps * 2.0);
    if !lps_holds(sys, eps, eps * 1e-3, grid, dirs)? {
        return Err(CwError::Calibration("local product structure fails at the smallest radius".into()));
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if lps_holds(sys, eps, mid, grid, dirs)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// π_{x,y}(z): for `Stable`, C^u_ε(z) ∩ C^s_ε(y) with z on C^s_δ(x); `Unstable` is dual.
pub fn holonomy(sys: &SystemModel, x: &Point, y: &Point, z: &Point, kind: ArcKind, params: &HolonomyParams) -> Result<Vec<Point>> {
    if sys.distance(x, y)? >= params.delta {
        return Err(CwError::Domain(format!("d(x, y) = {:.3e} is not below delta", sys.distance(x, y)?)));
    }
    let home = sys.local_arc(x, kind, params.delta, params.resolution)?;
    let off = project(&home, z).distance;
    if off > params.tol {
        return Err(CwError::Domain(format!("z is {off:.3e} away from the local arc of x")));
    }
    let transport = sys.local_arc(z, kind.dual(), params.eps, params.resolution)?;
    let target = sys.local_arc(y, kind, params.eps, params.resolution)?;
    let pts = intersect(&transport, &target, params.tol)?;
    if pts.is_empty() {
        return Err(CwError::ModelFault("holonomy is empty although the local product structure applies".into()));
    }
    Ok(pts)
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyRectangle {
    #[serde(rename = "C")]
    pub c: MarkedContinuum,
    #[serde(rename = "Cprime")]
    pub c_prime: MarkedContinuum,
    #[serde(rename = "Cstar")]
    pub c_star: MarkedContinuum,
    #[serde(rename = "Cstarstar")]
    pub c_star_star: MarkedContinuum,
    /// p, q, p*, q*.
    pub corners: [Point; 4],
    pub branches: usize,
    /// D(C*) and D(C**) for the chosen branch.
    pub d_star: f64,
    pub d_star_star: f64,
    /// (D(C*), D(C**)) for every admissible branch.
    pub branch_values: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstruction {
    pub p: Point,
    pub q: Point,
    pub pstar: Point,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum RectangleOutcome {
    Built(Box<HolonomyRectangle>),
    Obstructed(Obstruction),
}

impl RectangleOutcome {
    pub fn built(self) -> Option<HolonomyRectangle> {
        match self {
            RectangleOutcome::Built(r) => Some(*r),
            RectangleOutcome::Obstructed(_) => None,
        }
    }
}

/// The joint-holonomy rectangle over C (stable, p → q) and C′ (unstable, p → p*),
/// choosing the q* branch that minimises max(D(C*), D(C**)).
pub fn build_rectangle(
    sys: &SystemModel,
    c: &MarkedContinuum,
    pstar: &Point,
    c_prime: &MarkedContinuum,
    params: &HolonomyParams,
    consts: &MetricConstants,
    depth: u32,
) -> Result<RectangleOutcome> {
    let (p, q) = (c.p(), c.q());
    let obstruct = |reason: String| {
        Ok(RectangleOutcome::Obstructed(Obstruction { p, q, pstar: *pstar, reason }))
    };
    for (pt, name) in [(&p, "p"), (pstar, "p*")] {
        let off = project(c_prime, pt).distance;
        if off > params.tol {
            return obstruct(format!("{name} is {off:.3e} away from C'"));
        }
    }
    let s_star = sys.local_arc(pstar, ArcKind::Stable, params.eps, params.resolution)?;
    let u_q = sys.local_arc(&q, ArcKind::Unstable, params.eps, params.resolution)?;
    let branches = intersect(&u_q, &s_star, params.tol)?;
    if branches.is_empty() {
        return obstruct("C^u(q) misses C^s(p*)".into());
    }
    let mut best: Option<(f64, HolonomyRectangle)> = None;
    let mut values = Vec::new();
    for qstar in &branches {
        let (cs, css) = match (subcontinuum(&s_star, pstar, qstar, params.tol), subcontinuum(&u_q, &q, qstar, params.tol)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => continue,
        };
        let ds = d_metric(sys, &cs, consts, depth)?.value;
        let dss = d_metric(sys, &css, consts, depth)?.value;
        let score = ds.max(dss);
        values.push((ds, dss));
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            let rect = HolonomyRectangle {
                c: c.clone(),
                c_prime: c_prime.clone(),
                c_star: cs,
                c_star_star: css,
                corners: [p, q, *pstar, *qstar],
                branches: branches.len(),
                d_star: ds,
                d_star_star: dss,
                branch_values: Vec::new(),
            };
            best = Some((score, rect));
        }
    }
    match best {
        Some((_, mut r)) => {
            r.branch_values = values;
            Ok(RectangleOutcome::Built(Box::new(r)))
        }
        None => obstruct("no branch yields subcontinua on both arcs".into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub gamma: f64,
    pub samples: usize,
    pub max_deviation_star: f64,
    pub max_deviation_star_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub model: String,
    pub samples: usize,
    pub built: usize,
    pub max_deviation: f64,
    /// Max deviation over all branches, not only the chosen one.
    pub worst_branch_deviation: f64,
    pub branch_histogram: Vec<(usize, usize)>,
    pub modulus: Vec<ModulusRow>,
    pub eta: f64,
    pub violations: usize,
    pub obstructions: Vec<Obstruction>,
    pub depth: u32,
}

#[derive(Debug, Clone, Copy)]
struct ProbeSample {
    d_c: f64,
    d_cp: f64,
    dev_star: f64,
    dev_star_star: f64,
    branch_worst: f64,
    branches: usize,
}

fn deviation(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den - 1.0).abs()
    }
}

/// Small stable C (p → q) and unstable C′ (p → p*) at a random base point.
pub fn sample_configuration(sys: &SystemModel, rng: &mut ChaCha8Rng, len_range: (f64, f64)) -> Result<(MarkedContinuum, Point, MarkedContinuum)> {
    let x = sys.point(rng.gen(), rng.gen());
    let (lo, hi) = (len_range.0.ln(), len_range.1.ln());
    let ls = rng.gen_range(lo..hi).exp();
    let lu = rng.gen_range(lo..hi).exp();
    let c = eigen_segment(sys, &x, ArcKind::Stable, ls, 0.0)?;
    let cp = eigen_segment(sys, &x, ArcKind::Unstable, lu, 0.0)?;
    let pstar = cp.q();
    Ok((c, pstar, cp))
}

fn probe_one(sys: &SystemModel, seed: u64, params: &HolonomyParams, consts: &MetricConstants, depth: u32, len_range: (f64, f64)) -> Result<std::result::Result<ProbeSample, Obstruction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, pstar, cp) = sample_configuration(sys, &mut rng, len_range)?;
    let d_c = d_metric(sys, &c, consts, depth)?.value;
    let d_cp = d_metric(sys, &cp, consts, depth)?.value;
    let rect = match build_rectangle(sys, &c, &pstar, &cp, params, consts, depth)? {
        RectangleOutcome::Built(r) => r,
        RectangleOutcome::Obstructed(o) => return Ok(Err(o)),
    };
    let dev_star = deviation(rect.d_star, d_c);
    let dev_star_star = deviation(rect.d_star_star, d_cp);
    let branch_worst = rect
        .branch_values
        .iter()
        .map(|&(a, b)| deviation(a, d_c).max(deviation(b, d_cp)))
        .fold(0.0, f64::max);
    Ok(Ok(ProbeSample {
        d_c,
        d_cp,
        dev_star,
        dev_star_star,
        branch_worst,
        branches: rect.branches,
    }))
}

pub const DEFAULT_GAMMA_GRID: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

pub const DEFAULT_LEN_RANGE: (f64, f64) = (1e-15, 1e-11);

/// Empirical pseudo-isometry moduli over random rectangles whose sides have
/// log-uniform lengths in `len_range`.
#[allow(clippy::too_many_arguments)]
pub fn pseudo_isometry_probe(
    sys: &SystemModel,
    sample_budget: usize,
    gamma_grid: &[f64],
    len_range: (f64, f64),
    params: &HolonomyParams,
    consts: &MetricConstants,
    depth: u32,
    seed: u64,
) -> Result<ProbeReport> {
    let eta = 1e-6;
    let results: Vec<_> = (0..sample_budget as u64)
        .into_par_iter()
        .map(|i| probe_one(sys, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i), params, consts, depth, len_range))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::new();
    let mut obstructions = Vec::new();
    for r in results {
        match r {
            Ok(s) => samples.push(s),
            Err(o) => obstructions.push(o),
        }
    }
    let mut modulus = Vec::new();
    for &gamma in gamma_grid {
        let below: Vec<&ProbeSample> = samples.iter().filter(|s| s.d_c <= gamma && s.d_cp <= gamma).collect();
        modulus.push(ModulusRow {
            gamma,
            samples: below.len(),
            max_deviation_star: below.iter().map(|s| s.dev_star).fold(0.0, f64::max),
            max_deviation_star_star: below.iter().map(|s| s.dev_star_star).fold(0.0, f64::max),
        });
    }
    let max_deviation = samples.iter().map(|s| s.dev_star.max(s.dev_star_star)).fold(0.0, f64::max);
    let worst_branch_deviation = samples.iter().map(|s| s.branch_worst).fold(0.0, f64::max);
    let mut hist: Vec<(usize, usize)> = Vec::new();
    for s in &samples {
        match hist.iter_mut().find(|(b, _)| *b == s.branches) {
            Some(e) => e.1 += 1,
            None => hist.push((s.branches, 1)),
        }
    }
    hist.sort();
    let violations = samples.iter().filter(|s| s.dev_star.max(s.dev_star_star) > eta).count();
    Ok(ProbeReport {
        model: sys.name().to_string(),
        samples: sample_budget,
        built: samples.len(),
        max_deviation,
        worst_branch_deviation,
        branch_histogram: hist,
        modulus,
        eta,
        violations,
        obstructions,
        depth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub samples: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub tol: f64,
}

/// Fraction of sampled stable holonomies with a branch satisfying D(C*) = D(C).
pub fn isometry_check(sys: &SystemModel, sample_budget: usize, params: &HolonomyParams, consts: &MetricConstants, depth: u32, seed: u64) -> Result<IsometryReport> {
    let tol = 1e-6;
    let ok: Vec<bool> = (0..sample_budget as u64)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i.wrapping_mul(0xA24B_AED4_963E_E407)));
            let (c, pstar, _) = sample_configuration(sys, &mut rng, DEFAULT_LEN_RANGE)?;
            let d_c = d_metric(sys, &c, consts, depth)?.value;
            let s_star = sys.local_arc(&pstar, ArcKind::Stable, params.eps, params.resolution)?;
            let u_q = sys.local_arc(&c.q(), ArcKind::Unstable, params.eps, params.resolution)?;
            for qstar in intersect(&u_q, &s_star, params.tol)? {
                if let Ok(cs) = subcontinuum(&s_star, &pstar, &qstar, params.tol) {
                    if deviation(d_metric(sys, &cs, consts, depth)?.value, d_c) <= tol {
                        return Ok(true);
                    }
                }
            }
            Ok(false)
        })
        .collect::<Result<Vec<_>>>()?;
    let successes = ok.iter().filter(|&&b| b).count();
    Ok(IsometryReport {
        samples: sample_budget,
        successes,
        success_rate: if sample_budget == 0 { 1.0 } else { successes as f64 / sample_budget as f64 },
        tol,
    })
}
