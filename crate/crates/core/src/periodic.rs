//! Exponent selection and the rectangle iteration that converges to periodic points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continua::{intersect, MarkedContinuum, DEFAULT_TOL};
use crate::cwmetric::{d_metric, eigen_segment, DReport, MetricConstants};
use crate::error::{CwError, Result};
use crate::holonomy::{build_rectangle, lps_radius, HolonomyParams, RectangleOutcome};
use crate::models::{lift_offset, ArcKind, Point, SystemModel};
use crate::registry::Registry;

/// Smallest k ≥ 1 with r = a·b^k < 1 and r/(1 − r) ≤ eps.
pub fn select_k(a: f64, b: f64, eps: f64) -> u32 {
    assert!(a > 1.0 && b > 0.0 && b < 1.0 && eps > 0.0);
    let mut k = ((-a.ln() / b.ln()).floor() as u32).max(1);
    loop {
        let r = a * b.powi(k as i32);
        if r < 1.0 && r / (1.0 - r) <= eps {
            return k;
        }
        k += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KatokParams {
    pub alpha_target: f64,
    pub c: f64,
    pub eps: f64,
    pub delta_prime: f64,
    pub delta: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Largest D over continua of diameter ≤ 2ε; bounds D of the initial pieces.
    pub d_cap: f64,
    pub k0: u32,
    /// Return time in use; k0 until a return is found.
    pub k: u32,
    pub depth: u32,
}

impl KatokParams {
    pub fn derive(sys: &SystemModel, consts: &MetricConstants, alpha_target: f64, gamma: Option<f64>, depth: u32) -> Result<Self> {
        if !(alpha_target > 0.0 && alpha_target < 2.0 * sys.c) {
            return Err(CwError::Domain(format!("alpha = {alpha_target} outside (0, 2c)")));
        }
        let c = 0.9 * alpha_target / 2.0;
        let eps = 0.9 * c / 2.0;
        let delta_prime = lps_radius(sys, eps, 6, 8)?.min(eps * 0.999);
        let delta = delta_prime / 2.0;
        let gamma = gamma.unwrap_or(0.9 * delta / 2.0);
        if !(gamma > 0.0 && gamma < delta / 2.0) {
            return Err(CwError::Domain(format!("gamma = {gamma} outside (0, delta/2)")));
        }
        let samples = size_ladder(sys, 2.0 * eps)?;
        let mut d_cap = 0.0f64;
        let mut ladder = Vec::with_capacity(samples.len());
        for s in &samples {
            let d = d_metric(sys, s, consts, depth)?.value;
            if s.diameter() <= 2.0 * eps {
                d_cap = d_cap.max(d);
            }
            ladder.push((s.diameter(), d));
        }
        let mut beta = 0.9 * gamma / 3.0;
        while ladder.iter().any(|&(diam, d)| d <= 3.0 * beta && diam > gamma) {
            beta /= 2.0;
        }
        let lambda = consts.lambda;
        let geometric = select_k((1.0 + delta).powi(2) * 4.0, 1.0 / lambda, beta);
        let mut contract = 1;
        while 4.0 * lambda.powi(-(contract as i32)) * d_cap > beta {
            contract += 1;
        }
        Ok(KatokParams { alpha_target, c, eps, delta_prime, delta, gamma, beta, d_cap, k0: geometric.max(contract), k: geometric.max(contract), depth })
    }

    pub fn holonomy_params(&self) -> HolonomyParams {
        HolonomyParams { eps: self.eps, delta: self.delta, tol: DEFAULT_TOL, resolution: 3 }
    }
}

/// Eigen and oblique segments of geometrically spaced lengths up to `top`.
fn size_ladder(sys: &SystemModel, top: f64) -> Result<Vec<MarkedContinuum>> {
    let mut out = Vec::new();
    let bases = [sys.point(0.137, 0.291), sys.point(0.613, 0.477)];
    let mut len = top;
    while len > top * 1e-6 {
        for x in &bases {
            out.push(eigen_segment(sys, x, ArcKind::Stable, len, 0.5)?);
            out.push(eigen_segment(sys, x, ArcKind::Unstable, len, 0.5)?);
            let [u, v] = x.coords();
            for th in [0.3f64, 1.1, 2.0] {
                let (dx, dy) = (th.cos() * len / 2.0, th.sin() * len / 2.0);
                out.push(MarkedContinuum::segment(sys.point(u - dx, v - dy), sys.point(u + dx, v + dy))?);
            }
        }
        len /= 2.0;
    }
    Ok(out)
}

/// Strategy for finding y near p and k ≥ k_min with f^k(y) near p.
pub trait ReturnFinder: Send + Sync {
    fn find(&self, sys: &SystemModel, p: &Point, bound: f64, k_min: u32, budget: usize) -> Result<(Point, u32)>;
}

/// Exact return of p itself, else a scan of a local grid of starting points.
pub struct GridOrbit;

impl ReturnFinder for GridOrbit {
    fn find(&self, sys: &SystemModel, p: &Point, bound: f64, k_min: u32, budget: usize) -> Result<(Point, u32)> {
        let h = sys.horizon;
        if k_min > h {
            return Err(CwError::SearchFailure(format!("k_min = {k_min} exceeds the horizon {h}")));
        }
        let chart = sys.chart();
        if let Some(period) = exact_period(sys, p) {
            let k = period * k_min.div_ceil(period).max(1);
            if k <= h {
                return Ok((*p, k));
            }
        }
        let ks = (h - k_min + 1) as usize;
        let g = (((budget / ks) as f64).sqrt() as usize).max(2);
        let half = bound / std::f64::consts::SQRT_2 * 0.999;
        let rows: Vec<Option<(f64, u32, Point)>> = (0..g)
            .into_par_iter()
            .map(|i| {
                let mut best: Option<(f64, u32, Point)> = None;
                for j in 0..g {
                    let off = [half * (2.0 * i as f64 / (g - 1) as f64 - 1.0), half * (2.0 * j as f64 / (g - 1) as f64 - 1.0)];
                    let y = Point::from_lift(chart, lift_offset(p.lift(), off));
                    let dy = chart.distance(y.lift(), p.lift());
                    if dy >= bound {
                        continue;
                    }
                    let mut img = sys.map_lift(y.lift(), k_min as i64);
                    for k in k_min..=h {
                        let score = dy.max(chart.distance(img, p.lift()));
                        if score < bound && best.map_or(true, |(s, bk, _)| (score, k) < (s, bk)) {
                            best = Some((score, k, y));
                        }
                        img = sys.map_lift(img, 1);
                    }
                }
                best
            })
            .collect();
        rows.into_iter()
            .flatten()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, k, y)| (y, k))
            .ok_or_else(|| CwError::SearchFailure(format!("no return within {bound:.3e} for k in [{k_min}, {h}] over a {g}x{g} grid")))
    }
}

/// Least t ≤ horizon with f^t(p) = p to within 1e-15, stepping one iterate at a time.
pub fn exact_period(sys: &SystemModel, p: &Point) -> Option<u32> {
    let mut img = p.lift();
    (1..=sys.horizon).find(|_| {
        img = sys.map_lift(img, 1);
        sys.chart().distance(img, p.lift()) < 1e-15
    })
}

/// Rational points i/n near p whose exact period has a multiple in [k_min, horizon].
pub struct RationalLattice;

impl ReturnFinder for RationalLattice {
    fn find(&self, sys: &SystemModel, p: &Point, bound: f64, k_min: u32, budget: usize) -> Result<(Point, u32)> {
        let h = sys.horizon;
        let chart = sys.chart();
        let [px, py] = p.coords();
        let mut spent = 0usize;
        for n in 1..=4096u32 {
            let nf = n as f64;
            let r = (bound * nf).ceil() as i64;
            for di in -r..=r {
                for dj in -r..=r {
                    let y = sys.point(((px * nf).round() + di as f64) / nf, ((py * nf).round() + dj as f64) / nf);
                    if chart.distance(y.lift(), p.lift()) >= bound {
                        continue;
                    }
                    spent += 1;
                    if spent > budget {
                        return Err(CwError::SearchFailure(format!("budget {budget} exhausted at denominator {n}")));
                    }
                    if let Some(period) = exact_period(sys, &y) {
                        let k = period * k_min.div_ceil(period).max(1);
                        if k <= h {
                            return Ok((y, k));
                        }
                    }
                }
            }
        }
        Err(CwError::SearchFailure("no rational return found".into()))
    }
}

pub fn finder_registry() -> Registry<dyn ReturnFinder> {
    let mut r: Registry<dyn ReturnFinder> = Registry::new("return finder");
    r.register("grid-orbit", Box::new(GridOrbit));
    r.register("rational-lattice", Box::new(RationalLattice));
    r
}

pub fn find_return(sys: &SystemModel, p: &Point, bound: f64, k_min: u32, search_budget: usize) -> Result<(Point, u32)> {
    GridOrbit.find(sys, p, bound, k_min, search_budget)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCheck {
    pub ok: bool,
    pub residual: f64,
}

pub fn verify_periodic(sys: &SystemModel, q: &Point, k: u32, tol: f64) -> Result<PeriodicCheck> {
    let residual = sys.distance(q, &sys.iterate(q, k as i64)?)?;
    Ok(PeriodicCheck { ok: residual < tol, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatokStep {
    pub n: u32,
    pub y: Point,
    /// d(y_n, f^k(y_n)).
    pub residual: f64,
    /// D(F_n); absent for n = 0.
    pub d_f: Option<f64>,
    /// F_n is too small for its first large iterate to lie within the level horizon.
    pub d_f_truncated: bool,
    pub envelope: f64,
    pub envelope_ok: bool,
    pub branches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeViolation {
    pub n: u32,
    pub d_f: f64,
    pub envelope: f64,
    pub f: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatokRun {
    pub k: u32,
    pub steps: Vec<KatokStep>,
    pub q: Point,
    pub residual: f64,
    pub converged: bool,
    pub envelope_ok: bool,
    pub violations: Vec<EnvelopeViolation>,
}

pub const STOP_TOL: f64 = 1e-15;
pub const CAUCHY_TOL: f64 = 1e-13;

fn one_point(sys: &SystemModel, a: &Point, a_kind: ArcKind, b: &Point, eps: f64) -> Result<Vec<Point>> {
    let arc_a = sys.local_arc(a, a_kind, eps, 3)?;
    let arc_b = sys.local_arc(b, a_kind.dual(), eps, 3)?;
    intersect(&arc_a, &arc_b, DEFAULT_TOL)
}

/// Runs the rectangle iteration from (y, k) until y_n is k-periodic to within
/// [`STOP_TOL`], the sequence is Cauchy, or `max_steps` is reached.
pub fn katok_iterate(sys: &SystemModel, y: &Point, k: u32, params: &KatokParams, consts: &MetricConstants, max_steps: u32) -> Result<KatokRun> {
    let kk = k as i64;
    let hp = params.holonomy_params();
    let growth = (1.0 + params.delta).powi(2) * 4.0 * consts.lambda.powi(-(k as i32));
    let mut steps = Vec::new();
    let mut violations = Vec::new();
    let mut yn = *y;
    let mut fy = sys.iterate(&yn, kk)?;
    let mut residual = sys.distance(&yn, &fy)?;
    steps.push(KatokStep { n: 0, y: yn, residual, d_f: None, d_f_truncated: false, envelope: params.d_cap, envelope_ok: true, branches: 1 });
    if residual >= params.delta {
        return Err(CwError::Domain(format!("d(y, f^k y) = {residual:.3e} is not below delta")));
    }
    let mut z_prev: Option<Point> = None;
    let mut calm = 0;
    let mut n = 0;
    while residual >= STOP_TOL && n < max_steps && calm < 3 {
        // z_n ∈ C^u(f^k y_n) ∩ C^s(y_n), via the joint rectangle once z_{n-1} exists.
        let (z_guess, branches) = match z_prev {
            None => {
                let zs = one_point(sys, &fy, ArcKind::Unstable, &yn, params.eps)?;
                let z = *zs.first().ok_or_else(|| CwError::ModelFault("C^u(f^k y) misses C^s(y)".into()))?;
                (z, zs.len())
            }
            Some(zp) => {
                let c = MarkedContinuum::segment(zp, fy)?;
                let cp = MarkedContinuum::segment(zp, yn)?;
                match build_rectangle(sys, &c, &yn, &cp, &hp, consts, params.depth)? {
                    RectangleOutcome::Built(r) => (r.corners[3], r.branches),
                    RectangleOutcome::Obstructed(o) => return Err(CwError::ModelFault(format!("rectangle obstruction: {}", o.reason))),
                }
            }
        };
        // z_n is pushed forward by f^k, so it must sit exactly on the stable leaf of y_n.
        let zn = sys.leaf_meet(&fy, &yn, &z_guess, ArcKind::Stable)?;
        let fz = sys.iterate(&zn, kk)?;
        let candidates = one_point(sys, &fz, ArcKind::Unstable, &zn, params.eps)?;
        if candidates.is_empty() {
            return Err(CwError::ModelFault("C^u(f^k z) misses C^s(z)".into()));
        }
        let mut best: Option<(DReport, Point, MarkedContinuum)> = None;
        for guess in &candidates {
            let (yp, next) = sys.meet_pullback(&fz, &zn, guess, kk)?;
            let f = MarkedContinuum::from_points(&[yp, zn, next], 0, 2)?;
            let d = d_metric(sys, &f, consts, params.depth)?;
            if best.as_ref().map_or(true, |(bd, _, _)| d.value < bd.value) {
                best = Some((d, next, f));
            }
        }
        let (report, next, f) = best.unwrap();
        let d_f = report.value;
        n += 1;
        let envelope = growth.powi(n as i32) * params.d_cap;
        let ok = d_f <= envelope;
        if !ok {
            violations.push(EnvelopeViolation { n, d_f, envelope, f: f.vertices().iter().map(|p| p.coords()).collect() });
        }
        let step = sys.distance(&next, &yn)?;
        calm = if step < CAUCHY_TOL { calm + 1 } else { 0 };
        yn = next;
        fy = sys.iterate(&yn, kk)?;
        residual = sys.distance(&yn, &fy)?;
        steps.push(KatokStep { n, y: yn, residual, d_f: Some(d_f), d_f_truncated: report.truncated, envelope, envelope_ok: ok, branches: branches.max(candidates.len()) });
        z_prev = Some(zn);
    }
    Ok(KatokRun {
        k,
        q: yn,
        residual,
        converged: residual < STOP_TOL || calm >= 3,
        envelope_ok: violations.is_empty(),
        violations,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicRecord {
    pub p: Point,
    pub params: KatokParams,
    pub y: Point,
    pub k: u32,
    pub run: KatokRun,
    pub distance_to_p: f64,
}

/// Full pipeline for one seed: find a return, run the iteration, certify.
pub fn approximate_periodic(
    sys: &SystemModel,
    p: &Point,
    params: &KatokParams,
    consts: &MetricConstants,
    finder: &dyn ReturnFinder,
    search_budget: usize,
    max_steps: u32,
) -> Result<PeriodicRecord> {
    let (y, k) = finder.find(sys, p, params.delta / 2.0, params.k0, search_budget)?;
    let params = KatokParams { k, ..*params };
    let run = katok_iterate(sys, &y, k, &params, consts, max_steps)?;
    let distance_to_p = sys.distance(&run.q, p)?;
    Ok(PeriodicRecord { p: *p, params, y, k, run, distance_to_p })
}
