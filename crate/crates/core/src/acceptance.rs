//! The acceptance suite: each criterion is a deterministic check producing a
//! report with a pass/fail verdict and the numbers behind it.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chainrec::{self, Role, Verdict};
use crate::continua::{project, MarkedContinuum, DEFAULT_TOL};
use crate::cwmetric::{calibrate, d_metric, eigen_segment, evaluate, MetricConstants, Orbit};
use crate::error::{CwError, Result};
use crate::holonomy::{holonomy, pseudo_isometry_probe, HolonomyParams};
use crate::models::{lift_offset, ArcKind, Point, SystemModel};
use crate::periodic::{approximate_periodic, select_k, verify_periodic, GridOrbit, KatokParams};
use crate::registry::Registry;
use crate::sectors;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub depth: u32,
    pub calibration_budget: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: 7, depth: 2, calibration_budget: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
}

impl CriterionReport {
    fn new(id: &str, title: &str, passed: bool, summary: String, metrics: &[(&str, f64)]) -> Self {
        CriterionReport {
            id: id.to_string(),
            title: title.to_string(),
            passed,
            summary,
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn line(&self) -> String {
        format!("[{}] criterion {:<3} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.title, self.summary)
    }
}

/// Calibrated models shared by the criteria.
pub struct Context {
    pub cfg: SuiteConfig,
    pub cat: SystemModel,
    pub cat_consts: MetricConstants,
    pub pa: SystemModel,
    pub pa_consts: MetricConstants,
}

impl Context {
    pub fn new(cfg: SuiteConfig) -> Result<Self> {
        let cat = SystemModel::cat();
        let pa = SystemModel::sphere_pa();
        let cat_consts = calibrate(&cat, cat.c, cfg.calibration_budget)?;
        let pa_consts = calibrate(&pa, pa.c, cfg.calibration_budget)?;
        Ok(Context { cfg, cat, cat_consts, pa, pa_consts })
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        r.set_stream(stream);
        r
    }
}

pub trait Criterion: Send + Sync {
    fn title(&self) -> &'static str;
    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport>;
}

/// Random polyline with 2 to 5 vertices, log-uniform length in `len` (powers
/// of ten) and random marks; one in `singleton_every` is a singleton.
fn random_continuum(sys: &SystemModel, rng: &mut ChaCha8Rng, len: (f64, f64), singleton_every: u32) -> Result<MarkedContinuum> {
    let x = [rng.gen::<f64>(), rng.gen::<f64>()];
    if singleton_every > 0 && rng.gen_range(0..singleton_every) == 0 {
        return Ok(MarkedContinuum::singleton(sys.point(x[0], x[1])));
    }
    let total = 10f64.powf(rng.gen_range(len.0..len.1));
    let n = rng.gen_range(2..=5usize);
    let mut th = rng.gen_range(0.0..std::f64::consts::PI);
    let mut pts = vec![sys.point(x[0], x[1])];
    let mut at = x;
    for _ in 1..n {
        let step = total / (n - 1) as f64;
        at = [at[0] + step * th.cos(), at[1] + step * th.sin()];
        pts.push(sys.point(at[0], at[1]));
        th += rng.gen_range(-1.0..1.0);
    }
    let (p, q) = (rng.gen_range(0..n), rng.gen_range(0..n));
    MarkedContinuum::from_points(&pts, p, q)
}

fn metric_axioms(sys: &SystemModel, consts: &MetricConstants, depth: u32, rng: &mut ChaCha8Rng, samples: usize) -> Result<[usize; 5]> {
    let (mut negative, mut zero_nonsingleton, mut asym, mut subadd, mut nonzero_singleton) = (0, 0, 0, 0, 0);
    for _ in 0..samples {
        let c = random_continuum(sys, rng, (-8.0, -1.0), 25)?;
        let d = d_metric(sys, &c, consts, depth)?;
        if d.value < 0.0 {
            negative += 1;
        }
        if c.is_singleton() {
            nonzero_singleton += (d.value != 0.0) as usize;
            continue;
        }
        if d.value == 0.0 && !(d.truncated && d.tail_bound <= 1e-12) {
            zero_nonsingleton += 1;
        }
        if d_metric(sys, &c.swapped(), consts, depth)?.value != d.value {
            asym += 1;
        }
        let j = rng.gen_range(1..(1u32 << depth.max(1)));
        let b = j as f64 / (1u64 << depth.max(1)) as f64;
        let cut = c.with_cuts(&[b]);
        let ib = cut.params().iter().position(|&t| t == b).expect("dyadic cut vertex");
        let last = cut.len() - 1;
        let whole = cut.with_marks(0, last);
        let a = cut.slice(0, ib, 0, ib);
        let bb = cut.slice(ib, last, ib, last);
        let lhs = d_metric(sys, &whole, consts, depth)?.value;
        let rhs = d_metric(sys, &a, consts, depth)?.value + d_metric(sys, &bb, consts, depth)?.value;
        if lhs > rhs + 1e-9 {
            subadd += 1;
        }
    }
    Ok([negative, zero_nonsingleton, asym, subadd, nonzero_singleton])
}

struct MetricAxioms;

impl Criterion for MetricAxioms {
    fn title(&self) -> &'static str {
        "metric axioms"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let samples = 1000;
        let mut metrics = Vec::new();
        let mut bad = 0;
        for (name, sys, consts, stream) in [("cat", &ctx.cat, &ctx.cat_consts, 11), ("sphere-pA", &ctx.pa, &ctx.pa_consts, 12)] {
            let v = metric_axioms(sys, consts, ctx.cfg.depth, &mut ctx.rng(stream), samples)?;
            bad += v.iter().sum::<usize>();
            for (k, x) in ["negative", "zero_nonsingleton", "asymmetric", "subadditivity", "nonzero_singleton"].iter().zip(v) {
                metrics.push((format!("{name}.{k}"), x as f64));
            }
        }
        let m: Vec<(&str, f64)> = metrics.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        Ok(CriterionReport::new(id, self.title(), bad == 0, format!("{samples} continua per model, {bad} violations"), &m))
    }
}

struct HyperbolicDecay;

impl Criterion for HyperbolicDecay {
    fn title(&self) -> &'static str {
        "hyperbolic decay"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let (sys, consts) = (&ctx.cat, &ctx.cat_consts);
        let mut rng = ctx.rng(21);
        let per_kind = 500;
        let mut violations = 0;
        let mut worst = 0.0f64;
        for kind in [ArcKind::Stable, ArcKind::Unstable] {
            let sign = if kind == ArcKind::Stable { 1 } else { -1 };
            for _ in 0..per_kind {
                let x = sys.point(rng.gen(), rng.gen());
                let len = 10f64.powf(rng.gen_range(-10.0..-1.0));
                let c = eigen_segment(sys, &x, kind, len, rng.gen())?;
                let mut orbit = Orbit::new(sys, &c, consts, ctx.cfg.depth)?;
                let d0 = orbit.d(0)?.value;
                for n in 0..=10i64 {
                    let dn = orbit.d(sign * n)?.value;
                    let bound = 4.0 * consts.lambda.powi(-(n as i32)) * d0;
                    if dn > bound * (1.0 + 1e-12) {
                        violations += 1;
                    }
                    if bound > 0.0 {
                        worst = worst.max(dn / bound);
                    }
                }
            }
        }
        Ok(CriterionReport::new(
            id,
            self.title(),
            violations == 0,
            format!("{per_kind} stable + {per_kind} unstable continua, n = 0..10, {violations} violations, max D(f^n C)/(4 lambda^-n D(C)) = {worst:.4}"),
            &[("violations", violations as f64), ("max_ratio", worst)],
        ))
    }
}

struct SelfSimilarity;

impl Criterion for SelfSimilarity {
    fn title(&self) -> &'static str {
        "self-similarity"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let (sys, consts) = (&ctx.cat, &ctx.cat_consts);
        let lambda = consts.lambda;
        let tail = lambda.powi(-(consts.horizon as i32));
        let mut rng = ctx.rng(31);
        let target = 500;
        let (mut tested, mut attempts, mut bad_ss) = (0, 0, 0);
        let mut worst_ss = 0.0f64;
        while tested < target && attempts < 4 * target {
            attempts += 1;
            let c = random_continuum(sys, &mut rng, (-12.0, -4.0), 0)?;
            let mut orbit = Orbit::new(sys, &c, consts, ctx.cfg.depth)?;
            let d0 = orbit.d(0)?.value;
            if d0 > consts.xi || d0 == 0.0 {
                continue;
            }
            tested += 1;
            let m = orbit.d(1)?.value.max(orbit.d(-1)?.value);
            let err = (m - lambda * d0).abs();
            worst_ss = worst_ss.max(err / (lambda * d0));
            if err > 1e-6 * lambda * d0 + tail {
                bad_ss += 1;
            }
        }
        let (mut bad_scale, mut worst_scale) = (0, 0.0f64);
        for _ in 0..target {
            let x = sys.point(rng.gen(), rng.gen());
            let c = eigen_segment(sys, &x, ArcKind::Stable, 10f64.powf(rng.gen_range(-12.0..-4.0)), rng.gen())?;
            let mut orbit = Orbit::new(sys, &c, consts, ctx.cfg.depth)?;
            let d0 = orbit.d(0)?.value;
            for k in 1..=8 {
                let want = lambda.powi(-k) * d0;
                let err = (orbit.d(k as i64)?.value - want).abs();
                worst_scale = worst_scale.max(err / want);
                if err > 1e-6 * want + tail {
                    bad_scale += 1;
                }
            }
        }
        let passed = tested >= target && bad_ss == 0 && bad_scale == 0;
        Ok(CriterionReport::new(
            id,
            self.title(),
            passed,
            format!(
                "{tested} continua with D <= xi: {bad_ss} violations (max rel err {worst_ss:.1e}); {target} stable scalings k <= 8: {bad_scale} violations (max rel err {worst_scale:.1e})"
            ),
            &[
                ("tested", tested as f64),
                ("violations", bad_ss as f64),
                ("max_rel_err", worst_ss),
                ("scaling_violations", bad_scale as f64),
                ("scaling_max_rel_err", worst_scale),
            ],
        ))
    }
}

struct Sandwich;

impl Criterion for Sandwich {
    fn title(&self) -> &'static str {
        "P/rho/D sandwich"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let samples = 500;
        let slack = 1e-12;
        let mut bad = 0;
        let mut metrics = Vec::new();
        for (name, sys, consts, stream) in [("cat", &ctx.cat, &ctx.cat_consts, 41), ("sphere-pA", &ctx.pa, &ctx.pa_consts, 42)] {
            let mut rng = ctx.rng(stream);
            let mut v = 0;
            for _ in 0..samples {
                let c = random_continuum(sys, &mut rng, (-8.0, -1.0), 25)?;
                let r = evaluate(sys, &c, consts, ctx.cfg.depth)?;
                let ok = r.p <= r.rho * (1.0 + slack)
                    && r.rho <= 4.0 * r.p * (1.0 + slack)
                    && r.d >= r.d_prime * (1.0 - slack)
                    && r.d_prime >= r.p * (1.0 - slack)
                    && r.d_prime <= 1.0;
                v += (!ok) as usize;
            }
            bad += v;
            metrics.push((format!("{name}.violations"), v as f64));
        }
        let m: Vec<(&str, f64)> = metrics.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        Ok(CriterionReport::new(id, self.title(), bad == 0, format!("{samples} continua per model, {bad} violations"), &m))
    }
}

struct SelectK;

impl Criterion for SelectK {
    fn title(&self) -> &'static str {
        "select_k oracle"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let mut rng = ctx.rng(51);
        let (mut over, mut not_minimal) = (0, 0);
        let trials = 100;
        for _ in 0..trials {
            let a = rng.gen_range(1.01..20.0);
            let b = rng.gen_range(0.01..0.99);
            let eps = 10f64.powf(rng.gen_range(-8.0..0.0));
            let k = select_k(a, b, eps);
            let r = a * b.powi(k as i32);
            let (mut term, mut sum) = (1.0, 0.0);
            for _ in 1..=10_000 {
                term *= r;
                sum += term;
            }
            if sum > eps {
                over += 1;
            }
            if k > 1 {
                let r1 = a * b.powi(k as i32 - 1);
                if r1 < 1.0 && r1 / (1.0 - r1) <= eps {
                    not_minimal += 1;
                }
            }
        }
        Ok(CriterionReport::new(
            id,
            self.title(),
            over == 0 && not_minimal == 0,
            format!("{trials} triples: {over} partial sums above eps, {not_minimal} non-minimal k"),
            &[("sum_violations", over as f64), ("minimality_violations", not_minimal as f64)],
        ))
    }
}

/// Exact period of (i/n, j/n) under an integer matrix, by iteration mod n.
fn rational_period(m: [[i64; 2]; 2], v: [i64; 2], n: i64, max: u32) -> Option<u32> {
    let start = [v[0].rem_euclid(n), v[1].rem_euclid(n)];
    let mut w = start;
    for t in 1..=max {
        w = [(m[0][0] * w[0] + m[0][1] * w[1]).rem_euclid(n), (m[1][0] * w[0] + m[1][1] * w[1]).rem_euclid(n)];
        if w == start {
            return Some(t);
        }
    }
    None
}

/// The first rational point of denominator ≤ 200 within `tol` of q whose
/// period divides k.
fn rational_match(sys: &SystemModel, q: &Point, k: u32, tol: f64) -> Option<(i64, [i64; 2])> {
    let m = sys.hyperbolic()?.matrix;
    let [x, y] = q.coords();
    for n in 1..=200i64 {
        let v = [(x * n as f64).round() as i64, (y * n as f64).round() as i64];
        let cand = sys.rational(v, n as u64);
        if sys.distance(&cand, q).ok()? <= tol {
            if let Some(t) = rational_period(m, v, n, k) {
                if k % t == 0 {
                    return Some((n, v));
                }
            }
        }
    }
    None
}

struct PeriodicDensity;

impl Criterion for PeriodicDensity {
    fn title(&self) -> &'static str {
        "periodic density (seed grid)"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let (sys, consts) = (&ctx.cat, &ctx.cat_consts);
        let alpha = 1e-2;
        let kp = KatokParams::derive(sys, consts, alpha, None, ctx.cfg.depth)?;
        let start = Instant::now();
        let (mut ok, mut envelope_bad, mut oracle_bad) = (0, 0, 0);
        let mut worst_residual = 0.0f64;
        for i in 0..10 {
            for j in 0..10 {
                let p = sys.rational([i, j], 10);
                let Ok(rec) = approximate_periodic(sys, &p, &kp, consts, &GridOrbit, 20_000_000, 20) else { continue };
                let check = verify_periodic(sys, &rec.run.q, rec.k, 1e-9)?;
                worst_residual = worst_residual.max(check.residual);
                if !rec.run.envelope_ok {
                    envelope_bad += 1;
                }
                if rational_match(sys, &rec.run.q, rec.k, 1e-6).is_none() {
                    oracle_bad += 1;
                }
                if check.ok && rec.distance_to_p < alpha {
                    ok += 1;
                }
            }
        }
        let secs = start.elapsed().as_secs_f64();
        let passed = ok >= 95 && envelope_bad == 0 && oracle_bad == 0 && secs < 60.0;
        Ok(CriterionReport::new(
            id,
            self.title(),
            passed,
            format!(
                "{ok}/100 seeds periodic within alpha (k0 = {}), {envelope_bad} envelope failures, {oracle_bad} oracle mismatches, max residual {worst_residual:.1e}, within 60 s: {}",
                kp.k0,
                secs < 60.0
            ),
            &[
                ("successes", ok as f64),
                ("envelope_failures", envelope_bad as f64),
                ("oracle_mismatches", oracle_bad as f64),
                ("max_residual", worst_residual),
                ("k0", kp.k0 as f64),
            ],
        ))
    }
}

/// Unit eigenvectors (unstable, stable) and eigenvalues of an integer 2×2 matrix.
fn eigen_frame(m: [[i64; 2]; 2]) -> ([f64; 2], [f64; 2], f64, f64) {
    let [[a, b], [c, d]] = m.map(|r| r.map(|v| v as f64));
    let tr = a + d;
    let disc = (tr * tr - 4.0 * (a * d - b * c)).sqrt();
    let (mu_u, mu_s) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    let eig = |mu: f64| {
        let v = if b != 0.0 { [b, mu - a] } else { [mu - d, c] };
        let n = v[0].hypot(v[1]);
        [v[0] / n, v[1] / n]
    };
    (eig(mu_u), eig(mu_s), mu_u, mu_s)
}

/// The fixed point of f^k nearest y: with f^k(y) − y = a·e_u + b·e_s the
/// correction is a/(μ_u^k − 1)·e_u + b/(μ_s^k − 1)·e_s.
fn linear_fixed_point(sys: &SystemModel, y: &Point, k: u32) -> Result<Point> {
    let hyp = sys.hyperbolic().ok_or_else(|| CwError::Domain("linear oracle needs a matrix model".into()))?;
    let (eu, es, mu_u, mu_s) = eigen_frame(hyp.matrix);
    let fy = sys.iterate(y, k as i64)?;
    let d = sys.chart().rel(y.lift(), fy.lift());
    let det = eu[0] * es[1] - eu[1] * es[0];
    let a = (d[0] * es[1] - d[1] * es[0]) / det;
    let b = (eu[0] * d[1] - eu[1] * d[0]) / det;
    let (ca, cb) = (a / (mu_u.powi(k as i32) - 1.0), b / (mu_s.powi(k as i32) - 1.0));
    let e = [ca * eu[0] + cb * es[0], ca * eu[1] + cb * es[1]];
    Ok(Point::from_lift(sys.chart(), lift_offset(y.lift(), [-e[0], -e[1]])))
}

struct PeriodicGeneric;

impl Criterion for PeriodicGeneric {
    fn title(&self) -> &'static str {
        "periodic density (generic seeds)"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let (sys, consts) = (&ctx.cat, &ctx.cat_consts);
        let alpha = 1e-2;
        let kp = KatokParams::derive(sys, consts, alpha, None, ctx.cfg.depth)?;
        let mut rng = ctx.rng(61);
        let seeds = 8;
        let (mut ok, mut worst_oracle) = (0, 0.0f64);
        for _ in 0..seeds {
            let p = sys.point(rng.gen(), rng.gen());
            let Ok(rec) = approximate_periodic(sys, &p, &kp, consts, &GridOrbit, 20_000_000, 20) else { continue };
            let check = verify_periodic(sys, &rec.run.q, rec.k, 1e-9)?;
            let oracle = linear_fixed_point(sys, &rec.y, rec.k)?;
            let dev = sys.distance(&oracle, &rec.run.q)?;
            worst_oracle = worst_oracle.max(dev);
            if check.ok && rec.distance_to_p < alpha && rec.run.envelope_ok && dev <= 1e-9 {
                ok += 1;
            }
        }
        Ok(CriterionReport::new(
            id,
            self.title(),
            ok == seeds,
            format!("{ok}/{seeds} random seeds periodic within alpha with envelope, max distance to linear oracle {worst_oracle:.1e}"),
            &[("successes", ok as f64), ("max_oracle_distance", worst_oracle)],
        ))
    }
}

/// Closed-form holonomy on a linear model: the meet of the `dual` leaf through
/// z with the `kind` leaf through y, from a 2×2 solve in eigen-coordinates.
fn linear_holonomy(sys: &SystemModel, y: &Point, z: &Point, kind: ArcKind) -> Option<[f64; 2]> {
    let [[a, b], [c, d]] = sys.hyperbolic()?.matrix.map(|r| r.map(|v| v as f64));
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - 4.0 * det).sqrt();
    let eig = |mu: f64| if b != 0.0 { [b, mu - a] } else { [mu - d, c] };
    let (vu, vs) = (eig((tr + disc) / 2.0), eig((tr - disc) / 2.0));
    let (along, fixed) = match kind {
        ArcKind::Stable => (vu, vs),
        ArcKind::Unstable => (vs, vu),
    };
    let r = sys.chart().rel(z.lift(), y.lift());
    let t = (r[0] * fixed[1] - r[1] * fixed[0]) / (along[0] * fixed[1] - along[1] * fixed[0]);
    Some([t * along[0], t * along[1]])
}

struct HolonomyCorrectness;

impl Criterion for HolonomyCorrectness {
    fn title(&self) -> &'static str {
        "holonomy correctness"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let sys = &ctx.cat;
        let params = HolonomyParams::for_model(sys)?;
        let hyp = sys.hyperbolic().expect("cat map is hyperbolic");
        let mut rng = ctx.rng(71);
        let instances = 1000;
        let (mut bad, mut worst) = (0, 0.0f64);
        for i in 0..instances {
            let kind = if i % 2 == 0 { ArcKind::Stable } else { ArcKind::Unstable };
            let x = sys.point(rng.gen(), rng.gen());
            let r = params.delta * rng.gen_range(0.0..0.99);
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            let y = Point::from_lift(sys.chart(), lift_offset(x.lift(), [r * th.cos(), r * th.sin()]));
            let dir = if kind == ArcKind::Stable { hyp.e_s } else { hyp.e_u };
            let t = params.delta * rng.gen_range(-0.99..0.99);
            let z = Point::from_lift(sys.chart(), lift_offset(x.lift(), [t * dir[0], t * dir[1]]));
            let pts = holonomy(sys, &x, &y, &z, kind, &params)?;
            let want = linear_holonomy(sys, &y, &z, kind).expect("linear model");
            let expect = Point::from_lift(sys.chart(), lift_offset(z.lift(), want));
            let dev = pts.iter().map(|p| sys.chart().distance(p.lift(), expect.lift())).fold(f64::INFINITY, f64::min);
            worst = worst.max(dev);
            if pts.len() != 1 || dev > 1e-10 {
                bad += 1;
            }
        }
        let (verified, tried) = spine_holonomies(ctx)?;
        let passed = bad == 0 && verified >= 1;
        Ok(CriterionReport::new(
            id,
            self.title(),
            passed,
            format!("cat: {bad}/{instances} mismatches (max {worst:.1e}); sphere-pA: {verified}/{tried} spine instances with two verified points"),
            &[("cat_mismatches", bad as f64), ("cat_max_deviation", worst), ("pa_two_point_instances", verified as f64)],
        ))
    }
}

/// Holonomies next to each spine of the sphere map whose image has exactly two
/// points, each on both leaves and at its closed-form position.
fn spine_holonomies(ctx: &Context) -> Result<(usize, usize)> {
    let sys = &ctx.pa;
    let params = HolonomyParams::for_model(sys)?;
    let hyp = sys.hyperbolic().expect("sphere map is hyperbolic");
    let chart = sys.chart();
    let (mut verified, mut tried) = (0, 0);
    for w in sys.spine_lifts() {
        for (a, b) in [(1e-3, 2e-3), (-3e-3, 1e-3), (2e-3, -1.5e-3)] {
            tried += 1;
            let off = |u: f64, s: f64| [u * hyp.e_u[0] + s * hyp.e_s[0], u * hyp.e_u[1] + s * hyp.e_s[1]];
            let x = Point::from_lift(chart, lift_offset(w, off(a, b)));
            let y = Point::from_lift(chart, lift_offset(w, off(a + 4e-4, b - 3e-4)));
            let z = Point::from_lift(chart, lift_offset(w, off(a, b + 5e-4)));
            let pts = holonomy(sys, &x, &y, &z, ArcKind::Stable, &params)?;
            // C^u(z) is s = b + 5e-4 and C^s(y) is u = a + 4e-4; the fold adds (u, -s).
            let expect = [off(a + 4e-4, b + 5e-4), off(a + 4e-4, -(b + 5e-4))].map(|d| lift_offset(w, d));
            let transport = sys.local_arc(&z, ArcKind::Unstable, params.eps, params.resolution)?;
            let target = sys.local_arc(&y, ArcKind::Stable, params.eps, params.resolution)?;
            let on_leaves = pts.iter().all(|p| project(&transport, p).distance <= DEFAULT_TOL && project(&target, p).distance <= DEFAULT_TOL);
            let at_oracle = pts.iter().all(|p| expect.iter().any(|e| chart.distance(p.lift(), *e) <= 1e-10));
            if pts.len() == 2 && chart.distance(pts[0].lift(), pts[1].lift()) > 1e-9 && on_leaves && at_oracle {
                verified += 1;
            }
        }
    }
    Ok((verified, tried))
}

struct PseudoIsometry;

impl Criterion for PseudoIsometry {
    fn title(&self) -> &'static str {
        "pseudo-isometry probe"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let (sys, consts) = (&ctx.cat, &ctx.cat_consts);
        let params = HolonomyParams::for_model(sys)?;
        let gamma = 1e-3;
        let want = 10_000;
        let r = pseudo_isometry_probe(sys, want, &[gamma], (1e-16, 1e-13), &params, consts, ctx.cfg.depth, ctx.cfg.seed)?;
        let row = r.modulus[0];
        let dev = row.max_deviation_star.max(row.max_deviation_star_star);
        let passed = row.samples >= want && dev <= 1e-6;
        Ok(CriterionReport::new(
            id,
            self.title(),
            passed,
            format!("{} rectangles below gamma = {gamma:.0e} ({} obstructed), max ratio deviation {dev:.1e}", row.samples, r.obstructions.len()),
            &[("rectangles", row.samples as f64), ("max_deviation", dev), ("obstructed", r.obstructions.len() as f64)],
        ))
    }
}

struct ChainRecurrence;

impl Criterion for ChainRecurrence {
    fn title(&self) -> &'static str {
        "chain recurrence"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let mut parts = Vec::new();
        let mut metrics = Vec::new();
        let mut passed = true;
        for (name, sys) in [("cat", &ctx.cat), ("sphere-pA", &ctx.pa)] {
            for res in [64, 128, 256] {
                let r = chainrec::analyze(sys, res, 0.025)?;
                let ok = r.classes.len() == 1 && r.verdict == Verdict::TransitiveCandidate;
                passed &= ok;
                parts.push(format!("{name}@{res}: {}", r.classes.len()));
                metrics.push((format!("{name}.{res}.classes"), r.classes.len() as f64));
            }
        }
        let ns = SystemModel::north_south();
        for res in [128, 256] {
            let r = chainrec::analyze(&ns, res, 0.01)?;
            let ordered = r.classes.len() == 2
                && r.order.len() == 1
                && r.roles[r.order[0].0 as usize] == Role::Repeller
                && r.roles[r.order[0].1 as usize] == Role::Attractor;
            passed &= ordered;
            parts.push(format!("north-south@{res}: {}{}", r.classes.len(), if ordered { " (repeller < attractor)" } else { "" }));
            metrics.push((format!("north-south.{res}.classes"), r.classes.len() as f64));
        }
        let m: Vec<(&str, f64)> = metrics.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        Ok(CriterionReport::new(id, self.title(), passed, format!("classes {}", parts.join(", ")), &m))
    }
}

struct SectorGeometry;

impl Criterion for SectorGeometry {
    fn title(&self) -> &'static str {
        "sector geometry"
    }

    fn run(&self, id: &str, ctx: &Context) -> Result<CriterionReport> {
        let sys = &ctx.pa;
        let (res, eps) = (256, 0.05);
        let search = sectors::find_sectors(sys, &sectors::Region::whole(), eps, res, usize::MAX)?;
        let spines = sectors::enumerate_spines(sys, eps, res)?;
        let mut one_spine = 0;
        for s in &search.sectors {
            one_spine += (s.regular && sectors::spine_count(sys, s, &spines)? == 1) as usize;
        }
        let owners = sectors::spine_sectors(sys, &search.sectors, &spines)?;
        let (mut enclosed, mut param_ok, mut min_clearance, mut violations) = (0, 0, f64::INFINITY, 0);
        for i in owners.iter().flatten() {
            let s = &search.sectors[*i];
            if let Ok(e) = sectors::enclosing_sector(sys, s, 8) {
                if e.clearance > 0.0 {
                    enclosed += 1;
                    min_clearance = min_clearance.min(e.clearance);
                }
            }
            let p = sectors::sector_parametrization(sys, s, 33)?;
            violations += p.monotonicity_violations;
            param_ok += p.ok() as usize;
        }
        let cat_sectors = sectors::find_sectors(&ctx.cat, &sectors::Region::whole(), eps, 64, usize::MAX)?.sectors.len();
        let n = search.sectors.len();
        let passed = spines.len() == 4
            && n > 0
            && one_spine == n
            && search.indeterminate == 0
            && owners.iter().all(|o| o.is_some())
            && enclosed == spines.len()
            && param_ok == spines.len()
            && cat_sectors == 0;
        Ok(CriterionReport::new(
            id,
            self.title(),
            passed,
            format!(
                "{} spines; {one_spine}/{n} sectors regular with one spine; {enclosed}/4 enclosed (min clearance {min_clearance:.1e}); {param_ok}/4 parametrizations clean ({violations} monotonicity violations); cat sectors {cat_sectors}",
                spines.len()
            ),
            &[
                ("spines", spines.len() as f64),
                ("sectors", n as f64),
                ("regular_one_spine", one_spine as f64),
                ("enclosed", enclosed as f64),
                ("min_clearance", min_clearance),
                ("monotonicity_violations", violations as f64),
                ("cat_sectors", cat_sectors as f64),
            ],
        ))
    }
}

pub fn criterion_registry() -> Registry<dyn Criterion> {
    let mut r: Registry<dyn Criterion> = Registry::new("criterion");
    r.register("1", Box::new(MetricAxioms));
    r.register("2", Box::new(HyperbolicDecay));
    r.register("3", Box::new(SelfSimilarity));
    r.register("4", Box::new(Sandwich));
    r.register("5", Box::new(SelectK));
    r.register("6", Box::new(PeriodicDensity));
    r.register("6b", Box::new(PeriodicGeneric));
    r.register("7", Box::new(HolonomyCorrectness));
    r.register("8", Box::new(PseudoIsometry));
    r.register("9", Box::new(ChainRecurrence));
    r.register("10", Box::new(SectorGeometry));
    r
}

pub const REPRODUCIBILITY: &str = "11";

/// Criterion ids for a suite name: `all`, or a comma-separated id list.
pub fn suite_ids(suite: &str) -> Result<Vec<String>> {
    let reg = criterion_registry();
    if suite == "all" {
        let mut ids: Vec<String> = reg.names().iter().map(|s| s.to_string()).collect();
        ids.push(REPRODUCIBILITY.to_string());
        return Ok(ids);
    }
    suite
        .split(',')
        .map(|s| s.trim())
        .map(|s| {
            if s != REPRODUCIBILITY {
                reg.get(s)?;
            }
            Ok(s.to_string())
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteRun {
    pub reports: Vec<CriterionReport>,
    /// Wall-clock seconds per criterion; kept apart from the reports.
    pub timings: Vec<(String, f64)>,
}

impl SuiteRun {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<&CriterionReport> {
        self.reports.iter().filter(|r| !r.passed).collect()
    }
}

fn run_once(ids: &[String], ctx: &Context, progress: &mut dyn FnMut(&CriterionReport, f64)) -> Result<SuiteRun> {
    let reg = criterion_registry();
    let mut run = SuiteRun { reports: Vec::new(), timings: Vec::new() };
    for id in ids.iter().filter(|i| *i != REPRODUCIBILITY) {
        let start = Instant::now();
        let c = reg.get(id)?;
        let report = c.run(id, ctx)?;
        let secs = start.elapsed().as_secs_f64();
        progress(&report, secs);
        run.timings.push((id.clone(), secs));
        run.reports.push(report);
    }
    Ok(run)
}

/// Runs the given criteria; the reproducibility criterion reruns the others
/// with the same configuration and compares serialized report bodies.
pub fn run_suite(ids: &[String], cfg: SuiteConfig, progress: &mut dyn FnMut(&CriterionReport, f64)) -> Result<SuiteRun> {
    let ctx = Context::new(cfg)?;
    let mut run = run_once(ids, &ctx, progress)?;
    if ids.iter().any(|i| i == REPRODUCIBILITY) {
        let start = Instant::now();
        let again = run_once(ids, &Context::new(cfg)?, &mut |_, _| {})?;
        let a = serde_json::to_string(&run.reports).map_err(|e| CwError::Domain(e.to_string()))?;
        let b = serde_json::to_string(&again.reports).map_err(|e| CwError::Domain(e.to_string()))?;
        let same = a == b;
        let report = CriterionReport::new(
            REPRODUCIBILITY,
            "reproducibility",
            same,
            format!("second run with seed {} {} the report bodies ({} criteria)", cfg.seed, if same { "reproduces" } else { "differs from" }, again.reports.len()),
            &[("identical", same as u8 as f64)],
        );
        let secs = start.elapsed().as_secs_f64();
        progress(&report, secs);
        run.timings.push((REPRODUCIBILITY.to_string(), secs));
        run.reports.push(report);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_period_of_fixed_point() {
        assert_eq!(rational_period([[2, 1], [1, 1]], [0, 0], 7, 10), Some(1));
        assert_eq!(rational_period([[2, 1], [1, 1]], [1, 2], 5, 10), Some(2));
    }

    #[test]
    fn suite_ids_expand() {
        assert_eq!(suite_ids("all").unwrap().len(), 12);
        assert_eq!(suite_ids("5,6b").unwrap(), vec!["5", "6b"]);
        assert!(suite_ids("12").is_err());
    }

    #[test]
    fn linear_fixed_point_of_a_periodic_seed() {
        let sys = SystemModel::cat();
        let p = sys.rational([1, 2], 5);
        let q = linear_fixed_point(&sys, &p, 2).unwrap();
        assert!(sys.distance(&p, &q).unwrap() < 1e-15);
    }
}
