//! The self-similar hyperbolic cw-metric: calibration, N, ρ, P, D′ and D.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continua::{image_indexed, image_with_budget, MarkedContinuum, VERTEX_BUDGET};
use crate::error::{CwError, Result};
use crate::models::{norm, ArcKind, Lift, Point, SystemModel};
use crate::registry::Registry;

pub const MAX_DEPTH: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConstants {
    pub c: f64,
    pub m: u32,
    pub alpha: f64,
    pub n0: u32,
    pub k: f64,
    pub lambda: f64,
    pub xi: f64,
    pub horizon: u32,
}

impl MetricConstants {
    /// Derives the remaining constants from c and m.
    pub fn from_m(c: f64, m: u32) -> Self {
        let alpha = 2f64.powf(1.0 / m as f64);
        // alpha^n0 = 2^(n0/m) exceeds 4 exactly when n0 > 2m.
        let n0 = 2 * m + 1;
        let k = 2f64.powf(n0 as f64 / m as f64) / 4.0;
        let lambda = k.powf(1.0 / n0 as f64);
        let xi = 1.0 / (4.0 * alpha * lambda.powi(n0 as i32 - 1));
        let horizon = (12.0 * std::f64::consts::LN_10 / lambda.ln()).ceil() as u32;
        MetricConstants { c, m, alpha, n0, k, lambda, xi, horizon }
    }

    pub fn tail_bound(&self) -> f64 {
        self.lambda.powi(-(self.horizon as i32))
    }
}

/// N(C): the least |n| with diam(f^n C) > c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapN {
    Finite(u32),
    /// Singleton continuum.
    Infinite,
    /// No admissible iterate within the level horizon; treated as infinite.
    BeyondHorizon,
}

impl CapN {
    pub fn rho(self, alpha: f64) -> f64 {
        match self {
            CapN::Finite(n) => alpha.powi(-(n as i32)),
            _ => 0.0,
        }
    }
}

/// A structured or random family of continua used to search for m.
pub trait ContinuumSampler: Send + Sync {
    fn sample(&self, sys: &SystemModel, c: f64, budget: usize, seed: u64) -> Result<Vec<MarkedContinuum>>;
}

fn straight(sys: &SystemModel, center: [f64; 2], dir: [f64; 2], half: f64) -> Result<MarkedContinuum> {
    let pieces = ((2.0 * half / 0.2).ceil() as usize).max(1);
    let pts: Vec<Point> = (0..=pieces)
        .map(|i| {
            let t = -half + 2.0 * half * i as f64 / pieces as f64;
            sys.point(center[0] + t * dir[0], center[1] + t * dir[1])
        })
        .collect();
    MarkedContinuum::from_points(&pts, 0, pieces)
}

/// Eigen-direction segments centred on a dyadic grid, plus random centres.
pub struct EigenArcs;

impl ContinuumSampler for EigenArcs {
    fn sample(&self, sys: &SystemModel, c: f64, budget: usize, seed: u64) -> Result<Vec<MarkedContinuum>> {
        let hyp = sys
            .hyperbolic()
            .ok_or_else(|| CwError::Calibration(format!("{} has no eigen-directions", sys.name())))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(budget);
        let grid = 8;
        let mut i = 0usize;
        while out.len() < budget {
            let center = if i < grid * grid {
                [(i % grid) as f64 / grid as f64, (i / grid) as f64 / grid as f64]
            } else {
                [rng.gen::<f64>(), rng.gen::<f64>()]
            };
            let dir = if i % 2 == 0 { hyp.e_u } else { hyp.e_s };
            let half = rng.gen_range(c / 4.0..c / 2.0) * 1.0001;
            out.push(straight(sys, center, dir, half)?);
            i += 1;
        }
        Ok(out)
    }
}

/// Straight segments with random centre, direction and length.
pub struct Segments;

impl ContinuumSampler for Segments {
    fn sample(&self, sys: &SystemModel, c: f64, budget: usize, seed: u64) -> Result<Vec<MarkedContinuum>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..budget)
            .map(|_| {
                let center = [rng.gen::<f64>(), rng.gen::<f64>()];
                let th = rng.gen_range(0.0..std::f64::consts::PI);
                let half = rng.gen_range(c / 4.0..c / 2.0) * 1.0001;
                straight(sys, center, [th.cos(), th.sin()], half)
            })
            .collect()
    }
}

pub fn sampler_registry() -> Registry<dyn ContinuumSampler> {
    let mut r: Registry<dyn ContinuumSampler> = Registry::new("sampler");
    r.register("eigen-arcs", Box::new(EigenArcs));
    r.register("segments", Box::new(Segments));
    r
}

pub fn calibrate(sys: &SystemModel, c: f64, sample_budget: usize) -> Result<MetricConstants> {
    calibrate_with(sys, c, sample_budget, "eigen-arcs", 0)
}

pub fn calibrate_with(sys: &SystemModel, c: f64, sample_budget: usize, sampler: &str, seed: u64) -> Result<MetricConstants> {
    if !(c > 0.0 && c <= sys.c) {
        return Err(CwError::Calibration(format!("c = {c} must lie in (0, {}]", sys.c)));
    }
    let registry = sampler_registry();
    let samples = registry.get(sampler)?.sample(sys, c, sample_budget, seed)?;
    let mut m = 0u32;
    let mut used = 0usize;
    for s in samples.iter().filter(|s| s.diameter() > c / 2.0) {
        used += 1;
        let mut reached = None;
        'scan: for n in 0..=sys.horizon as i64 {
            for sign in [1, -1] {
                let img = crate::continua::image(sys, s, sign * n)?;
                if img.diameter() > c {
                    reached = Some(n as u32);
                    break 'scan;
                }
            }
        }
        match reached {
            Some(n) => m = m.max(n),
            None => {
                return Err(CwError::Calibration(format!(
                    "a continuum of diameter {:.4} never exceeds c within the horizon",
                    s.diameter()
                )))
            }
        }
    }
    if used == 0 {
        return Err(CwError::Calibration("no sample exceeded c/2".into()));
    }
    Ok(MetricConstants::from_m(c, m.max(1)))
}

struct Level {
    cont: MarkedContinuum,
    cuts: Vec<usize>,
    /// For each cut a, the first cut b > a with diam(piece a..b) > c, else cuts.len().
    thresholds: Vec<usize>,
}

fn range_exceeds(sys: &SystemModel, lifts: &[Lift], coords: &[[f64; 2]], lo: usize, hi: usize, c: f64) -> bool {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &coords[lo..=hi] {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    if norm([x1 - x0, y1 - y0]) <= c {
        return false;
    }
    let chart = sys.chart();
    (lo..=hi).any(|j| (lo..j).any(|i| chart.distance(lifts[i], lifts[j]) > c))
}

fn new_exceeds(sys: &SystemModel, lifts: &[Lift], lo: usize, from: usize, to: usize, c: f64) -> bool {
    let chart = sys.chart();
    (from..=to).any(|j| (lo..j).any(|i| chart.distance(lifts[i], lifts[j]) > c))
}

impl Level {
    fn new(sys: &SystemModel, cont: MarkedContinuum, cuts: Vec<usize>, c: f64) -> Self {
        let coords = cont.unwrapped();
        let lifts = cont.lifts();
        let k = cuts.len();
        let mut thresholds = vec![k; k];
        let mut prev = 1;
        for a in 0..k.saturating_sub(1) {
            let mut b = prev.max(a + 1);
            if b < k && !range_exceeds(sys, lifts, &coords, cuts[a], cuts[b], c) {
                b += 1;
                while b < k && !new_exceeds(sys, lifts, cuts[a], cuts[b - 1] + 1, cuts[b], c) {
                    b += 1;
                }
            }
            thresholds[a] = b;
            prev = b;
        }
        Level { cont, cuts, thresholds }
    }
}

/// Orbit of a marked continuum with a fixed dyadic cut grid, caching levels
/// f^L(C) and the P-values computed on them.
pub struct Orbit<'a> {
    sys: &'a SystemModel,
    consts: &'a MetricConstants,
    singleton: bool,
    fwd: Vec<Level>,
    bwd: Vec<Level>,
    p_cache: HashMap<i64, f64>,
    budget: usize,
    /// First forward/backward level index whose image exceeded the budget.
    fwd_cap: usize,
    bwd_cap: usize,
}

fn cut_vertices(c: &MarkedContinuum, grid: &[f64]) -> Vec<usize> {
    let params = c.params();
    let mut cuts = vec![0];
    for &g in grid {
        let i = params.partition_point(|&t| t < g);
        if i > *cuts.last().unwrap() && i < c.len() - 1 {
            cuts.push(i);
        }
    }
    if c.len() > 1 {
        cuts.push(c.len() - 1);
    }
    cuts
}

impl<'a> Orbit<'a> {
    pub fn new(sys: &'a SystemModel, c: &MarkedContinuum, consts: &'a MetricConstants, depth: u32) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(CwError::Domain(format!("subdivision depth {depth} exceeds {MAX_DEPTH}")));
        }
        if c.chart() != sys.chart() {
            return Err(CwError::ChartMismatch(c.chart(), sys.chart()));
        }
        let singleton = c.is_singleton();
        let params = c.params();
        let (lo, hi) = (params[0], params[params.len() - 1]);
        let scale = (1u64 << depth) as f64;
        let grid: Vec<f64> = ((lo * scale).floor() as i64 + 1..=(hi * scale).ceil() as i64 - 1)
            .map(|k| k as f64 / scale)
            .filter(|&g| g > lo && g < hi)
            .collect();
        let base = c.with_cuts(&grid);
        let cuts = cut_vertices(&base, &grid);
        let level0 = Level::new(sys, base, cuts, consts.c);
        Ok(Orbit { sys, consts, singleton, fwd: vec![level0], bwd: Vec::new(), p_cache: HashMap::new(), budget: VERTEX_BUDGET, fwd_cap: usize::MAX, bwd_cap: usize::MAX })
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn level_horizon(&self) -> i64 {
        self.sys.horizon as i64
    }

    fn level(&mut self, l: i64) -> Result<Option<&Level>> {
        if l.abs() > self.level_horizon() {
            return Ok(None);
        }
        let (step, idx) = if l >= 0 { (1, l as usize) } else { (-1, (-l - 1) as usize) };
        let cap = if step > 0 { self.fwd_cap } else { self.bwd_cap };
        if idx >= cap {
            return Err(CwError::Budget { budget: self.budget });
        }
        loop {
            let have = if step > 0 { self.fwd.len() } else { self.bwd.len() };
            if have > idx {
                break;
            }
            let prev = if step > 0 {
                &self.fwd[have - 1]
            } else if have == 0 {
                &self.fwd[0]
            } else {
                &self.bwd[have - 1]
            };
            let (img, index) = match image_indexed(self.sys, &prev.cont, step, self.budget) {
                Ok(v) => v,
                Err(e) => {
                    if matches!(e, CwError::Budget { .. }) {
                        *(if step > 0 { &mut self.fwd_cap } else { &mut self.bwd_cap }) = have;
                    }
                    return Err(e);
                }
            };
            let cuts = prev.cuts.iter().map(|&v| index[v]).collect();
            let lvl = Level::new(self.sys, img, cuts, self.consts.c);
            if step > 0 {
                self.fwd.push(lvl);
            } else {
                self.bwd.push(lvl);
            }
        }
        Ok(Some(if step > 0 { &self.fwd[idx] } else { &self.bwd[idx] }))
    }

    /// The continuum f^l(C) with the cut vertices inserted.
    pub fn continuum(&mut self, l: i64) -> Result<MarkedContinuum> {
        let max = self.sys.horizon;
        self.level(l)?.map(|lv| lv.cont.clone()).ok_or(CwError::Horizon { n: l, max })
    }

    pub fn cut_count(&self) -> usize {
        self.fwd[0].cuts.len()
    }

    /// N of the piece between cuts a < b of f^l(C).
    fn piece_n(&mut self, a: usize, b: usize, l: i64) -> Result<CapN> {
        if self.singleton {
            return Ok(CapN::Infinite);
        }
        let h = self.level_horizon();
        for dist in 0..=(2 * h) as u32 {
            let mut any = false;
            for cand in [l + dist as i64, l - dist as i64] {
                if cand.abs() > h || (dist == 0 && cand != l) {
                    continue;
                }
                any = true;
                let exceeds = match self.level(cand) {
                    Ok(Some(lv)) => b >= lv.thresholds[a],
                    Ok(None) => false,
                    Err(CwError::Budget { .. }) => self.piece_exceeds(a, b, cand)?,
                    Err(e) => return Err(e),
                };
                if exceeds {
                    return Ok(CapN::Finite(dist));
                }
                if dist == 0 {
                    break;
                }
            }
            if !any {
                break;
            }
        }
        Ok(CapN::BeyondHorizon)
    }

    /// Whether f^l of the piece between cuts a < b has diameter above c, imaging
    /// the piece alone. Used where the whole continuum outgrows the budget; a
    /// piece that does as well is taken to exceed c.
    fn piece_exceeds(&self, a: usize, b: usize, l: i64) -> Result<bool> {
        let base = &self.fwd[0];
        let (i, j) = (base.cuts[a], base.cuts[b]);
        let piece = base.cont.slice(i, j, i, j);
        match image_with_budget(self.sys, &piece, l, self.budget) {
            Ok(img) => Ok(img.diameter() > self.consts.c),
            Err(CwError::Budget { .. }) => Ok(true),
            Err(e) => Err(e),
        }
    }

    pub fn capital_n(&mut self, l: i64) -> Result<CapN> {
        let k = self.cut_count();
        if k < 2 {
            return Ok(CapN::Infinite);
        }
        self.piece_n(0, k - 1, l)
    }

    pub fn rho(&mut self, l: i64) -> Result<f64> {
        Ok(self.capital_n(l)?.rho(self.consts.alpha))
    }

    /// Chain infimum over contiguous pieces at the cut grid.
    pub fn p(&mut self, l: i64) -> Result<f64> {
        if let Some(&v) = self.p_cache.get(&l) {
            return Ok(v);
        }
        let k = self.cut_count();
        if self.singleton || k < 2 {
            return Ok(0.0);
        }
        let max = self.sys.horizon;
        let (cuts, lo_m, hi_m) = {
            let lv = self.level(l)?.ok_or(CwError::Horizon { n: l, max })?;
            let (mp, mq) = (lv.cont.mark_p(), lv.cont.mark_q());
            (lv.cuts.clone(), mp.min(mq), mp.max(mq))
        };
        let alpha = self.consts.alpha;
        let mut best = vec![f64::INFINITY; k];
        best[0] = 0.0;
        for b in 1..k {
            for a in 0..b {
                if !best[a].is_finite() || (a == 0 && cuts[b] < lo_m) || (b == k - 1 && cuts[a] > hi_m) {
                    continue;
                }
                let w = self.piece_n(a, b, l)?.rho(alpha);
                let v = best[a] + w;
                if v < best[b] {
                    best[b] = v;
                }
            }
        }
        let v = best[k - 1];
        self.p_cache.insert(l, v);
        Ok(v)
    }

    pub fn d_prime(&mut self, l: i64) -> Result<f64> {
        let span = self.consts.n0 as i64 - 1;
        let lambda = self.consts.lambda;
        let mut best = 0.0f64;
        for j in -span..=span {
            let v = self.p(l + j)? / lambda.powi(j.abs() as i32);
            best = best.max(v);
        }
        Ok(best)
    }

    /// sup_i D′(f^{l+i} C)/λ^|i|, stopping once the geometric tail cannot improve it.
    pub fn d(&mut self, l: i64) -> Result<DReport> {
        let lambda = self.consts.lambda;
        let tail = self.consts.tail_bound();
        if self.singleton {
            return Ok(DReport { value: 0.0, achieved_index: 0, tail_bound: tail, truncated: false });
        }
        let reach = self.level_horizon() - (self.consts.n0 as i64 - 1);
        let mut best = 0.0f64;
        let mut at = 0i64;
        let mut dist = 0i64;
        loop {
            if dist > 0 && lambda.powi(-(dist as i32)) <= best {
                return Ok(DReport { value: best, achieved_index: at, tail_bound: tail, truncated: false });
            }
            if dist > self.consts.horizon as i64 {
                return Ok(DReport { value: best, achieved_index: at, tail_bound: tail, truncated: false });
            }
            let mut any = false;
            for i in if dist == 0 { vec![0] } else { vec![dist, -dist] } {
                if (l + i).abs() > reach {
                    continue;
                }
                any = true;
                let v = self.d_prime(l + i)? / lambda.powi(dist as i32);
                if v > best {
                    best = v;
                    at = i;
                }
            }
            if !any {
                return Ok(DReport {
                    value: best,
                    achieved_index: at,
                    tail_bound: lambda.powi(-(dist as i32)),
                    truncated: true,
                });
            }
            dist += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DReport {
    pub value: f64,
    pub achieved_index: i64,
    pub tail_bound: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "N")]
    pub n: CapN,
    pub rho: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Dprime")]
    pub d_prime: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub achieved_index: i64,
    pub tail_bound: f64,
    pub truncated: bool,
    pub depth: u32,
}

pub fn capital_n(sys: &SystemModel, c: &MarkedContinuum, consts: &MetricConstants) -> Result<CapN> {
    Orbit::new(sys, c, consts, 0)?.capital_n(0)
}

pub fn rho(sys: &SystemModel, c: &MarkedContinuum, consts: &MetricConstants) -> Result<f64> {
    Ok(capital_n(sys, c, consts)?.rho(consts.alpha))
}

pub fn p_metric(sys: &SystemModel, c: &MarkedContinuum, consts: &MetricConstants, depth: u32) -> Result<f64> {
    Orbit::new(sys, c, consts, depth)?.p(0)
}

pub fn d_prime(sys: &SystemModel, c: &MarkedContinuum, consts: &MetricConstants, depth: u32) -> Result<f64> {
    Orbit::new(sys, c, consts, depth)?.d_prime(0)
}

pub fn d_metric(sys: &SystemModel, c: &MarkedContinuum, consts: &MetricConstants, depth: u32) -> Result<DReport> {
    Orbit::new(sys, c, consts, depth)?.d(0)
}

pub fn evaluate(sys: &SystemModel, c: &MarkedContinuum, consts: &MetricConstants, depth: u32) -> Result<MetricReport> {
    let mut orbit = Orbit::new(sys, c, consts, depth)?;
    let n = orbit.capital_n(0)?;
    let p = orbit.p(0)?;
    let dp = orbit.d_prime(0)?;
    let d = orbit.d(0)?;
    Ok(MetricReport {
        n,
        rho: n.rho(consts.alpha),
        p,
        d_prime: dp,
        d: d.value,
        achieved_index: d.achieved_index,
        tail_bound: d.tail_bound,
        truncated: d.truncated,
        depth,
    })
}

/// Eigen-direction sub-arc of length `len` through `x`, with `x` at fraction `at`.
pub fn eigen_segment(sys: &SystemModel, x: &Point, kind: ArcKind, len: f64, at: f64) -> Result<MarkedContinuum> {
    let hyp = sys.hyperbolic().ok_or_else(|| CwError::Domain(format!("{} has no eigen-directions", sys.name())))?;
    let dir = match kind {
        ArcKind::Stable => hyp.e_s,
        ArcKind::Unstable => hyp.e_u,
    };
    let pieces = ((len / 0.2).ceil() as usize).max(1);
    let base = x.lift();
    let lifts: Vec<Lift> = (0..=pieces)
        .map(|i| {
            let t = len * (i as f64 / pieces as f64 - at);
            crate::models::lift_offset(base, [dir[0] * t, dir[1] * t])
        })
        .collect();
    let params = (0..=pieces).map(|i| i as f64 / pieces as f64).collect();
    Ok(MarkedContinuum::from_parts(sys.chart(), lifts, params, 0, pieces))
}
