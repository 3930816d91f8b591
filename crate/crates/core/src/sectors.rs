//! Bi-asymptotic sectors on surfaces: detection, regularity, spines, the
//! f₁/f₂ parametrization of a regular sector, and enclosing sectors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continua::{intersect, project, subcontinuum, MarkedContinuum, DEFAULT_TOL};
use crate::error::{CwError, Result};
use crate::models::{lift_coords, lift_from, lift_offset, ArcKind, Chart, Point, SystemModel};

type V2 = [f64; 2];

fn sub(a: V2, b: V2) -> V2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn add(a: V2, b: V2) -> V2 {
    [a[0] + b[0], a[1] + b[1]]
}

fn scale(s: f64, a: V2) -> V2 {
    [s * a[0], s * a[1]]
}

fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: V2, b: V2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn len(a: V2) -> f64 {
    a[0].hypot(a[1])
}

fn unit(a: V2) -> V2 {
    scale(1.0 / len(a), a)
}

/// Axis-aligned box of chart coordinates from which seeds are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: V2,
    pub max: V2,
}

impl Region {
    pub fn whole() -> Self {
        Region { min: [0.0, 0.0], max: [1.0, 1.0] }
    }

    fn contains(&self, p: V2) -> bool {
        (0..2).all(|k| p[k] >= self.min[k] && p[k] < self.max[k])
    }
}

/// A disc bounded by a stable and an unstable arc meeting at `a1` and `a2`.
/// Both boundary arcs run from `a1` to `a2`.
#[derive(Debug, Clone, Serialize)]
pub struct SectorRecord {
    pub boundary_s: MarkedContinuum,
    pub boundary_u: MarkedContinuum,
    pub a1: Point,
    pub a2: Point,
    pub regular: bool,
    pub spine: Option<Point>,
}

fn path_len(c: &MarkedContinuum) -> f64 {
    c.unwrapped().windows(2).map(|w| len(sub(w[1], w[0]))).sum()
}

impl SectorRecord {
    /// Length of the longer boundary arc.
    pub fn size(&self) -> f64 {
        path_len(&self.boundary_s).max(path_len(&self.boundary_u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularity {
    Regular,
    NonRegular,
}

/// Closed planar outline of a sector disc. When the boundary closes only
/// modulo v ~ -v the outline is doubled by the point reflection about `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outline {
    pub vertices: Vec<V2>,
    /// Vertex indices of a1 and a2.
    pub corners: [usize; 2],
    pub center: Option<V2>,
}

impl Outline {
    /// Simple outline from a stable path a1 → a2 and an unstable path a2 → a1.
    pub fn from_paths(s_path: &[V2], u_path: &[V2]) -> Result<Self> {
        if s_path.len() < 2 || u_path.len() < 2 {
            return Err(CwError::Domain("boundary paths need two vertices each".into()));
        }
        if len(sub(*s_path.last().unwrap(), u_path[0])) > 1e-12 || len(sub(*u_path.last().unwrap(), s_path[0])) > 1e-12 {
            return Err(CwError::Domain("boundary paths do not close".into()));
        }
        let mut vertices = s_path.to_vec();
        vertices.extend_from_slice(&u_path[1..u_path.len() - 1]);
        Ok(Outline { vertices, corners: [0, s_path.len() - 1], center: None })
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n).map(|i| cross(self.vertices[i], self.vertices[(i + 1) % n])).sum::<f64>() / 2.0
    }

    pub fn winding(&self, p: V2) -> i32 {
        let n = self.vertices.len();
        let mut w = 0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if a[1] <= p[1] {
                if b[1] > p[1] && cross(sub(b, a), sub(p, a)) > 0.0 {
                    w += 1;
                }
            } else if b[1] <= p[1] && cross(sub(b, a), sub(p, a)) < 0.0 {
                w -= 1;
            }
        }
        w
    }

    pub fn contains(&self, p: V2) -> bool {
        self.winding(p) != 0
    }

    pub fn translated(&self, d: V2) -> Self {
        Outline { vertices: self.vertices.iter().map(|v| add(*v, d)).collect(), corners: self.corners, center: self.center.map(|c| add(c, d)) }
    }

    fn edges(&self) -> impl Iterator<Item = (V2, V2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Incoming and outgoing edge directions at vertex `i`, skipping degenerate edges.
    fn corner_edges(&self, i: usize) -> (V2, V2) {
        let n = self.vertices.len();
        let v = self.vertices[i];
        let mut e_in = [0.0, 0.0];
        for k in 1..n {
            let d = sub(v, self.vertices[(i + n - k) % n]);
            if len(d) > 1e-13 {
                e_in = d;
                break;
            }
        }
        let mut e_out = [0.0, 0.0];
        for k in 1..n {
            let d = sub(self.vertices[(i + k) % n], v);
            if len(d) > 1e-13 {
                e_out = d;
                break;
            }
        }
        (e_in, e_out)
    }
}

fn seg_point(p: V2, a: V2, b: V2) -> f64 {
    let d = sub(b, a);
    let l2 = dot(d, d);
    let s = if l2 > 0.0 { (dot(sub(p, a), d) / l2).clamp(0.0, 1.0) } else { 0.0 };
    len(sub(p, add(a, scale(s, d))))
}

fn seg_seg(a0: V2, a1: V2, b0: V2, b1: V2) -> f64 {
    let da = sub(a1, a0);
    let db = sub(b1, b0);
    let d = cross(da, db);
    if d != 0.0 {
        let s = cross(sub(b0, a0), db) / d;
        let t = cross(sub(b0, a0), da) / d;
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
            return 0.0;
        }
    }
    seg_point(a0, b0, b1).min(seg_point(a1, b0, b1)).min(seg_point(b0, a0, a1)).min(seg_point(b1, a0, a1))
}

/// Distance between the boundaries of two outlines.
pub fn boundary_gap(a: &Outline, b: &Outline) -> f64 {
    let mut best = f64::INFINITY;
    for (a0, a1) in a.edges() {
        for (b0, b1) in b.edges() {
            best = best.min(seg_seg(a0, a1, b0, b1));
        }
    }
    best
}

/// Continuation directions of the two boundary leaves beyond a corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerContinuation {
    pub stable: V2,
    pub unstable: V2,
}

/// Whether `d` points into the disc at a corner with the given edges; the
/// disc lies to the left when `orient > 0`.
fn points_inward(e_in: V2, e_out: V2, d: V2, orient: f64, tol: f64) -> Result<bool> {
    let back = scale(-1.0, e_in);
    for ray in [e_out, back] {
        if cross(unit(ray), unit(d)).abs() < tol && dot(ray, d) > 0.0 {
            return Err(CwError::Indeterminate("continuation runs along the boundary".into()));
        }
    }
    let left_of_out = orient * cross(e_out, d) > 0.0;
    let right_of_back = orient * cross(d, back) > 0.0;
    if orient * cross(e_in, e_out) > 0.0 {
        Ok(left_of_out && right_of_back)
    } else {
        Ok(left_of_out || right_of_back)
    }
}

/// Regular iff at both corners both continuation leaves leave the disc.
pub fn classify_outline(outline: &Outline, conts: &[CornerContinuation; 2], tol: f64) -> Result<Regularity> {
    let orient = outline.signed_area().signum();
    if orient == 0.0 {
        return Err(CwError::Indeterminate("degenerate sector outline".into()));
    }
    for (k, &i) in outline.corners.iter().enumerate() {
        let (e_in, e_out) = outline.corner_edges(i);
        if cross(unit(e_in), unit(e_out)).abs() < tol {
            return Err(CwError::Indeterminate(format!("tangential crossing at corner a{}", k + 1)));
        }
        for d in [conts[k].stable, conts[k].unstable] {
            if points_inward(e_in, e_out, d, orient, tol)? {
                return Ok(Regularity::NonRegular);
            }
        }
    }
    Ok(Regularity::Regular)
}

fn arc_from(c: &MarkedContinuum) -> MarkedContinuum {
    if c.mark_p() == 0 {
        c.clone()
    } else {
        c.reversed()
    }
}

/// The sector outline in the plane of lift coordinates, starting at a1.
pub fn outline(s: &SectorRecord) -> Result<Outline> {
    let chart = s.boundary_s.chart();
    let p0 = lift_coords(s.boundary_s.lifts()[0]);
    let mut v: Vec<V2> = s.boundary_s.unwrapped().iter().map(|d| add(p0, *d)).collect();
    let a2_at = v.len() - 1;
    let e_s = v[a2_at];
    let back = s.boundary_u.reversed();
    let u0 = lift_coords(back.lifts()[0]);
    let mut sign = None;
    for &sg in chart.signs() {
        let c = scale(sg as f64, u0);
        let r = sub(e_s, c);
        let m = if chart.wraps() { [r[0].round(), r[1].round()] } else { [0.0, 0.0] };
        if len(sub(r, m)) <= 1e-9 {
            sign = Some(sg as f64);
            break;
        }
    }
    let sg = sign.ok_or_else(|| CwError::Domain("unstable boundary does not start at a2".into()))?;
    for d in &back.unwrapped()[1..] {
        v.push(add(e_s, scale(sg, *d)));
    }
    let f = v.pop().unwrap();
    let shift = sub(f, p0);
    if len(sub(shift, [shift[0].round(), shift[1].round()])) <= 1e-9 {
        if len(shift) > 0.5 {
            return Err(CwError::Domain("sector boundary is not contractible".into()));
        }
        return Ok(Outline { vertices: v, corners: [0, a2_at], center: None });
    }
    let sum = add(f, p0);
    let n = [sum[0].round(), sum[1].round()];
    if chart != Chart::SphereQuotient || len(sub(sum, n)) > 1e-9 {
        return Err(CwError::Domain("sector boundary does not close".into()));
    }
    let half = v.len();
    v.push(f);
    for k in 1..half {
        let r = sub(n, v[k]);
        v.push(r);
    }
    Ok(Outline { vertices: v, corners: [0, a2_at], center: Some(scale(0.5, n)) })
}

fn leaf_dirs(sys: &SystemModel) -> Result<(V2, V2)> {
    let hyp = sys
        .hyperbolic()
        .ok_or_else(|| CwError::Domain(format!("{} has no stable/unstable leaves", sys.name())))?;
    Ok((hyp.e_s, hyp.e_u))
}

/// Leaf continuations at both corners of an outline built by [`outline`].
fn continuations(sys: &SystemModel, o: &Outline) -> Result<[CornerContinuation; 2]> {
    let (es, eu) = leaf_dirs(sys)?;
    let orient = |e: V2, along: V2| if dot(e, along) >= 0.0 { e } else { scale(-1.0, e) };
    let (in1, out1) = o.corner_edges(o.corners[0]);
    let (in2, out2) = o.corner_edges(o.corners[1]);
    Ok([
        CornerContinuation { stable: orient(es, scale(-1.0, out1)), unstable: orient(eu, in1) },
        CornerContinuation { stable: orient(es, in2), unstable: orient(eu, scale(-1.0, out2)) },
    ])
}

pub fn classify_sector(sys: &SystemModel, s: &SectorRecord) -> Result<Regularity> {
    let o = outline(s)?;
    classify_outline(&o, &continuations(sys, &o)?, 1e-9)
}

/// Spine lifts in the plane of `o` lying inside it.
fn spines_inside(sys: &SystemModel, o: &Outline, spines: &[Point]) -> Vec<usize> {
    let chart = sys.chart();
    let (lo, hi) = o.vertices.iter().fold(([f64::MAX; 2], [f64::MIN; 2]), |(lo, hi), v| {
        ([lo[0].min(v[0]), lo[1].min(v[1])], [hi[0].max(v[0]), hi[1].max(v[1])])
    });
    let mut out = Vec::new();
    for (k, w) in spines.iter().enumerate() {
        let c = w.coords();
        let inside = chart.signs().iter().any(|&sg| {
            let base = scale(sg as f64, c);
            let xs = (lo[0] - base[0]).floor() as i64..=(hi[0] - base[0]).ceil() as i64;
            xs.into_iter().any(|ix| {
                let ys = (lo[1] - base[1]).floor() as i64..=(hi[1] - base[1]).ceil() as i64;
                ys.into_iter().any(|iy| o.contains(add(base, [ix as f64, iy as f64])))
            })
        });
        if inside {
            out.push(k);
        }
    }
    out
}

/// Number of the given spines inside the sector's disc.
pub fn spine_count(sys: &SystemModel, s: &SectorRecord, spines: &[Point]) -> Result<usize> {
    Ok(spines_inside(sys, &outline(s)?, spines).len())
}

fn finish_sector(sys: &SystemModel, boundary_s: MarkedContinuum, boundary_u: MarkedContinuum) -> Result<SectorRecord> {
    let mut rec = SectorRecord {
        a1: boundary_s.vertex(0),
        a2: boundary_s.vertex(boundary_s.len() - 1),
        boundary_s,
        boundary_u,
        regular: false,
        spine: None,
    };
    let o = outline(&rec)?;
    rec.regular = classify_outline(&o, &continuations(sys, &o)?, 1e-9)? == Regularity::Regular;
    if let Some(c) = o.center {
        let w = Point::from_lift(sys.chart(), lift_from(c));
        if rec.regular && o.contains(c) && sys.is_spine(&w, sys.c / 4.0, 1e-12)? {
            rec.spine = Some(w);
        }
    }
    Ok(rec)
}

/// Sectors cut out by adjacent points of C^s_eps(x) ∩ C^u_eps(x), plus the
/// number of intersection points found.
fn sectors_at(sys: &SystemModel, x: &Point, eps: f64) -> Result<(Vec<SectorRecord>, usize)> {
    let sx = sys.local_arc(x, ArcKind::Stable, eps, 2)?;
    let ux = sys.local_arc(x, ArcKind::Unstable, eps, 2)?;
    let mut pts = intersect(&sx, &ux, DEFAULT_TOL)?;
    let count = pts.len();
    if count < 2 {
        return Ok((Vec::new(), count));
    }
    pts.sort_by(|a, b| project(&sx, a).param.total_cmp(&project(&sx, b).param));
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let bs = arc_from(&subcontinuum(&sx, &w[0], &w[1], DEFAULT_TOL)?);
        let bu = arc_from(&subcontinuum(&ux, &w[0], &w[1], DEFAULT_TOL)?);
        match finish_sector(sys, bs, bu) {
            Ok(rec) => out.push(rec),
            Err(CwError::Domain(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((out, count))
}

#[derive(Debug, Clone, Serialize)]
pub struct SectorSearch {
    pub sectors: Vec<SectorRecord>,
    pub seeds: usize,
    pub seeds_tested: usize,
    /// Largest intersection count of a seed's stable and unstable arcs.
    pub max_multiplicity: usize,
    /// Seeds whose arcs met more than once, with their intersection counts.
    pub multiplicities: Vec<usize>,
    /// Sectors whose regularity could not be decided.
    pub indeterminate: usize,
    pub exhausted: bool,
}

fn same_sector(chart: Chart, a: &SectorRecord, b: &SectorRecord) -> bool {
    let d = |p: &Point, q: &Point| chart.distance(p.lift(), q.lift());
    (d(&a.a1, &b.a1) <= 1e-9 && d(&a.a2, &b.a2) <= 1e-9) || (d(&a.a1, &b.a2) <= 1e-9 && d(&a.a2, &b.a1) <= 1e-9)
}

/// Sectors from stable/unstable arc pairs of radius `eps` at the centers of a
/// `res × res` seed grid inside `region`, testing at most `budget` seeds.
pub fn find_sectors(sys: &SystemModel, region: &Region, eps: f64, res: usize, budget: usize) -> Result<SectorSearch> {
    leaf_dirs(sys)?;
    let seeds: Vec<Point> = (0..res * res)
        .map(|k| [((k / res) as f64 + 0.5) / res as f64, ((k % res) as f64 + 0.5) / res as f64])
        .filter(|c| region.contains(*c))
        .map(|c| sys.point(c[0], c[1]))
        .collect();
    let tested = seeds.len().min(budget);
    let found = seeds[..tested]
        .par_iter()
        .map(|x| match sectors_at(sys, x, eps) {
            Ok((secs, n)) => Ok((secs, n, false)),
            Err(CwError::Indeterminate(_)) => Ok((Vec::new(), 2, true)),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let chart = sys.chart();
    let mut sectors: Vec<SectorRecord> = Vec::new();
    let mut multiplicities = Vec::new();
    let mut indeterminate = 0;
    for (secs, n, indet) in found {
        if n >= 2 {
            multiplicities.push(n);
        }
        indeterminate += indet as usize;
        for s in secs {
            if !sectors.iter().any(|t| same_sector(chart, t, &s)) {
                sectors.push(s);
            }
        }
    }
    sectors.sort_by(|a, b| a.size().total_cmp(&b.size()));
    Ok(SectorSearch {
        max_multiplicity: multiplicities.iter().copied().max().unwrap_or(0),
        sectors,
        seeds: seeds.len(),
        seeds_tested: tested,
        multiplicities,
        indeterminate,
        exhausted: tested < seeds.len(),
    })
}

/// Grid points at which the local stable set is an arc ending at the point,
/// clustered to one representative each.
pub fn enumerate_spines(sys: &SystemModel, eps: f64, grid_res: usize) -> Result<Vec<Point>> {
    leaf_dirs(sys)?;
    let hits = (0..grid_res * grid_res)
        .into_par_iter()
        .map(|k| {
            let x = sys.point((k / grid_res) as f64 / grid_res as f64, (k % grid_res) as f64 / grid_res as f64);
            Ok(sys.is_spine(&x, eps, 1e-12)?.then_some(x))
        })
        .collect::<Result<Vec<_>>>()?;
    let chart = sys.chart();
    let mut reps: Vec<Point> = Vec::new();
    for x in hits.into_iter().flatten() {
        if !reps.iter().any(|r| chart.distance(r.lift(), x.lift()) < 2.0 / grid_res as f64) {
            reps.push(x);
        }
    }
    reps.sort_by_key(|p| p.lift());
    Ok(reps)
}

/// For each spine, the smallest detected sector containing it.
pub fn spine_sectors(sys: &SystemModel, sectors: &[SectorRecord], spines: &[Point]) -> Result<Vec<Option<usize>>> {
    let mut best: Vec<Option<usize>> = vec![None; spines.len()];
    for (i, s) in sectors.iter().enumerate() {
        for k in spines_inside(sys, &outline(s)?, spines) {
            if best[k].map_or(true, |j| s.size() < sectors[j].size()) {
                best[k] = Some(i);
            }
        }
    }
    Ok(best)
}

/// Point at parameter `t` of a polyline parametrized over [0, 1].
fn point_at(c: &MarkedContinuum, t: f64) -> Point {
    let params = c.params();
    let i = params.partition_point(|&p| p <= t).clamp(1, c.len() - 1) - 1;
    let (t0, t1) = (params[i], params[i + 1]);
    let s = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 0.0 };
    let u = c.unwrapped();
    let d = sub(u[i + 1], u[i]);
    Point::from_lift(c.chart(), lift_offset(c.lifts()[i], scale(s, d)))
}

/// Maps [0, 1] piecewise linearly so that 1/2 lands on `mid`.
fn split_param(t: f64, mid: f64) -> f64 {
    if t <= 0.5 {
        2.0 * t * mid
    } else {
        mid + (2.0 * t - 1.0) * (1.0 - mid)
    }
}

fn crossing_param(c: &MarkedContinuum, other: &MarkedContinuum) -> Result<f64> {
    let pts = intersect(c, other, DEFAULT_TOL)?;
    let p = pts
        .first()
        .ok_or_else(|| CwError::Domain("sector boundary misses the splitting curve".into()))?;
    Ok(project(c, p).param)
}

#[derive(Debug, Clone, Serialize)]
pub struct ParametrizationReport {
    pub grid: usize,
    pub f1_samples: Vec<Option<V2>>,
    pub f2_samples: Vec<Option<V2>>,
    /// Largest distance between grid-adjacent samples.
    pub max_step_f1: f64,
    pub max_step_f2: f64,
    pub monotonicity_violations: usize,
    pub duplicate_samples: usize,
    pub missing: usize,
    /// Distances d(f1(0,0), a1) and d(f2(1,1), a2), maximized.
    pub corner_error: f64,
    /// Distance from f1(1/2,1/2) to the farther of the two splitting arcs.
    pub center_offset: f64,
}

impl ParametrizationReport {
    pub fn ok(&self) -> bool {
        self.missing == 0
            && self.monotonicity_violations == 0
            && self.duplicate_samples == 0
            && self.corner_error <= 1e-9
            && self.center_offset <= 1e-9
    }
}

struct Sampled {
    points: Vec<Option<Point>>,
    max_step: f64,
    violations: usize,
    duplicates: usize,
}

/// Counts breaks of monotonicity in a sequence of parameters.
fn monotone_breaks(ts: &[f64]) -> usize {
    let mut dir = 0.0;
    let mut breaks = 0;
    for w in ts.windows(2) {
        let d = w[1] - w[0];
        if d.abs() <= 1e-14 {
            breaks += 1;
            continue;
        }
        if dir == 0.0 {
            dir = d.signum();
        } else if d.signum() != dir {
            breaks += 1;
        }
    }
    breaks
}

/// Samples f(t, s) = C^u_R(γ^s(t)) ∩ C^s_R(γ^u(s)) over a `g × g` grid of
/// [lo, lo + 1/2]², continuing the choice of meet from `start` at the corner
/// (`reverse` starts from the upper corner).
#[allow(clippy::too_many_arguments)]
fn sample_map(
    sys: &SystemModel,
    gs: &dyn Fn(f64) -> Point,
    gu: &dyn Fn(f64) -> Point,
    r: f64,
    g: usize,
    lo: f64,
    start: Point,
    reverse: bool,
) -> Result<Sampled> {
    let chart = sys.chart();
    let coord = |i: usize| {
        let k = if reverse { g - 1 - i } else { i };
        lo + 0.5 * k as f64 / (g - 1) as f64
    };
    let us: Vec<MarkedContinuum> = (0..g).map(|i| sys.local_arc(&gs(coord(i)), ArcKind::Unstable, r, 2)).collect::<Result<_>>()?;
    let ss: Vec<MarkedContinuum> = (0..g).map(|j| sys.local_arc(&gu(coord(j)), ArcKind::Stable, r, 2)).collect::<Result<_>>()?;
    let mut points: Vec<Option<Point>> = vec![None; g * g];
    for j in 0..g {
        for i in 0..g {
            let reference = if i > 0 {
                points[j * g + i - 1]
            } else if j > 0 {
                points[(j - 1) * g]
            } else {
                Some(start)
            };
            let Some(reference) = reference else { continue };
            let cands = intersect(&us[i], &ss[j], DEFAULT_TOL)?;
            points[j * g + i] = cands
                .into_iter()
                .min_by(|a, b| chart.distance(a.lift(), reference.lift()).total_cmp(&chart.distance(b.lift(), reference.lift())));
        }
    }
    let mut max_step = 0.0f64;
    let mut violations = 0;
    for j in 0..g {
        for i in 0..g {
            let Some(p) = points[j * g + i] else { continue };
            for (di, dj) in [(1, 0), (0, 1)] {
                if let Some(Some(q)) = (i + di < g && j + dj < g).then(|| points[(j + dj) * g + i + di]) {
                    max_step = max_step.max(chart.distance(p.lift(), q.lift()));
                }
            }
        }
    }
    for j in 0..g {
        let ts: Vec<f64> = (0..g).filter_map(|i| points[j * g + i]).map(|p| project(&ss[j], &p).param).collect();
        violations += monotone_breaks(&ts);
    }
    for i in 0..g {
        let ts: Vec<f64> = (0..g).filter_map(|j| points[j * g + i]).map(|p| project(&us[i], &p).param).collect();
        violations += monotone_breaks(&ts);
    }
    let found: Vec<Point> = points.iter().flatten().copied().collect();
    let duplicates = (0..found.len())
        .into_par_iter()
        .map(|a| (a + 1..found.len()).filter(|&b| chart.distance(found[a].lift(), found[b].lift()) <= 1e-12).count())
        .sum();
    if reverse {
        points.reverse();
    }
    Ok(Sampled { points, max_step, violations, duplicates })
}

/// Samples f₁ on [0,1/2]² and f₂ on [1/2,1]² over a `grid × grid` lattice each,
/// with boundary parameters normalized so that 1/2 falls on the splitting
/// curve C^s_R(w) ∪ C^u_R(w) of the spine w.
pub fn sector_parametrization(sys: &SystemModel, s: &SectorRecord, grid: usize) -> Result<ParametrizationReport> {
    if grid < 2 {
        return Err(CwError::Domain("parametrization grid needs at least 2 points".into()));
    }
    let w = s.spine.ok_or_else(|| CwError::Domain("sector has no spine".into()))?;
    let r = (2.0 * s.size()).min(sys.c * 0.99);
    let cs_w = sys.local_arc(&w, ArcKind::Stable, r, 3)?;
    let cu_w = sys.local_arc(&w, ArcKind::Unstable, r, 3)?;
    let mid_s = crossing_param(&s.boundary_s, &cu_w)?;
    let mid_u = crossing_param(&s.boundary_u, &cs_w)?;
    let gs = |t: f64| point_at(&s.boundary_s, split_param(t, mid_s));
    let gu = |t: f64| point_at(&s.boundary_u, split_param(t, mid_u));
    let f1 = sample_map(sys, &gs, &gu, r, grid, 0.0, s.a1, false)?;
    let f2 = sample_map(sys, &gs, &gu, r, grid, 0.5, s.a2, true)?;
    let chart = sys.chart();
    let d = |p: Option<Point>, q: &Point| p.map_or(f64::INFINITY, |p| chart.distance(p.lift(), q.lift()));
    let corner_error = d(f1.points[0], &s.a1).max(d(f2.points[grid * grid - 1], &s.a2));
    let center_offset = match f1.points[grid * grid - 1] {
        Some(c) => project(&cs_w, &c).distance.max(project(&cu_w, &c).distance),
        None => f64::INFINITY,
    };
    let coords = |v: &[Option<Point>]| v.iter().map(|p| p.map(|p| p.coords())).collect::<Vec<_>>();
    Ok(ParametrizationReport {
        grid,
        missing: f1.points.iter().chain(&f2.points).filter(|p| p.is_none()).count(),
        f1_samples: coords(&f1.points),
        f2_samples: coords(&f2.points),
        max_step_f1: f1.max_step,
        max_step_f2: f2.max_step,
        monotonicity_violations: f1.violations + f2.violations,
        duplicate_samples: f1.duplicates + f2.duplicates,
        corner_error,
        center_offset,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Enclosure {
    pub sector: SectorRecord,
    /// Distance between the two sector boundaries.
    pub clearance: f64,
    pub attempts: usize,
}

/// The sector of C^s(x′) and C^u(x′) through x′ ∈ C^s(p′) ∩ C^u(q′), where p′
/// and q′ extend the unstable and stable boundary leaves beyond a1 by `h`.
fn widened(sys: &SystemModel, s: &SectorRecord, o: &Outline, h: f64) -> Result<Option<SectorRecord>> {
    let conts = continuations(sys, o)?;
    let a1 = s.boundary_s.lifts()[0];
    let du = scale(h, unit(conts[0].unstable));
    let ds = scale(h, unit(conts[0].stable));
    let chart = sys.chart();
    let p = Point::from_lift(chart, lift_offset(a1, du));
    let q = Point::from_lift(chart, lift_offset(a1, ds));
    let reach = (4.0 * h).min(sys.c * 0.99);
    let meets = intersect(&sys.local_arc(&p, ArcKind::Stable, reach, 2)?, &sys.local_arc(&q, ArcKind::Unstable, reach, 2)?, DEFAULT_TOL)?;
    let target = lift_offset(a1, add(du, ds));
    let Some(x) = meets
        .into_iter()
        .min_by(|a, b| chart.distance(a.lift(), target).total_cmp(&chart.distance(b.lift(), target)))
    else {
        return Ok(None);
    };
    let r = (2.0 * (s.size() + 2.0 * h)).min(sys.c * 0.99);
    let (cands, _) = sectors_at(sys, &x, r)?;
    Ok(cands.into_iter().find(|c| c.spine.is_some()))
}

fn clearance(inner: &Outline, outer: &Outline) -> Option<f64> {
    let (ci, co) = (inner.center?, outer.center?);
    let shift = sub(ci, co);
    let int = [shift[0].round(), shift[1].round()];
    if len(sub(shift, int)) > 1e-9 {
        return None;
    }
    let outer = outer.translated(int);
    if !inner.vertices.iter().all(|v| outer.contains(*v)) {
        return None;
    }
    Some(boundary_gap(inner, &outer))
}

/// A sector whose disc contains that of `s` with positive clearance, trying
/// widening margins that halve at each of up to `margin_budget` attempts.
pub fn enclosing_sector(sys: &SystemModel, s: &SectorRecord, margin_budget: usize) -> Result<Enclosure> {
    if s.spine.is_none() {
        return Err(CwError::Domain("enclosing sectors are built around a spine".into()));
    }
    let o = outline(s)?;
    let mut h = 0.5 * s.size();
    for attempt in 1..=margin_budget {
        if let Some(big) = widened(sys, s, &o, h)? {
            if let Some(gap) = clearance(&o, &outline(&big)?) {
                if gap > 0.0 {
                    return Ok(Enclosure { sector: big, clearance: gap, attempts: attempt });
                }
            }
        }
        h *= 0.5;
    }
    Err(CwError::SearchFailure(format!("no enclosing sector within {margin_budget} margins")))
}

/// Whether f^n shortens the stable boundary and f^-n the unstable one.
pub fn boundary_decay(sys: &SystemModel, s: &SectorRecord, n: i64) -> Result<bool> {
    let fs = crate::continua::image(sys, &s.boundary_s, n)?;
    let fu = crate::continua::image(sys, &s.boundary_u, -n)?;
    Ok(path_len(&fs) < path_len(&s.boundary_s) && path_len(&fu) < path_len(&s.boundary_u))
}

#[derive(Debug, Clone, Serialize)]
pub struct SectorsReport {
    pub model: String,
    pub resolution: usize,
    pub eps: f64,
    pub sectors: Vec<SectorRecord>,
    pub spines: Vec<Point>,
    /// Index into `sectors` of the smallest sector around each spine.
    pub spine_sectors: Vec<Option<usize>>,
    pub parametrization_reports: Vec<ParametrizationReport>,
    pub enclosures: Vec<Option<f64>>,
    pub max_multiplicity: usize,
    pub exhausted: bool,
}

pub fn analyze(sys: &SystemModel, res: usize, eps: f64, param_grid: usize) -> Result<SectorsReport> {
    let search = find_sectors(sys, &Region::whole(), eps, res, usize::MAX)?;
    let spines = enumerate_spines(sys, eps, res)?;
    let spine_sectors = spine_sectors(sys, &search.sectors, &spines)?;
    let mut parametrization_reports = Vec::new();
    let mut enclosures = Vec::new();
    for i in spine_sectors.iter().flatten() {
        let s = &search.sectors[*i];
        parametrization_reports.push(sector_parametrization(sys, s, param_grid)?);
        enclosures.push(enclosing_sector(sys, s, 8).ok().map(|e| e.clearance));
    }
    Ok(SectorsReport {
        model: sys.name().to_string(),
        resolution: res,
        eps,
        sectors: search.sectors,
        spines,
        spine_sectors,
        parametrization_reports,
        enclosures,
        max_multiplicity: search.max_multiplicity,
        exhausted: search.exhausted,
    })
}
