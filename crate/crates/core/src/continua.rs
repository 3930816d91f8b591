//! Polyline continua with two marked points.

use serde::{Deserialize, Serialize};

use crate::error::{CwError, Result};
use crate::models::{lift_diff, lift_neg, lift_offset, norm, Chart, Lift, Point, SystemModel};

pub const DEFAULT_TOL: f64 = 1e-9;
/// Longest admissible image edge, in chart units.
pub const CHART_STEP: f64 = 0.25;
pub const VERTEX_BUDGET: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkedContinuum {
    chart: Chart,
    lifts: Vec<Lift>,
    params: Vec<f64>,
    mark_p: usize,
    mark_q: usize,
    closed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuumRecord {
    pub chart: Chart,
    pub vertices: Vec<[f64; 2]>,
    pub mark_p: usize,
    pub mark_q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub closed: bool,
}

impl Serialize for MarkedContinuum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

fn arclength_params(chart: Chart, lifts: &[Lift]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for w in lifts.windows(2) {
        let step = norm(lift_diff(w[1], w[0]));
        let step = if chart.wraps() { step } else { norm(chart.rel(w[0], w[1])) };
        acc.push(acc.last().unwrap() + step);
    }
    let total = *acc.last().unwrap();
    if total > 0.0 {
        acc.iter_mut().for_each(|t| *t /= total);
        *acc.last_mut().unwrap() = 1.0;
    }
    acc
}

impl MarkedContinuum {
    /// Builds from lifts already chained (consecutive lifts are nearest representatives).
    pub fn from_parts(chart: Chart, lifts: Vec<Lift>, params: Vec<f64>, mark_p: usize, mark_q: usize) -> Self {
        assert!(!lifts.is_empty() && lifts.len() == params.len());
        assert!(mark_p < lifts.len() && mark_q < lifts.len());
        MarkedContinuum { chart, lifts, params, mark_p, mark_q, closed: false }
    }

    /// Builds from points, choosing for each vertex the representative nearest its predecessor.
    pub fn from_points(points: &[Point], mark_p: usize, mark_q: usize) -> Result<Self> {
        let first = points.first().ok_or_else(|| CwError::Domain("empty continuum".into()))?;
        let chart = first.chart();
        if mark_p >= points.len() || mark_q >= points.len() {
            return Err(CwError::Domain("mark out of range".into()));
        }
        let mut lifts = vec![first.lift()];
        for p in &points[1..] {
            if p.chart() != chart {
                return Err(CwError::ChartMismatch(chart, p.chart()));
            }
            let prev = *lifts.last().unwrap();
            let rep = chart.nearest_rep(prev, p.lift());
            if chart.distance(prev, rep) >= 0.5 {
                return Err(CwError::Domain("consecutive vertices exceed the chart step".into()));
            }
            lifts.push(rep);
        }
        let params = arclength_params(chart, &lifts);
        Ok(MarkedContinuum { chart, lifts, params, mark_p, mark_q, closed: false })
    }

    pub fn singleton(p: Point) -> Self {
        MarkedContinuum { chart: p.chart(), lifts: vec![p.lift()], params: vec![0.0], mark_p: 0, mark_q: 0, closed: false }
    }

    pub fn segment(a: Point, b: Point) -> Result<Self> {
        Self::from_points(&[a, b], 0, 1)
    }

    pub fn from_record(r: &ContinuumRecord) -> Result<Self> {
        let pts: Vec<Point> = r.vertices.iter().map(|v| Point::new(r.chart, v[0], v[1])).collect();
        let mut c = Self::from_points(&pts, r.mark_p, r.mark_q)?;
        if let Some(params) = &r.params {
            if params.len() != pts.len() || params.windows(2).any(|w| w[1] < w[0]) {
                return Err(CwError::Domain("params must be non-decreasing, one per vertex".into()));
            }
            c.params = params.clone();
        }
        c.closed = r.closed;
        Ok(c)
    }

    pub fn to_record(&self) -> ContinuumRecord {
        ContinuumRecord {
            chart: self.chart,
            vertices: self.vertices().iter().map(|p| p.coords()).collect(),
            mark_p: self.mark_p,
            mark_q: self.mark_q,
            params: Some(self.params.clone()),
            closed: self.closed,
        }
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn lifts(&self) -> &[Lift] {
        &self.lifts
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.lifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lifts.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn mark_p(&self) -> usize {
        self.mark_p
    }

    pub fn mark_q(&self) -> usize {
        self.mark_q
    }

    pub fn p(&self) -> Point {
        Point::from_lift(self.chart, self.lifts[self.mark_p])
    }

    pub fn q(&self) -> Point {
        Point::from_lift(self.chart, self.lifts[self.mark_q])
    }

    pub fn vertices(&self) -> Vec<Point> {
        self.lifts.iter().map(|&l| Point::from_lift(self.chart, l)).collect()
    }

    pub fn vertex(&self, i: usize) -> Point {
        Point::from_lift(self.chart, self.lifts[i])
    }

    pub fn endpoints(&self) -> [Lift; 2] {
        [self.lifts[0], *self.lifts.last().unwrap()]
    }

    /// Same continuum with marks swapped.
    pub fn swapped(&self) -> Self {
        let mut c = self.clone();
        std::mem::swap(&mut c.mark_p, &mut c.mark_q);
        c
    }

    pub fn with_marks(&self, mark_p: usize, mark_q: usize) -> Self {
        assert!(mark_p < self.len() && mark_q < self.len());
        let mut c = self.clone();
        c.mark_p = mark_p;
        c.mark_q = mark_q;
        c
    }

    /// Sub-polyline between vertex indices `i <= j`, keeping parameters.
    pub fn slice(&self, i: usize, j: usize, mark_p: usize, mark_q: usize) -> Self {
        assert!(i <= j && j < self.len());
        assert!((i..=j).contains(&mark_p) && (i..=j).contains(&mark_q));
        MarkedContinuum {
            chart: self.chart,
            lifts: self.lifts[i..=j].to_vec(),
            params: self.params[i..=j].to_vec(),
            mark_p: mark_p - i,
            mark_q: mark_q - i,
            closed: false,
        }
    }

    /// Reversed vertex order; marks follow their vertices, parameters are mirrored.
    pub fn reversed(&self) -> Self {
        let n = self.len();
        let mut lifts = self.lifts.clone();
        lifts.reverse();
        let (a, b) = (self.params[0], self.params[n - 1]);
        let params = self.params.iter().rev().map(|t| a + b - t).collect();
        MarkedContinuum { chart: self.chart, lifts, params, mark_p: n - 1 - self.mark_p, mark_q: n - 1 - self.mark_q, closed: self.closed }
    }

    /// Concatenates `other` after `self`; the last vertex of `self` must match the first of `other`.
    /// Parameters are rebuilt by arclength.
    pub fn join(&self, other: &Self, mark_p: usize, mark_q: usize) -> Result<Self> {
        if self.chart != other.chart {
            return Err(CwError::ChartMismatch(self.chart, other.chart));
        }
        let end = *self.lifts.last().unwrap();
        if self.chart.distance(end, other.lifts[0]) > DEFAULT_TOL {
            return Err(CwError::Domain("joined continua do not meet".into()));
        }
        let mut lifts = self.lifts.clone();
        let mut prev = end;
        for &l in &other.lifts[1..] {
            let next = self.chart.nearest_rep(prev, l);
            lifts.push(next);
            prev = next;
        }
        let params = arclength_params(self.chart, &lifts);
        if mark_p >= lifts.len() || mark_q >= lifts.len() {
            return Err(CwError::Domain("mark out of range".into()));
        }
        Ok(MarkedContinuum { chart: self.chart, lifts, params, mark_p, mark_q, closed: false })
    }

    /// Vertex coordinates unwrapped along the polyline, relative to vertex 0.
    pub fn unwrapped(&self) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0, 0.0]];
        for w in self.lifts.windows(2) {
            let d = self.edge(w[0], w[1]);
            let last = *out.last().unwrap();
            out.push([last[0] + d[0], last[1] + d[1]]);
        }
        out
    }

    fn edge(&self, a: Lift, b: Lift) -> [f64; 2] {
        if self.chart.wraps() {
            lift_diff(b, a)
        } else {
            self.chart.rel(a, b)
        }
    }

    pub fn is_singleton(&self) -> bool {
        self.lifts.iter().all(|&l| self.chart.distance(l, self.lifts[0]) == 0.0)
    }

    /// Maximum pairwise distance over vertices.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.lifts.len() {
            for j in i + 1..self.lifts.len() {
                best = best.max(self.chart.distance(self.lifts[i], self.lifts[j]));
            }
        }
        best
    }

    /// Inserts vertices at the given parameters (by linear interpolation) where missing.
    pub fn with_cuts(&self, cuts: &[f64]) -> Self {
        let mut lifts = Vec::with_capacity(self.len() + cuts.len());
        let mut params = Vec::with_capacity(self.len() + cuts.len());
        let mut marks = (self.mark_p, self.mark_q);
        let mut ci = cuts.partition_point(|&c| c <= self.params[0]);
        for i in 0..self.len() {
            if i > 0 {
                let (t0, t1) = (self.params[i - 1], self.params[i]);
                let d = self.edge(self.lifts[i - 1], self.lifts[i]);
                while ci < cuts.len() && cuts[ci] < t1 {
                    let c = cuts[ci];
                    if c > t0 {
                        let s = (c - t0) / (t1 - t0);
                        lifts.push(lift_offset(self.lifts[i - 1], [d[0] * s, d[1] * s]));
                        params.push(c);
                    }
                    ci += 1;
                }
                while ci < cuts.len() && cuts[ci] == t1 {
                    ci += 1;
                }
            }
            if i == self.mark_p {
                marks.0 = lifts.len();
            }
            if i == self.mark_q {
                marks.1 = lifts.len();
            }
            lifts.push(self.lifts[i]);
            params.push(self.params[i]);
        }
        MarkedContinuum { chart: self.chart, lifts, params, mark_p: marks.0, mark_q: marks.1, closed: self.closed }
    }
}

/// f^n(C), bisecting source edges until every image edge is shorter than the chart step.
pub fn image(sys: &SystemModel, c: &MarkedContinuum, n: i64) -> Result<MarkedContinuum> {
    image_with_budget(sys, c, n, VERTEX_BUDGET)
}

pub fn image_with_budget(sys: &SystemModel, c: &MarkedContinuum, n: i64, budget: usize) -> Result<MarkedContinuum> {
    image_indexed(sys, c, n, budget).map(|(img, _)| img)
}

/// Like [`image`], also returning the new index of every source vertex.
pub fn image_indexed(sys: &SystemModel, c: &MarkedContinuum, n: i64, budget: usize) -> Result<(MarkedContinuum, Vec<usize>)> {
    sys.check_horizon(n)?;
    if c.chart != sys.chart() {
        return Err(CwError::ChartMismatch(c.chart, sys.chart()));
    }
    if n == 0 {
        return Ok((c.clone(), (0..c.len()).collect()));
    }
    if c.closed {
        return Err(CwError::Domain("closed continua cannot be imaged".into()));
    }
    let dynamics = sys.dynamics();
    let mut lifts = Vec::with_capacity(c.len());
    let mut params = Vec::with_capacity(c.len());
    let mut index = Vec::with_capacity(c.len());
    for i in 0..c.len() {
        if i > 0 {
            let a = c.lifts[i - 1];
            let d = c.edge(a, c.lifts[i]);
            refine(dynamics, a, d, c.params[i - 1], c.params[i], n, &mut lifts, &mut params, budget)?;
        }
        index.push(lifts.len());
        lifts.push(dynamics.map(c.lifts[i], n));
        params.push(c.params[i]);
        if lifts.len() > budget {
            return Err(CwError::Budget { budget });
        }
    }
    let img = MarkedContinuum {
        chart: c.chart,
        lifts,
        params,
        mark_p: index[c.mark_p],
        mark_q: index[c.mark_q],
        closed: false,
    };
    Ok((img, index))
}

/// Pushes interior vertices of the edge a → a + d (exclusive of both ends).
#[allow(clippy::too_many_arguments)]
fn refine(
    dynamics: &dyn crate::models::Dynamics,
    a: Lift,
    d: [f64; 2],
    t0: f64,
    t1: f64,
    n: i64,
    lifts: &mut Vec<Lift>,
    params: &mut Vec<f64>,
    budget: usize,
) -> Result<()> {
    let img = dynamics.push(a, d, n);
    if norm(img) <= CHART_STEP || t1 - t0 <= f64::EPSILON * t1.abs().max(1.0) * 4.0 {
        return Ok(());
    }
    if lifts.len() > budget {
        return Err(CwError::Budget { budget });
    }
    let half = [d[0] / 2.0, d[1] / 2.0];
    let mid = lift_offset(a, half);
    let tm = 0.5 * (t0 + t1);
    refine(dynamics, a, half, t0, tm, n, lifts, params, budget)?;
    lifts.push(dynamics.map(mid, n));
    params.push(tm);
    refine(dynamics, mid, half, tm, t1, n, lifts, params, budget)
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// A copy of a polyline placed in another polyline's lift plane.
struct Placed {
    sign: i8,
    coords: Vec<[f64; 2]>,
}

fn bbox(coords: &[[f64; 2]]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for c in coords {
        b[0] = b[0].min(c[0]);
        b[1] = b[1].min(c[1]);
        b[2] = b[2].max(c[0]);
        b[3] = b[3].max(c[1]);
    }
    b
}

fn placements(c1: &MarkedContinuum, c2: &MarkedContinuum, tol: f64) -> Vec<Placed> {
    let chart = c1.chart;
    let base = c1.lifts[0];
    let u1 = c1.unwrapped();
    let b1 = bbox(&u1);
    let mut out = Vec::new();
    for &sign in chart.signs() {
        let start = if sign > 0 { c2.lifts[0] } else { lift_neg(c2.lifts[0]) };
        let s0 = if chart.wraps() { lift_diff(start, base) } else { chart.rel(base, start) };
        let u2: Vec<[f64; 2]> = c2.unwrapped().iter().map(|v| [s0[0] + sign as f64 * v[0], s0[1] + sign as f64 * v[1]]).collect();
        let b2 = bbox(&u2);
        if !chart.wraps() {
            out.push(Placed { sign, coords: u2 });
            continue;
        }
        let nx = ((b1[0] - b2[2] - tol).ceil() as i64)..=((b1[2] - b2[0] + tol).floor() as i64);
        let ny = ((b1[1] - b2[3] - tol).ceil() as i64)..=((b1[3] - b2[1] + tol).floor() as i64);
        for ix in nx {
            for iy in ny.clone() {
                let shift = [ix as f64, iy as f64];
                let coords = u2.iter().map(|v| [v[0] + shift[0], v[1] + shift[1]]).collect();
                out.push(Placed { sign, coords });
            }
        }
    }
    out
}

fn seg_point_distance(p: [f64; 2], a: [f64; 2], d: [f64; 2]) -> (f64, f64) {
    let l2 = dot(d, d);
    let s = if l2 > 0.0 { (dot(sub(p, a), d) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + s * d[0], a[1] + s * d[1]];
    (norm(sub(p, q)), s)
}

/// Intersection points of two polylines: transversal crossings plus endpoint
/// contacts within `tol`, deduplicated within `tol`.
pub fn intersect(c1: &MarkedContinuum, c2: &MarkedContinuum, tol: f64) -> Result<Vec<Point>> {
    if c1.chart != c2.chart {
        return Err(CwError::ChartMismatch(c1.chart, c2.chart));
    }
    let chart = c1.chart;
    let mut found: Vec<Lift> = Vec::new();
    let push = |l: Lift, found: &mut Vec<Lift>| {
        if !found.iter().any(|&f| chart.distance(f, l) <= tol) {
            found.push(l);
        }
    };
    let u1 = c1.unwrapped();
    let lift2 = |pl: &Placed, j: usize| -> Lift { if pl.sign > 0 { c2.lifts[j] } else { lift_neg(c2.lifts[j]) } };
    for pl in placements(c1, c2, tol) {
        // Singletons contribute contact points only.
        if c1.len() == 1 || c2.len() == 1 {
            let (pts, segs, lifts_of) = if c1.len() == 1 { (&u1, &pl.coords, 1) } else { (&pl.coords, &u1, 2) };
            let p = pts[0];
            if segs.len() == 1 {
                if norm(sub(p, segs[0])) <= tol {
                    push(c1.lifts[0], &mut found);
                }
                continue;
            }
            for k in 0..segs.len() - 1 {
                let (dist, _) = seg_point_distance(p, segs[k], sub(segs[k + 1], segs[k]));
                if dist <= tol {
                    let l = if lifts_of == 1 { c1.lifts[0] } else { lift2(&pl, 0) };
                    push(l, &mut found);
                    break;
                }
            }
            continue;
        }
        let b2 = bbox(&pl.coords);
        for i in 0..c1.len() - 1 {
            let (a0, a1) = (u1[i], u1[i + 1]);
            if a0[0].max(a1[0]) < b2[0] - tol
                || a0[0].min(a1[0]) > b2[2] + tol
                || a0[1].max(a1[1]) < b2[1] - tol
                || a0[1].min(a1[1]) > b2[3] + tol
            {
                continue;
            }
            for j in 0..pl.coords.len() - 1 {
                let (b0, b1) = (pl.coords[j], pl.coords[j + 1]);
                if a0[0].max(a1[0]) < b0[0].min(b1[0]) - tol
                    || a0[0].min(a1[0]) > b0[0].max(b1[0]) + tol
                    || a0[1].max(a1[1]) < b0[1].min(b1[1]) - tol
                    || a0[1].min(a1[1]) > b0[1].max(b1[1]) + tol
                {
                    continue;
                }
                // Exact local geometry relative to the nearer end of segment i.
                let o = c1.lifts[i];
                let da = c1.edge(o, c1.lifts[i + 1]);
                let p2 = chart_local(chart, o, lift2(&pl, j), [b0[0] - a0[0], b0[1] - a0[1]]);
                let db = sub(b1, b0);
                let db = {
                    let e = c2.edge(c2.lifts[j], c2.lifts[j + 1]);
                    let e = [pl.sign as f64 * e[0], pl.sign as f64 * e[1]];
                    if norm(sub(e, db)) < 1e-6 { e } else { db }
                };
                let denom = cross(da, db);
                let la = norm(da);
                let lb = norm(db);
                if denom.abs() > 1e-12 * la * lb {
                    let s = cross(p2, db) / denom;
                    let t = cross(p2, da) / denom;
                    let sa = tol / la.max(1e-300);
                    let sb = tol / lb.max(1e-300);
                    if s >= -sa && s <= 1.0 + sa && t >= -sb && t <= 1.0 + sb {
                        // Re-solve from the nearer ends of both segments for full relative precision.
                        let (ka, sa0) = if s <= 0.5 { (i, 0.0) } else { (i + 1, 1.0) };
                        let kb = if t <= 0.5 { j } else { j + 1 };
                        let anchor = c1.lifts[ka];
                        let r = if chart.wraps() {
                            lift_diff(lift2(&pl, kb), anchor)
                        } else {
                            let base = [p2[0] - sa0 * da[0], p2[1] - sa0 * da[1]];
                            if kb == j { base } else { [base[0] + db[0], base[1] + db[1]] }
                        };
                        let local = cross(r, db) / denom;
                        push(lift_offset(anchor, [da[0] * local, da[1] * local]), &mut found);
                    }
                } else {
                    // Parallel: report endpoint contacts.
                    let pb1 = [p2[0] + db[0], p2[1] + db[1]];
                    for (pt, lift) in [(p2, lift2(&pl, j)), (pb1, lift2(&pl, j + 1))] {
                        if seg_point_distance(pt, [0.0, 0.0], da).0 <= tol {
                            push(lift, &mut found);
                        }
                    }
                    for (k, pt) in [(i, [0.0, 0.0]), (i + 1, da)] {
                        if seg_point_distance(pt, p2, db).0 <= tol {
                            push(c1.lifts[k], &mut found);
                        }
                    }
                }
            }
        }
        // Endpoint contacts of either polyline against the other.
        let ends1 = [0, c1.len() - 1];
        for &e in &ends1 {
            for j in 0..pl.coords.len() - 1 {
                let (dist, _) = seg_point_distance(u1[e], pl.coords[j], sub(pl.coords[j + 1], pl.coords[j]));
                if dist <= tol {
                    push(c1.lifts[e], &mut found);
                    break;
                }
            }
        }
        let ends2 = [0, pl.coords.len() - 1];
        for &e in &ends2 {
            for i in 0..c1.len() - 1 {
                let (dist, _) = seg_point_distance(pl.coords[e], u1[i], sub(u1[i + 1], u1[i]));
                if dist <= tol {
                    push(lift2(&pl, e), &mut found);
                    break;
                }
            }
        }
    }
    let mut pts: Vec<Point> = found.into_iter().map(|l| Point::from_lift(chart, l)).collect();
    pts.sort_by(|a, b| a.lift().cmp(&b.lift()));
    Ok(pts)
}

/// Displacement from `o` to the lift `l` (which sits near `o`), falling back
/// to the plane estimate when the chart does not wrap.
fn chart_local(chart: Chart, o: Lift, l: Lift, plane: [f64; 2]) -> [f64; 2] {
    if chart.wraps() {
        let d = lift_diff(l, o);
        if norm(sub(d, plane)) < 1e-6 {
            return d;
        }
        plane
    } else {
        chart.rel(o, l)
    }
}

/// Nearest point of a polyline to a given point.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    pub edge: usize,
    /// Fraction along the edge.
    pub s: f64,
    pub distance: f64,
    pub lift: Lift,
    pub param: f64,
}

impl Projection {
    fn key(&self) -> f64 {
        self.edge as f64 + self.s
    }
}

pub fn project(c: &MarkedContinuum, x: &Point) -> Projection {
    let chart = c.chart;
    if c.len() == 1 {
        let distance = chart.distance(c.lifts[0], x.lift());
        return Projection { edge: 0, s: 0.0, distance, lift: c.lifts[0], param: c.params[0] };
    }
    // Every sheet of x is tried against every edge: on long edges the sheet
    // nearest an edge's start need not be the one nearest the edge.
    let reps: Vec<Lift> = chart
        .signs()
        .iter()
        .map(|&sg| if sg > 0 { x.lift() } else { lift_neg(x.lift()) })
        .collect();
    let rel = |base: Lift, r: Lift| if chart.wraps() { lift_diff(r, base) } else { chart.rel(base, r) };
    let mut best: Option<(usize, f64, f64, Lift)> = None;
    for i in 0..c.len() - 1 {
        let d = c.edge(c.lifts[i], c.lifts[i + 1]);
        for &r in &reps {
            let (dist, s) = seg_point_distance(rel(c.lifts[i], r), [0.0, 0.0], d);
            if best.map_or(true, |b| dist < b.2) {
                best = Some((i, s, dist, r));
            }
        }
    }
    let (i, s, distance, r) = best.unwrap();
    let d = c.edge(c.lifts[i], c.lifts[i + 1]);
    let l2 = dot(d, d);
    let from_end = norm(rel(c.lifts[i + 1], r)) < norm(rel(c.lifts[i], r));
    let (lift, s) = if s <= 0.0 || l2 == 0.0 {
        (c.lifts[i], 0.0)
    } else if s >= 1.0 {
        (c.lifts[i + 1], 1.0)
    } else if from_end {
        // Measure from the nearer end so that short offsets keep full precision.
        let back = dot(rel(c.lifts[i + 1], r), d) / l2;
        (lift_offset(c.lifts[i + 1], [d[0] * back, d[1] * back]), s)
    } else {
        let fwd = dot(rel(c.lifts[i], r), d) / l2;
        (lift_offset(c.lifts[i], [d[0] * fwd, d[1] * fwd]), s)
    };
    let param = c.params[i] + s * (c.params[i + 1] - c.params[i]);
    Projection { edge: i, s, distance, lift, param }
}

/// Sub-polyline between the projections of `a` and `b`, marked at them.
/// Parameters are renormalised to [0, 1] along the piece.
pub fn subcontinuum(c: &MarkedContinuum, a: &Point, b: &Point, tol: f64) -> Result<MarkedContinuum> {
    let pa = project(c, a);
    let pb = project(c, b);
    for p in [pa, pb] {
        if p.distance > tol {
            return Err(CwError::OffContinuum { distance: p.distance, tol });
        }
    }
    let forward = pa.key() <= pb.key();
    let (first, second) = if forward { (pa, pb) } else { (pb, pa) };
    let (l0, t0) = (first.lift, first.param);
    let (l1, t1) = (second.lift, second.param);
    let second_edge = second.edge;
    let mut lifts = vec![l0];
    let mut params = vec![t0];
    let chart = c.chart;
    for k in first.edge + 1..=second_edge.min(c.len() - 1) {
        if c.params[k] > t0 && c.params[k] < t1 && chart.distance(c.lifts[k], *lifts.last().unwrap()) > 0.0 {
            lifts.push(c.lifts[k]);
            params.push(c.params[k]);
        }
    }
    if chart.distance(l1, *lifts.last().unwrap()) > 0.0 || lifts.len() == 1 && t1 > t0 {
        lifts.push(l1);
        params.push(t1);
    }
    let span = params.last().unwrap() - params[0];
    let params: Vec<f64> = if span > 0.0 {
        let mut p: Vec<f64> = params.iter().map(|t| (t - params[0]) / span).collect();
        *p.last_mut().unwrap() = 1.0;
        p
    } else {
        vec![0.0; lifts.len()]
    };
    let last = lifts.len() - 1;
    let (mp, mq) = if forward { (0, last) } else { (last, 0) };
    Ok(MarkedContinuum { chart, lifts, params, mark_p: mp, mark_q: mq, closed: false })
}
