//! Concrete homeomorphisms: the cat map, its pseudo-Anosov sphere quotient,
//! a north-south sphere map, and the identity.

mod linear;
mod point;
mod simple;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use linear::{apply_fixed, Hyperbolic, LinearModel};
pub use point::{
    fixed_ratio, from_fixed, lift_coords, lift_diff, lift_from, lift_neg, lift_offset, lift_offset_split, norm, parse_fixed, sup_norm, to_fixed, Chart, Lift,
    Point,
};
pub use simple::{Identity, NorthSouth};

use crate::continua::MarkedContinuum;
use crate::error::{CwError, Result};
use crate::registry::Registry;

pub const DEFAULT_MATRIX: [[i64; 2]; 2] = [[2, 1], [1, 1]];
pub const DEFAULT_C: f64 = 0.25;
pub const DEFAULT_HORIZON: u32 = 60;
pub const DEFAULT_RESOLUTION: usize = 64;

/// A homeomorphism acting on fixed-point lifts of its chart.
pub trait Dynamics: Send + Sync {
    fn name(&self) -> &'static str;
    fn chart(&self) -> Chart;
    fn map(&self, x: Lift, n: i64) -> Lift;
    /// Image under f^n of a short displacement `d` based at `x`, unwrapped.
    fn push(&self, x: Lift, d: [f64; 2], n: i64) -> [f64; 2];
    fn hyperbolic(&self) -> Option<&Hyperbolic> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArcKind {
    Stable,
    Unstable,
}

impl ArcKind {
    pub fn dual(self) -> Self {
        match self {
            ArcKind::Stable => ArcKind::Unstable,
            ArcKind::Unstable => ArcKind::Stable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(default = "default_matrix")]
    pub matrix: [[i64; 2]; 2],
    #[serde(default)]
    pub c: Option<f64>,
}

fn default_matrix() -> [[i64; 2]; 2] {
    DEFAULT_MATRIX
}

impl ModelSpec {
    pub fn named(kind: &str) -> Self {
        ModelSpec { kind: kind.to_string(), matrix: DEFAULT_MATRIX, c: None }
    }
}

pub type ModelFactory = dyn Fn(&ModelSpec) -> Result<Arc<dyn Dynamics>> + Send + Sync;

pub fn model_registry() -> Registry<ModelFactory> {
    let mut r: Registry<ModelFactory> = Registry::new("model");
    r.register("cat", Box::new(|s| Ok(Arc::new(LinearModel::cat(s.matrix)?))));
    r.register("cat-map", Box::new(|s| Ok(Arc::new(LinearModel::cat(s.matrix)?))));
    r.register("sphere-pA", Box::new(|s| Ok(Arc::new(LinearModel::sphere_pa(s.matrix)?))));
    r.register("north-south", Box::new(|_| Ok(Arc::new(NorthSouth))));
    r.register("identity", Box::new(|_| Ok(Arc::new(Identity))));
    r
}

/// A model together with its cw-expansivity constant and discretization caps.
#[derive(Clone)]
pub struct SystemModel {
    dynamics: Arc<dyn Dynamics>,
    pub c: f64,
    pub horizon: u32,
    pub resolution: usize,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("kind", &self.name())
            .field("c", &self.c)
            .field("horizon", &self.horizon)
            .finish()
    }
}

const SPINES: [[f64; 2]; 4] = [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]];

impl SystemModel {
    pub fn new(dynamics: Arc<dyn Dynamics>, c: f64, horizon: u32, resolution: usize) -> Self {
        SystemModel { dynamics, c, horizon, resolution }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let dynamics = model_registry().get(&spec.kind)?(spec)?;
        let c = spec.c.unwrap_or(DEFAULT_C);
        if !(c > 0.0 && c < 0.5) {
            return Err(CwError::Config(format!("model.c = {c} outside (0, 0.5)")));
        }
        Ok(Self::new(dynamics, c, DEFAULT_HORIZON, DEFAULT_RESOLUTION))
    }

    pub fn named(kind: &str) -> Result<Self> {
        Self::from_spec(&ModelSpec::named(kind))
    }

    pub fn cat() -> Self {
        Self::named("cat").expect("default cat map")
    }

    pub fn sphere_pa() -> Self {
        Self::named("sphere-pA").expect("default sphere map")
    }

    pub fn north_south() -> Self {
        Self::named("north-south").expect("north-south map")
    }

    pub fn identity() -> Self {
        Self::named("identity").expect("identity map")
    }

    pub fn name(&self) -> &'static str {
        self.dynamics.name()
    }

    pub fn chart(&self) -> Chart {
        self.dynamics.chart()
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn hyperbolic(&self) -> Option<&Hyperbolic> {
        self.dynamics.hyperbolic()
    }

    pub fn point(&self, x: f64, y: f64) -> Point {
        Point::new(self.chart(), x, y)
    }

    pub fn rational(&self, num: [i64; 2], den: u64) -> Point {
        Point::rational(self.chart(), num, den)
    }

    pub fn map_lift(&self, x: Lift, n: i64) -> Lift {
        self.dynamics.map(x, n)
    }

    pub fn check_horizon(&self, n: i64) -> Result<()> {
        if n.unsigned_abs() > self.horizon as u64 {
            return Err(CwError::Horizon { n, max: self.horizon });
        }
        Ok(())
    }

    pub fn iterate(&self, x: &Point, n: i64) -> Result<Point> {
        self.check_chart(x)?;
        self.check_horizon(n)?;
        Ok(Point::from_lift(self.chart(), self.dynamics.map(x.lift(), n)))
    }

    pub fn check_chart(&self, x: &Point) -> Result<()> {
        if x.chart() != self.chart() {
            return Err(CwError::ChartMismatch(x.chart(), self.chart()));
        }
        Ok(())
    }

    pub fn distance(&self, a: &Point, b: &Point) -> Result<f64> {
        if a.chart() != b.chart() {
            return Err(CwError::ChartMismatch(a.chart(), b.chart()));
        }
        Ok(a.chart().distance(a.lift(), b.lift()))
    }

    /// Lifts of the fixed points of v ↦ -v (quotient charts only).
    pub fn spine_lifts(&self) -> Vec<Lift> {
        match self.chart() {
            Chart::SphereQuotient => SPINES.iter().map(|&s| lift_from(s)).collect(),
            _ => Vec::new(),
        }
    }

    pub fn local_arc(&self, x: &Point, kind: ArcKind, eps: f64, resolution: usize) -> Result<MarkedContinuum> {
        self.check_chart(x)?;
        let hyp = self
            .hyperbolic()
            .ok_or_else(|| CwError::Domain(format!("{} has no one-dimensional local arcs", self.name())))?;
        if !(eps > 0.0 && eps < self.c) {
            return Err(CwError::Calibration(format!("eps {eps} must lie in (0, c = {})", self.c)));
        }
        if resolution < 2 {
            return Err(CwError::Domain("resolution must be at least 2".into()));
        }
        let dir = match kind {
            ArcKind::Stable => hyp.e_s,
            ArcKind::Unstable => hyp.e_u,
        };
        let base = x.lift();
        let (mut lo, mut hi) = (-eps, eps);
        for s in self.spine_lifts() {
            let [cu, cs] = hyp.coords(lift_diff(s, base));
            let (along, perp) = match kind {
                ArcKind::Stable => (cs, cu),
                ArcKind::Unstable => (cu, cs),
            };
            if perp.abs() < 1e-12 && along.abs() <= eps {
                if along > 1e-15 {
                    hi = along;
                } else if along < -1e-15 {
                    lo = along;
                } else {
                    lo = 0.0;
                }
            }
        }
        let mut ts: Vec<f64> = (0..resolution)
            .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
            .collect();
        ts[resolution - 1] = hi;
        if !ts.iter().any(|&t| t == 0.0) {
            let pos = ts.partition_point(|&t| t < 0.0);
            ts.insert(pos, 0.0);
        }
        let lifts: Vec<Lift> = ts.iter().map(|&t| lift_offset(base, [dir[0] * t, dir[1] * t])).collect();
        let params: Vec<f64> = ts.iter().map(|&t| (t - lo) / (hi - lo)).collect();
        let chart = self.chart();
        let last = lifts.len() - 1;
        if chart.distance(lifts[0], lifts[last]) < 1e-12 {
            return Err(CwError::Domain("local arc closes up".into()));
        }
        let steps = self.horizon.min(24) as i64;
        let sign = if kind == ArcKind::Stable { 1 } else { -1 };
        for end in [lifts[0], lifts[last]] {
            for n in 1..=steps {
                let d = chart.distance(self.map_lift(end, sign * n), self.map_lift(base, sign * n));
                if d > eps * (1.0 + 1e-9) + 1e-15 {
                    return Err(CwError::ModelFault(format!("local arc leaves the eps-tube at n = {}", sign * n)));
                }
            }
        }
        Ok(MarkedContinuum::from_parts(chart, lifts, params, 0, last))
    }

    /// The point on the unstable leaf of `u_point` and the stable leaf of
    /// `s_point` nearest `near`, exact along the leaf named by `exact_on`.
    pub fn leaf_meet(&self, u_point: &Point, s_point: &Point, near: &Point, exact_on: ArcKind) -> Result<Point> {
        for x in [u_point, s_point, near] {
            self.check_chart(x)?;
        }
        let hyp = self
            .hyperbolic()
            .ok_or_else(|| CwError::Domain(format!("{} has no linear leaves", self.name())))?;
        let chart = self.chart();
        let a = chart.nearest_rep(near.lift(), u_point.lift());
        let b = chart.nearest_rep(near.lift(), s_point.lift());
        Ok(Point::from_lift(chart, hyp.leaf_meet(a, b, exact_on)))
    }

    /// The meet y' of the unstable leaf of `u_point` with the stable leaf of
    /// `s_point` nearest `near`, and f^{-n}(y') computed without amplifying
    /// the rounding of y'.
    pub fn meet_pullback(&self, u_point: &Point, s_point: &Point, near: &Point, n: i64) -> Result<(Point, Point)> {
        for x in [u_point, s_point, near] {
            self.check_chart(x)?;
        }
        self.check_horizon(n)?;
        let hyp = self
            .hyperbolic()
            .ok_or_else(|| CwError::Domain(format!("{} has no linear leaves", self.name())))?;
        let chart = self.chart();
        let a = chart.nearest_rep(near.lift(), u_point.lift());
        let b = chart.nearest_rep(near.lift(), s_point.lift());
        let (meet, back) = hyp.meet_pullback(a, b, n);
        Ok((Point::from_lift(chart, meet), Point::from_lift(chart, back)))
    }

    pub fn is_spine(&self, x: &Point, eps: f64, tol: f64) -> Result<bool> {
        let arc = self.local_arc(x, ArcKind::Stable, eps, 2)?;
        let ends = arc.endpoints();
        Ok(ends.iter().any(|e| self.chart().distance(*e, x.lift()) <= tol))
    }
}
