use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Fixed-point lift of a point: each coordinate is `value / 2^128`, so
/// wrapping `u128` arithmetic is arithmetic mod 1.
pub type Lift = [u128; 2];

pub(crate) const SCALE: f64 = 340_282_366_920_938_463_463_374_607_431_768_211_456.0;

pub fn to_fixed(x: f64) -> u128 {
    let f = x - x.floor();
    let v = f * SCALE;
    if v >= SCALE || !v.is_finite() {
        0
    } else {
        v as u128
    }
}

/// Fixed-point value of num/den mod 1, rounded down.
pub fn fixed_ratio(num: i128, den: u128) -> u128 {
    assert!(den > 0 && den < 1 << 126);
    let den_i = den as i128;
    let mut r = num.rem_euclid(den_i) as u128;
    let mut out = 0u128;
    for _ in 0..128 {
        r <<= 1;
        out <<= 1;
        if r >= den {
            r -= den;
            out |= 1;
        }
    }
    out
}

/// Exact fixed-point value of a decimal literal such as `-0.375`; other
/// float syntax falls back to f64 parsing.
pub fn parse_fixed(s: &str) -> Option<u128> {
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let digits = |d: &str| d.chars().all(|c| c.is_ascii_digit());
    if int.is_empty() && frac.is_empty() || !digits(int) || !digits(frac) || frac.len() > 30 || int.len() > 18 {
        return t.parse::<f64>().ok().filter(|v| v.is_finite()).map(to_fixed);
    }
    let den = 10u128.pow(frac.len() as u32);
    let whole: i128 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let part: i128 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    let num = whole * den as i128 + part;
    Some(fixed_ratio(if neg { -num } else { num }, den))
}

pub fn from_fixed(v: u128) -> f64 {
    v as f64 / SCALE
}

/// Signed difference in (-1/2, 1/2].
pub fn fixed_delta(a: u128, b: u128) -> f64 {
    (a.wrapping_sub(b) as i128) as f64 / SCALE
}

pub fn lift_from(x: [f64; 2]) -> Lift {
    [to_fixed(x[0]), to_fixed(x[1])]
}

pub fn lift_coords(l: Lift) -> [f64; 2] {
    [from_fixed(l[0]), from_fixed(l[1])]
}

/// Shortest torus displacement from `b` to `a`.
pub fn lift_diff(a: Lift, b: Lift) -> [f64; 2] {
    [fixed_delta(a[0], b[0]), fixed_delta(a[1], b[1])]
}

pub fn lift_neg(a: Lift) -> Lift {
    [a[0].wrapping_neg(), a[1].wrapping_neg()]
}

fn offset_coord(v: u128, d: f64) -> u128 {
    let frac = d - d.round();
    let step = (frac * SCALE) as i128;
    v.wrapping_add(step as u128)
}

/// `l + d` mod 1; `d` may be any size.
pub fn lift_offset(l: Lift, d: [f64; 2]) -> Lift {
    [offset_coord(l[0], d[0]), offset_coord(l[1], d[1])]
}

/// Offset by `hi + lo` per coordinate, keeping the low-order parts.
pub fn lift_offset_split(l: Lift, hi: [f64; 2], lo: [f64; 2]) -> Lift {
    let step = |h: f64, o: f64| {
        let h = h - h.round();
        ((h * SCALE) as i128).wrapping_add((o * SCALE).round() as i128) as u128
    };
    [l[0].wrapping_add(step(hi[0], lo[0])), l[1].wrapping_add(step(hi[1], lo[1]))]
}

pub fn norm(d: [f64; 2]) -> f64 {
    d[0].hypot(d[1])
}

pub fn sup_norm(d: [f64; 2]) -> f64 {
    d[0].abs().max(d[1].abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    /// Flat torus R²/Z².
    Torus,
    /// Torus modulo v ~ -v, with the quotient metric.
    SphereQuotient,
    /// Unit square with its boundary collapsed to one point (an azimuthal
    /// picture of the sphere: the centre is the south pole, the boundary
    /// the north pole). Coordinate 0 encodes the boundary.
    SphereGeographic,
}

impl Chart {
    pub fn canonical(self, l: Lift) -> Lift {
        match self {
            Chart::Torus => l,
            Chart::SphereQuotient => {
                let n = lift_neg(l);
                if n < l {
                    n
                } else {
                    l
                }
            }
            Chart::SphereGeographic => {
                if l[0] == 0 || l[1] == 0 {
                    [0, 0]
                } else {
                    l
                }
            }
        }
    }

    /// Distance from a square-chart point to the collapsed boundary.
    pub fn boundary_distance(l: Lift) -> f64 {
        if l[0] == 0 || l[1] == 0 {
            return 0.0;
        }
        let [x, y] = lift_coords(l);
        x.min(1.0 - x).min(y).min(1.0 - y)
    }

    pub fn distance(self, a: Lift, b: Lift) -> f64 {
        match self {
            Chart::Torus => norm(lift_diff(a, b)),
            Chart::SphereQuotient => norm(lift_diff(a, b)).min(norm(lift_diff(a, lift_neg(b)))),
            Chart::SphereGeographic => {
                let [ax, ay] = lift_coords(a);
                let [bx, by] = lift_coords(b);
                let direct = if Self::boundary_distance(a) == 0.0 || Self::boundary_distance(b) == 0.0 {
                    f64::INFINITY
                } else {
                    sup_norm([ax - bx, ay - by])
                };
                direct.min(Self::boundary_distance(a) + Self::boundary_distance(b))
            }
        }
    }

    /// The representative of `p` nearest to the lift `base`.
    pub fn nearest_rep(self, base: Lift, p: Lift) -> Lift {
        match self {
            Chart::SphereQuotient => {
                let n = lift_neg(p);
                if norm(lift_diff(n, base)) < norm(lift_diff(p, base)) {
                    n
                } else {
                    p
                }
            }
            _ => p,
        }
    }

    /// Shortest lift displacement from `base` to a representative of `p`.
    pub fn rel(self, base: Lift, p: Lift) -> [f64; 2] {
        match self {
            Chart::Torus | Chart::SphereQuotient => lift_diff(self.nearest_rep(base, p), base),
            Chart::SphereGeographic => {
                let [bx, by] = lift_coords(base);
                let [px, py] = lift_coords(p);
                [px - bx, py - by]
            }
        }
    }

    /// Sheets (signs) under which lifts are identified.
    pub fn signs(self) -> &'static [i8] {
        match self {
            Chart::SphereQuotient => &[1, -1],
            _ => &[1],
        }
    }

    pub fn wraps(self) -> bool {
        !matches!(self, Chart::SphereGeographic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Point {
    chart: Chart,
    lift: Lift,
}

impl Point {
    pub fn new(chart: Chart, x: f64, y: f64) -> Self {
        Self::from_lift(chart, lift_from([x, y]))
    }

    pub fn torus(x: f64, y: f64) -> Self {
        Self::new(Chart::Torus, x, y)
    }

    /// The point (num[0]/den, num[1]/den), exact to the lift resolution.
    pub fn rational(chart: Chart, num: [i64; 2], den: u64) -> Self {
        Self::from_lift(chart, num.map(|n| fixed_ratio(n as i128, den as u128)))
    }

    /// Parses `"x,y"` with decimal literals read exactly.
    pub fn parse(chart: Chart, s: &str) -> Option<Self> {
        let (a, b) = s.split_once(',')?;
        Some(Self::from_lift(chart, [parse_fixed(a)?, parse_fixed(b)?]))
    }

    pub fn from_lift(chart: Chart, lift: Lift) -> Self {
        Point { chart, lift: chart.canonical(lift) }
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn lift(&self) -> Lift {
        self.lift
    }

    pub fn coords(&self) -> [f64; 2] {
        lift_coords(self.lift)
    }
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    chart: Chart,
    coords: [f64; 2],
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PointRecord { chart: self.chart, coords: self.coords() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PointRecord::deserialize(d)?;
        Ok(Point::new(r.chart, r.coords[0], r.coords[1]))
    }
}
