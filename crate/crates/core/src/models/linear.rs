use twofloat::TwoFloat;

use super::point::{lift_offset_split, Chart, Lift, SCALE};
use super::{ArcKind, Dynamics};
use crate::error::{CwError, Result};

/// Eigen-data of a hyperbolic integer matrix with determinant ±1.
#[derive(Debug, Clone)]
pub struct Hyperbolic {
    pub matrix: [[i64; 2]; 2],
    pub inverse: [[i64; 2]; 2],
    pub det: i64,
    pub mu_u: f64,
    pub mu_s: f64,
    pub e_u: [f64; 2],
    pub e_s: [f64; 2],
    basis_inv: [[f64; 2]; 2],
    /// Unnormalized eigenvectors in double-double precision.
    v_u: [TwoFloat; 2],
    v_s: [TwoFloat; 2],
    mu_u_dd: TwoFloat,
}

fn diff_dd(a: u128, b: u128) -> TwoFloat {
    let x = a.wrapping_sub(b) as i128;
    let hi = x as f64;
    let lo = x.wrapping_sub(hi as i128) as f64;
    TwoFloat::new_add(hi, lo) / SCALE
}

/// Quotient with one correction step; `TwoFloat / TwoFloat` alone is only
/// accurate to about f64 precision.
fn div_dd(x: TwoFloat, y: TwoFloat) -> TwoFloat {
    let q = TwoFloat::from(x.hi() / y.hi());
    let r = x - q * y;
    q + r.hi() / y.hi()
}

fn eigenvector_dd(m: [[i64; 2]; 2], mu: TwoFloat) -> [TwoFloat; 2] {
    let [[a, b], [c, d]] = m;
    if b != 0 {
        [TwoFloat::from(b as f64), mu - a as f64]
    } else {
        [mu - d as f64, TwoFloat::from(c as f64)]
    }
}

fn eigenvector(m: [[i64; 2]; 2], mu: f64) -> [f64; 2] {
    let [[a, b], [c, d]] = m.map(|r| r.map(|v| v as f64));
    let v = if b.abs() > 0.0 { [b, mu - a] } else { [mu - d, c] };
    let n = v[0].hypot(v[1]);
    let mut e = [v[0] / n, v[1] / n];
    if e[0] < 0.0 || (e[0] == 0.0 && e[1] < 0.0) {
        e = [-e[0], -e[1]];
    }
    e
}

impl Hyperbolic {
    pub fn new(matrix: [[i64; 2]; 2]) -> Result<Self> {
        let [[a, b], [c, d]] = matrix;
        let det = a * d - b * c;
        if det != 1 && det != -1 {
            return Err(CwError::Config(format!("matrix determinant {det} is not ±1")));
        }
        let tr = (a + d) as f64;
        let disc = tr * tr - 4.0 * det as f64;
        if disc <= 0.0 {
            return Err(CwError::Config("matrix has complex eigenvalues".into()));
        }
        let r1 = (tr + disc.sqrt()) / 2.0;
        let r2 = (tr - disc.sqrt()) / 2.0;
        let (mu_u, mu_s) = if r1.abs() > r2.abs() { (r1, r2) } else { (r2, r1) };
        if (mu_u.abs() - 1.0).abs() < 1e-12 || (mu_s.abs() - 1.0).abs() < 1e-12 {
            return Err(CwError::Config("matrix is not hyperbolic".into()));
        }
        // Stable eigenvalue via det/mu_u to avoid cancellation.
        let mu_s = det as f64 / mu_u;
        let e_u = eigenvector(matrix, mu_u);
        let e_s = eigenvector(matrix, mu_s);
        let bdet = e_u[0] * e_s[1] - e_s[0] * e_u[1];
        let basis_inv = [[e_s[1] / bdet, -e_s[0] / bdet], [-e_u[1] / bdet, e_u[0] / bdet]];
        let inverse = [[d * det, -b * det], [-c * det, a * det]];
        let root = TwoFloat::from(disc).sqrt();
        let t = TwoFloat::from(tr);
        let (p, m) = ((t + root) / 2.0, (t - root) / 2.0);
        let (mu_u_dd, mu_s_dd) = if r1.abs() > r2.abs() { (p, m) } else { (m, p) };
        let v_u = eigenvector_dd(matrix, mu_u_dd);
        let v_s = eigenvector_dd(matrix, mu_s_dd);
        Ok(Hyperbolic { matrix, inverse, det, mu_u, mu_s, e_u, e_s, basis_inv, v_u, v_s, mu_u_dd })
    }

    /// (unstable, stable) coordinates of a displacement.
    pub fn coords(&self, d: [f64; 2]) -> [f64; 2] {
        let m = self.basis_inv;
        [m[0][0] * d[0] + m[0][1] * d[1], m[1][0] * d[0] + m[1][1] * d[1]]
    }

    pub fn from_coords(&self, u: f64, s: f64) -> [f64; 2] {
        [u * self.e_u[0] + s * self.e_s[0], u * self.e_u[1] + s * self.e_s[1]]
    }

    /// Coefficients (a, b) with s_line − u_line = a·v_u + b·v_s, along the
    /// shortest torus displacement, in double-double precision.
    fn split(&self, u_line: Lift, s_line: Lift) -> (TwoFloat, TwoFloat) {
        let d = [diff_dd(s_line[0], u_line[0]), diff_dd(s_line[1], u_line[1])];
        let (vu, vs) = (self.v_u, self.v_s);
        let den = vu[0] * vs[1] - vu[1] * vs[0];
        (div_dd(d[0] * vs[1] - d[1] * vs[0], den), div_dd(vu[0] * d[1] - vu[1] * d[0], den))
    }

    fn place(base: Lift, v: [TwoFloat; 2], t: TwoFloat) -> Lift {
        let off = [v[0] * t, v[1] * t];
        lift_offset_split(base, [off[0].hi(), off[1].hi()], [off[0].lo(), off[1].lo()])
    }

    /// Intersection of the unstable line through `u_line` with the stable line
    /// through `s_line`, placed along the line named by `exact_on` so that the
    /// result lies on it to double-double precision. Both lifts should be close.
    pub fn leaf_meet(&self, u_line: Lift, s_line: Lift, exact_on: ArcKind) -> Lift {
        let (a, b) = self.split(u_line, s_line);
        match exact_on {
            ArcKind::Unstable => Self::place(u_line, self.v_u, a),
            ArcKind::Stable => Self::place(s_line, self.v_s, -b),
        }
    }

    /// The unstable-leaf meet `y'` together with f^{-n}(y'), obtained by
    /// sliding along the unstable leaf of f^{-n}(u_line) instead of
    /// pulling the rounded lift of `y'` back.
    pub fn meet_pullback(&self, u_line: Lift, s_line: Lift, n: i64) -> (Lift, Lift) {
        let (a, _) = self.split(u_line, s_line);
        let back = apply_fixed(&self.power_fixed(-n), u_line);
        (Self::place(u_line, self.v_u, a), Self::place(back, self.v_u, div_dd(a, self.mu_u_dd.powi(n as i32))))
    }

    pub fn push(&self, d: [f64; 2], n: i64) -> [f64; 2] {
        let [u, s] = self.coords(d);
        let n = n as i32;
        self.from_coords(u * self.mu_u.powi(n), s * self.mu_s.powi(n))
    }

    pub fn power_fixed(&self, n: i64) -> [[u128; 2]; 2] {
        let base = if n >= 0 { self.matrix } else { self.inverse };
        let base = base.map(|r| r.map(|v| v as i128 as u128));
        let mut acc = [[1u128, 0], [0, 1]];
        let mut b = base;
        let mut e = n.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                acc = mat_mul(acc, b);
            }
            b = mat_mul(b, b);
            e >>= 1;
        }
        acc
    }

    /// Exact integer power as i128 (valid while entries fit).
    pub fn power_exact(&self, n: i64) -> [[i128; 2]; 2] {
        let base = if n >= 0 { self.matrix } else { self.inverse };
        let base = base.map(|r| r.map(|v| v as i128));
        let mut acc = [[1i128, 0], [0, 1]];
        for _ in 0..n.unsigned_abs() {
            acc = [
                [
                    acc[0][0] * base[0][0] + acc[0][1] * base[1][0],
                    acc[0][0] * base[0][1] + acc[0][1] * base[1][1],
                ],
                [
                    acc[1][0] * base[0][0] + acc[1][1] * base[1][0],
                    acc[1][0] * base[0][1] + acc[1][1] * base[1][1],
                ],
            ];
        }
        acc
    }
}

fn mat_mul(a: [[u128; 2]; 2], b: [[u128; 2]; 2]) -> [[u128; 2]; 2] {
    let mut r = [[0u128; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0].wrapping_mul(b[0][j]).wrapping_add(a[i][1].wrapping_mul(b[1][j]));
        }
    }
    r
}

pub fn apply_fixed(m: &[[u128; 2]; 2], l: Lift) -> Lift {
    [
        m[0][0].wrapping_mul(l[0]).wrapping_add(m[0][1].wrapping_mul(l[1])),
        m[1][0].wrapping_mul(l[0]).wrapping_add(m[1][1].wrapping_mul(l[1])),
    ]
}

/// A hyperbolic toral automorphism, read either on the torus or on its
/// quotient by v ~ -v.
pub struct LinearModel {
    name: &'static str,
    chart: Chart,
    hyp: Hyperbolic,
}

impl LinearModel {
    pub fn cat(matrix: [[i64; 2]; 2]) -> Result<Self> {
        Ok(LinearModel { name: "cat", chart: Chart::Torus, hyp: Hyperbolic::new(matrix)? })
    }

    pub fn sphere_pa(matrix: [[i64; 2]; 2]) -> Result<Self> {
        Ok(LinearModel { name: "sphere-pA", chart: Chart::SphereQuotient, hyp: Hyperbolic::new(matrix)? })
    }
}

impl Dynamics for LinearModel {
    fn name(&self) -> &'static str {
        self.name
    }

    fn chart(&self) -> Chart {
        self.chart
    }

    fn map(&self, x: Lift, n: i64) -> Lift {
        if n == 0 {
            return x;
        }
        apply_fixed(&self.hyp.power_fixed(n), x)
    }

    fn push(&self, _x: Lift, d: [f64; 2], n: i64) -> [f64; 2] {
        self.hyp.push(d, n)
    }

    fn hyperbolic(&self) -> Option<&Hyperbolic> {
        Some(&self.hyp)
    }
}
