use super::point::{lift_coords, lift_from, Chart, Lift};
use super::Dynamics;

/// Radial north-south map on the square picture of the sphere: with
/// r = 2·max(|u-½|, |v-½|), points move along rays by r ↦ r^16.
/// The centre (south pole) attracts, the collapsed boundary (north pole) repels.
pub struct NorthSouth;

const POWER: i32 = 16;

fn radial(l: Lift, forward: bool) -> Lift {
    if l[0] == 0 || l[1] == 0 {
        return [0, 0];
    }
    let [u, v] = lift_coords(l);
    let (du, dv) = (u - 0.5, v - 0.5);
    let r = 2.0 * du.abs().max(dv.abs());
    if r == 0.0 {
        return l;
    }
    let scale = if forward { r.powi(POWER - 1) } else { r.powf(1.0 / POWER as f64 - 1.0) };
    let (nu, nv) = (0.5 + du * scale, 0.5 + dv * scale);
    if nu <= 0.0 || nu >= 1.0 || nv <= 0.0 || nv >= 1.0 {
        return [0, 0];
    }
    lift_from([nu, nv])
}

impl Dynamics for NorthSouth {
    fn name(&self) -> &'static str {
        "north-south"
    }

    fn chart(&self) -> Chart {
        Chart::SphereGeographic
    }

    fn map(&self, x: Lift, n: i64) -> Lift {
        let mut y = x;
        for _ in 0..n.unsigned_abs() {
            y = radial(y, n > 0);
        }
        y
    }

    fn push(&self, x: Lift, d: [f64; 2], n: i64) -> [f64; 2] {
        let a = lift_coords(self.map(x, n));
        let [u, v] = lift_coords(x);
        let b = lift_coords(self.map(lift_from([u + d[0], v + d[1]]), n));
        [b[0] - a[0], b[1] - a[1]]
    }
}

/// The identity on the torus.
pub struct Identity;

impl Dynamics for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn chart(&self) -> Chart {
        Chart::Torus
    }

    fn map(&self, x: Lift, _n: i64) -> Lift {
        x
    }

    fn push(&self, _x: Lift, d: [f64; 2], _n: i64) -> [f64; 2] {
        d
    }
}
