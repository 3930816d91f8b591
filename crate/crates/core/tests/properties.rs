use cwdyn::continua::{image, intersect, project, MarkedContinuum, DEFAULT_TOL};
use cwdyn::cwmetric::{calibrate, d_metric, evaluate, MetricConstants};
use cwdyn::models::{ArcKind, SystemModel};
use cwdyn::periodic::select_k;
use proptest::prelude::*;
use std::sync::OnceLock;

fn cat() -> &'static (SystemModel, MetricConstants) {
    static CAT: OnceLock<(SystemModel, MetricConstants)> = OnceLock::new();
    CAT.get_or_init(|| {
        let sys = SystemModel::cat();
        let k = calibrate(&sys, 0.25, 200).unwrap();
        (sys, k)
    })
}

/// Bent polyline from `start`, total length 10^log_len, with the given turns.
fn polyline(sys: &SystemModel, start: (f64, f64), heading: f64, log_len: f64, turns: &[f64], marks: (usize, usize)) -> MarkedContinuum {
    let n = turns.len() + 1;
    let step = 10f64.powf(log_len) / turns.len().max(1) as f64;
    let mut at = [start.0, start.1];
    let mut th = heading;
    let mut pts = vec![sys.point(at[0], at[1])];
    for t in turns {
        at = [at[0] + step * th.cos(), at[1] + step * th.sin()];
        pts.push(sys.point(at[0], at[1]));
        th += t;
    }
    MarkedContinuum::from_points(&pts, marks.0 % n, marks.1 % n).unwrap()
}

fn continuum() -> impl Strategy<Value = MarkedContinuum> {
    (
        (0.0..1.0f64, 0.0..1.0f64),
        0.0..std::f64::consts::TAU,
        -7.0..-1.5f64,
        prop::collection::vec(-1.0..1.0f64, 1..12),
        (0usize..16, 0usize..16),
    )
        .prop_map(|(s, h, l, turns, m)| polyline(&cat().0, s, h, l, &turns, m))
}

fn hausdorff(a: &MarkedContinuum, b: &MarkedContinuum) -> f64 {
    let one = |x: &MarkedContinuum, y: &MarkedContinuum| x.vertices().iter().map(|v| project(y, v).distance).fold(0.0, f64::max);
    one(a, b).max(one(b, a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_a_metric(a in (0.0..1.0f64, 0.0..1.0f64), b in (0.0..1.0f64, 0.0..1.0f64), c in (0.0..1.0f64, 0.0..1.0f64)) {
        for sys in [SystemModel::cat(), SystemModel::sphere_pa()] {
            let (a, b, c) = (sys.point(a.0, a.1), sys.point(b.0, b.1), sys.point(c.0, c.1));
            let d = |x, y| sys.distance(x, y).unwrap();
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-15);
            prop_assert!(d(&a, &b) <= std::f64::consts::FRAC_1_SQRT_2 + 1e-15);
        }
    }

    #[test]
    fn images_roundtrip(c in continuum(), n in 1i64..6) {
        let sys = &cat().0;
        let back = image(sys, &image(sys, &c, n).unwrap(), -n).unwrap();
        prop_assert!(hausdorff(&back, &c) < 1e-8);
    }

    #[test]
    fn stable_diameters_do_not_grow(x in (0.0..1.0f64, 0.0..1.0f64), eps in 1e-4..0.2f64) {
        let sys = &cat().0;
        let arc = sys.local_arc(&sys.point(x.0, x.1), ArcKind::Stable, eps, 3).unwrap();
        let mut prev = arc.diameter();
        for n in 1..8 {
            let d = image(sys, &arc, n).unwrap().diameter();
            prop_assert!(d <= prev * (1.0 + 1e-12));
            prev = d;
        }
    }

    #[test]
    fn intersection_is_symmetric(a in continuum(), b in continuum()) {
        let ab = intersect(&a, &b, DEFAULT_TOL).unwrap();
        let ba = intersect(&b, &a, DEFAULT_TOL).unwrap();
        prop_assert_eq!(ab.len(), ba.len());
        let sys = &cat().0;
        for p in &ab {
            prop_assert!(ba.iter().any(|q| sys.distance(p, q).unwrap() < 1e-12));
        }
    }

    #[test]
    fn d_ignores_mark_order(c in continuum()) {
        let (sys, k) = cat();
        let d = d_metric(sys, &c, k, 2).unwrap().value;
        prop_assert_eq!(d_metric(sys, &c.swapped(), k, 2).unwrap().value, d);
    }

    #[test]
    fn p_rho_d_sandwich(c in continuum()) {
        let (sys, k) = cat();
        let r = evaluate(sys, &c, k, 2).unwrap();
        prop_assert!(r.p <= r.rho * (1.0 + 1e-12));
        prop_assert!(r.rho <= 4.0 * r.p * (1.0 + 1e-12));
        prop_assert!(r.d_prime >= r.p * (1.0 - 1e-12));
        prop_assert!(r.d >= r.d_prime * (1.0 - 1e-12));
    }

    #[test]
    fn select_k_is_minimal(a in 1.01..20.0f64, b in 0.05..0.95f64, log_eps in -10.0..1.0f64) {
        let eps = 10f64.powf(log_eps);
        let k = select_k(a, b, eps);
        let ok = |k: u32| {
            let r = a * b.powi(k as i32);
            r < 1.0 && r / (1.0 - r) <= eps
        };
        prop_assert!(ok(k));
        prop_assert!(k == 1 || !ok(k - 1));
    }
}
