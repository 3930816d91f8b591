use cwdyn::cwmetric::{calibrate, MetricConstants};
use cwdyn::models::{lift_offset, Point, SystemModel};
use cwdyn::periodic::{approximate_periodic, find_return, finder_registry, katok_iterate, select_k, verify_periodic, KatokParams};

fn cat() -> (SystemModel, MetricConstants) {
    let sys = SystemModel::cat();
    let consts = calibrate(&sys, 0.25, 200).unwrap();
    (sys, consts)
}

/// Closed-form minimal k: r = a·b^k < 1 and r/(1 − r) ≤ eps.
fn select_k_oracle(a: f64, b: f64, eps: f64) -> u32 {
    (1..).find(|&k| {
        let r = a * b.powi(k);
        r < 1.0 && r / (1.0 - r) <= eps
    })
    .unwrap() as u32
}

#[test]
fn select_k_examples() {
    assert_eq!(select_k(2.0, 0.5, 1.0), 2);
    assert_eq!(select_k(2.0, 0.5, 0.1), 5);
    assert_eq!(select_k(2.0, 0.5, 1e300), 2);
    assert_eq!(select_k(8.0, 0.25, 1e300), 2);
    for (a, b, eps) in [(3.7, 0.81, 1e-3), (1.5, 0.2, 0.5), (12.0, 0.97, 1e-9)] {
        assert_eq!(select_k(a, b, eps), select_k_oracle(a, b, eps));
    }
}

#[test]
fn returns_of_periodic_seeds() {
    let (sys, _) = cat();
    let origin = sys.point(0.0, 0.0);
    let (y, k) = find_return(&sys, &origin, 1e-3, 7, 1000).unwrap();
    assert_eq!(y, origin);
    assert!(k >= 7);
    let p = sys.rational([1, 2], 5);
    for k_min in [1, 2, 5, 10, 11] {
        let (y, k) = find_return(&sys, &p, 1e-3, k_min, 1000).unwrap();
        assert_eq!(y, p);
        assert_eq!(k, 2 * k_min.div_ceil(2));
    }
}

#[test]
fn return_of_a_generic_seed_meets_the_bound() {
    let (sys, _) = cat();
    let p = sys.point(0.3141592653589793, 0.2718281828459045);
    let bound = 1e-2;
    let (y, k) = find_return(&sys, &p, bound, 10, 200_000).unwrap();
    assert!(k >= 10);
    assert!(sys.distance(&y, &p).unwrap() < bound);
    assert!(sys.distance(&sys.iterate(&y, k as i64).unwrap(), &p).unwrap() < bound);
}

#[test]
fn verify_periodic_examples() {
    let (sys, _) = cat();
    let origin = verify_periodic(&sys, &sys.point(0.0, 0.0), 1, 1e-9).unwrap();
    assert!(origin.ok && origin.residual == 0.0);
    let p = sys.rational([1, 2], 5);
    let two = verify_periodic(&sys, &p, 2, 1e-9).unwrap();
    assert!(two.ok && two.residual < 1e-12);
    assert!(!verify_periodic(&sys, &p, 3, 1e-9).unwrap().ok);
}

#[test]
fn periodic_seed_is_a_fixed_loop() {
    let (sys, consts) = cat();
    let kp = KatokParams::derive(&sys, &consts, 0.1, None, 2).unwrap();
    let y = sys.rational([1, 2], 5);
    let run = katok_iterate(&sys, &y, 2, &kp, &consts, 10).unwrap();
    assert!(run.converged);
    assert!(sys.distance(&run.q, &y).unwrap() < 1e-15);
    assert!(run.steps.iter().all(|s| sys.distance(&s.y, &y).unwrap() < 1e-15));
}

#[test]
fn nearby_seed_converges_to_the_rational_orbit() {
    let (sys, consts) = cat();
    let kp = KatokParams::derive(&sys, &consts, 0.1, None, 2).unwrap();
    let target = sys.rational([1, 2], 5);
    let y = Point::from_lift(sys.chart(), lift_offset(target.lift(), [3e-5, -2e-5]));
    let run = katok_iterate(&sys, &y, 2, &kp, &consts, 20).unwrap();
    assert!(run.converged && run.envelope_ok);
    assert!(sys.distance(&run.q, &target).unwrap() < 1e-9);
    assert!(verify_periodic(&sys, &run.q, 2, 1e-9).unwrap().ok);
}

#[test]
fn katok_parameters_chain() {
    let (sys, consts) = cat();
    let kp = KatokParams::derive(&sys, &consts, 1e-2, None, 2).unwrap();
    assert!(kp.c < kp.alpha_target / 2.0);
    assert!(kp.delta * 2.0 <= kp.eps);
    assert!(kp.gamma < kp.delta / 2.0);
    assert!(kp.beta < kp.gamma / 3.0);
    assert!(4.0 * consts.lambda.powi(-(kp.k0 as i32)) * kp.d_cap <= kp.beta);
    let r = (1.0 + kp.delta).powi(2) * 4.0 * consts.lambda.powi(-(kp.k0 as i32));
    assert!(r < 1.0 && r / (1.0 - r) <= kp.beta);
    assert_eq!(kp.k0, 45);
}

#[test]
fn generic_seed_residuals_decay() {
    let (sys, consts) = cat();
    let kp = KatokParams::derive(&sys, &consts, 0.1, None, 2).unwrap();
    let p = sys.point(0.6180339887, 0.1234567);
    let finder = finder_registry();
    let rec = approximate_periodic(&sys, &p, &kp, &consts, finder.get("grid-orbit").unwrap(), 2_000_000, 20).unwrap();
    assert!(rec.run.converged && rec.run.envelope_ok);
    assert!(rec.distance_to_p < kp.alpha_target);
    let rate = (1.0 + kp.delta).powi(2) * 4.0 * consts.lambda.powi(-(rec.k as i32));
    let r0 = rec.run.steps[0].residual;
    for s in &rec.run.steps {
        assert!(s.residual <= r0 * rate.powi(s.n as i32) + 1e-14, "step {}: {} vs {}", s.n, s.residual, r0 * rate.powi(s.n as i32));
    }
    assert!(verify_periodic(&sys, &rec.run.q, rec.k, 1e-9).unwrap().ok);
}
