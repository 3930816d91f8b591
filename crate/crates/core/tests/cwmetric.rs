use cwdyn::continua::MarkedContinuum;
use cwdyn::cwmetric::{calibrate, capital_n, d_metric, d_prime, eigen_segment, p_metric, rho, CapN, MetricConstants, Orbit};
use cwdyn::models::{ArcKind, SystemModel};

const PHI2: f64 = 2.618033988749895;

fn cat() -> (SystemModel, MetricConstants) {
    let sys = SystemModel::cat();
    let consts = calibrate(&sys, 0.25, 200).unwrap();
    (sys, consts)
}

/// Least n with PHI2^n · len > c.
fn expansion_steps(len: f64, c: f64) -> u32 {
    (0..).find(|&n| PHI2.powi(n as i32) * len > c).unwrap()
}

#[test]
fn cat_calibration() {
    let (_, k) = cat();
    assert_eq!((k.m, k.n0), (1, 3));
    assert_eq!(k.alpha, 2.0);
    assert!((k.k - 2.0).abs() < 1e-15);
    assert!((k.lambda - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
    assert!((k.xi - 1.0 / (4.0 * k.alpha * k.lambda.powi(2))).abs() < 1e-15);
    assert!(k.k > 1.0 && k.lambda > 1.0 && k.alpha > 1.0);
}

#[test]
fn constants_follow_from_m() {
    for m in 1..5 {
        let k = MetricConstants::from_m(0.25, m);
        assert!((k.alpha - 2f64.powf(1.0 / m as f64)).abs() < 1e-15);
        assert!((k.k - k.alpha.powi(k.n0 as i32) / 4.0).abs() < 1e-12);
        assert!((k.lambda - k.k.powf(1.0 / k.n0 as f64)).abs() < 1e-12);
        assert!(k.alpha.powi(k.n0 as i32 - 1) / 4.0 <= 1.0 + 1e-12, "n0 minimal");
        assert!(k.k > 1.0);
    }
}

#[test]
fn capital_n_examples() {
    let (sys, k) = cat();
    let x = sys.point(0.37, 0.61);
    assert_eq!(capital_n(&sys, &MarkedContinuum::singleton(x), &k).unwrap(), CapN::Infinite);
    let want = expansion_steps(0.01, 0.25);
    assert_eq!(want, 4);
    for kind in [ArcKind::Unstable, ArcKind::Stable] {
        let c = eigen_segment(&sys, &x, kind, 0.01, 0.5).unwrap();
        assert_eq!(capital_n(&sys, &c, &k).unwrap(), CapN::Finite(want));
    }
}

#[test]
fn rho_examples() {
    let (sys, k) = cat();
    let x = sys.point(0.37, 0.61);
    assert_eq!(rho(&sys, &MarkedContinuum::singleton(x), &k).unwrap(), 0.0);
    let long = eigen_segment(&sys, &x, ArcKind::Unstable, 0.3, 0.5).unwrap();
    assert_eq!(rho(&sys, &long, &k).unwrap(), 1.0);
    let short = eigen_segment(&sys, &x, ArcKind::Unstable, 0.01, 0.5).unwrap();
    assert_eq!(rho(&sys, &short, &k).unwrap(), 0.0625);
}

#[test]
fn singletons_vanish() {
    for sys in [SystemModel::cat(), SystemModel::sphere_pa()] {
        let k = calibrate(&sys, sys.c, 200).unwrap();
        let s = MarkedContinuum::singleton(sys.point(0.2, 0.3));
        assert_eq!(p_metric(&sys, &s, &k, 2).unwrap(), 0.0);
        assert_eq!(d_prime(&sys, &s, &k, 2).unwrap(), 0.0);
        assert_eq!(d_metric(&sys, &s, &k, 2).unwrap().value, 0.0);
    }
}

#[test]
fn undivided_chain_is_rho() {
    let (sys, k) = cat();
    for len in [0.3, 0.05, 0.01, 1e-4] {
        let c = eigen_segment(&sys, &sys.point(0.12, 0.83), ArcKind::Unstable, len, 0.3).unwrap();
        assert_eq!(p_metric(&sys, &c, &k, 0).unwrap(), rho(&sys, &c, &k).unwrap());
    }
}

#[test]
fn d_prime_grows_by_lambda_below_xi() {
    let (sys, k) = cat();
    let threshold = 1.0 / (4.0 * k.alpha * k.lambda.powi(k.n0 as i32 - 1));
    let mut tested = 0;
    for i in 0..60 {
        let len = 10f64.powf(-2.0 - i as f64 / 10.0);
        let kind = if i % 2 == 0 { ArcKind::Stable } else { ArcKind::Unstable };
        let c = eigen_segment(&sys, &sys.point(0.011 * i as f64, 0.5), kind, len, 0.25).unwrap();
        let mut o = Orbit::new(&sys, &c, &k, 2).unwrap();
        let d0 = o.d_prime(0).unwrap();
        assert!(d0 <= 1.0);
        if d0 > threshold || d0 == 0.0 {
            continue;
        }
        tested += 1;
        let m = o.d_prime(1).unwrap().max(o.d_prime(-1).unwrap());
        assert!(m >= k.lambda * d0 * (1.0 - 1e-12), "len {len}: {m} < λ·{d0}");
    }
    assert!(tested > 30);
}

#[test]
fn stable_scaling_is_exact() {
    let (sys, k) = cat();
    let c = eigen_segment(&sys, &sys.point(0.7, 0.2), ArcKind::Stable, 1e-6, 0.5).unwrap();
    let mut o = Orbit::new(&sys, &c, &k, 2).unwrap();
    let d0 = o.d(0).unwrap().value;
    assert!(d0 <= k.xi);
    for j in 1..=8 {
        let dj = o.d(j).unwrap().value;
        assert!((dj - k.lambda.powi(-(j as i32)) * d0).abs() <= 1e-6 * dj + k.tail_bound());
    }
}
