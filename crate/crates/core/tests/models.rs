use cwdyn::models::{ArcKind, Chart, Point, SystemModel};
use cwdyn::CwError;

const PHI2: f64 = 2.618033988749895; // (3 + √5)/2

fn close(a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
    (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
}

#[test]
fn cat_iterates() {
    let sys = SystemModel::cat();
    assert_eq!(sys.iterate(&sys.point(0.0, 0.0), 5).unwrap().coords(), [0.0, 0.0]);
    let p = sys.rational([1, 2], 5);
    assert!(sys.distance(&sys.iterate(&p, 2).unwrap(), &p).unwrap() < 1e-15);
    assert!(close(sys.iterate(&sys.point(0.1, 0.2), 1).unwrap().coords(), [0.4, 0.3], 1e-15));
}

#[test]
fn forward_backward_roundtrip() {
    for sys in [SystemModel::cat(), SystemModel::sphere_pa()] {
        for i in 1..20 {
            let x = sys.point(0.037 * i as f64, 0.61 - 0.029 * i as f64);
            for n in [1, 7, 20] {
                let back = sys.iterate(&sys.iterate(&x, n).unwrap(), -n).unwrap();
                assert!(sys.distance(&back, &x).unwrap() < 1e-12, "{} n={n}", sys.name());
            }
        }
    }
}

#[test]
fn north_south_roundtrip_near_the_repeller() {
    let sys = SystemModel::north_south();
    for i in 0..20 {
        let t = 0.951 + 0.002 * i as f64;
        let x = sys.point(0.5 + t / 2.0, 0.5 - 0.3 * t / 2.0);
        let back = sys.iterate(&sys.iterate(&x, 1).unwrap(), -1).unwrap();
        assert!(sys.distance(&back, &x).unwrap() < 1e-12);
    }
}

#[test]
fn horizon_is_enforced() {
    let sys = SystemModel::cat();
    let err = sys.iterate(&sys.point(0.1, 0.1), sys.horizon as i64 + 1).unwrap_err();
    assert!(matches!(err, CwError::Horizon { .. }));
}

#[test]
fn torus_distances() {
    let sys = SystemModel::cat();
    assert!((sys.distance(&sys.point(0.1, 0.0), &sys.point(0.9, 0.0)).unwrap() - 0.2).abs() < 1e-15);
    let a = sys.point(0.3, 0.7);
    assert_eq!(sys.distance(&a, &a).unwrap(), 0.0);
}

#[test]
fn quotient_identifies_antipodes() {
    let sys = SystemModel::sphere_pa();
    assert!(sys.distance(&sys.point(0.1, 0.1), &sys.point(0.9, 0.9)).unwrap() < 1e-15);
    let a = Point::rational(Chart::SphereQuotient, [4, 3], 10);
    let b = Point::rational(Chart::SphereQuotient, [1, 2], 5);
    assert_eq!(a.coords(), [0.4, 0.3]);
    assert!(sys.distance(&a, &b).unwrap() > 0.1);
    let c = Point::rational(Chart::SphereQuotient, [-4, -3], 10);
    assert!(sys.distance(&a, &c).unwrap() < 1e-30);
}

#[test]
fn chart_mismatch_is_an_error() {
    let sys = SystemModel::cat();
    let other = Point::new(Chart::SphereQuotient, 0.1, 0.1);
    assert!(matches!(sys.distance(&sys.point(0.1, 0.1), &other), Err(CwError::ChartMismatch(..))));
}

#[test]
fn cat_stable_arc_is_centered_eigen_segment() {
    let sys = SystemModel::cat();
    let x = sys.point(0.3, 0.3);
    let arc = sys.local_arc(&x, ArcKind::Stable, 0.2, 9).unwrap();
    let w = arc.unwrapped();
    let (a, b) = (w[0], w[w.len() - 1]);
    let length = (b[0] - a[0]).hypot(b[1] - a[1]);
    assert!((length - 0.4).abs() < 1e-9, "length {length}");
    // Direction of the eigenvalue (3 - √5)/2 of [[2,1],[1,1]]: (1, -PHI2 + 1).
    let dir = [1.0, 1.0 - PHI2];
    assert!(((b[0] - a[0]) * dir[1] - (b[1] - a[1]) * dir[0]).abs() < 1e-9);
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let origin = arc.unwrapped()[arc.vertices().iter().position(|v| *v == x).expect("x is a vertex")];
    assert!(close(mid, origin, 1e-9));
}

#[test]
fn coarsest_arc_has_its_endpoints() {
    let sys = SystemModel::cat();
    let x = sys.point(0.3, 0.3);
    let fine = sys.local_arc(&x, ArcKind::Unstable, 0.1, 17).unwrap();
    let coarse = sys.local_arc(&x, ArcKind::Unstable, 0.1, 2).unwrap();
    let (f, c) = (fine.endpoints(), coarse.endpoints());
    let chart = sys.chart();
    assert!(chart.distance(f[0], c[0]) < 1e-12 && chart.distance(f[1], c[1]) < 1e-12);
}

#[test]
fn spine_arc_ends_at_the_spine() {
    let sys = SystemModel::sphere_pa();
    let x = sys.point(0.0, 0.0);
    let arc = sys.local_arc(&x, ArcKind::Stable, 0.2, 9).unwrap();
    let ends = arc.endpoints();
    assert!(ends.iter().any(|e| sys.chart().distance(*e, x.lift()) < 1e-12));
}

#[test]
fn spines_of_the_quotient() {
    let pa = SystemModel::sphere_pa();
    for [i, j] in [[0, 0], [1, 0], [0, 1], [1, 1]] {
        assert!(pa.is_spine(&pa.rational([i, j], 2), 0.1, 1e-12).unwrap());
    }
    assert!(!pa.is_spine(&pa.point(0.3, 0.3), 0.1, 1e-12).unwrap());
    let cat = SystemModel::cat();
    for x in [cat.point(0.0, 0.0), cat.point(0.5, 0.5), cat.point(0.3, 0.7)] {
        assert!(!cat.is_spine(&x, 0.1, 1e-12).unwrap());
    }
}

#[test]
fn unstable_arc_expands_by_the_eigenvalue() {
    let sys = SystemModel::cat();
    let arc = sys.local_arc(&sys.point(0.21, 0.43), ArcKind::Unstable, 0.01, 5).unwrap();
    let img = cwdyn::continua::image(&sys, &arc, 1).unwrap();
    let ratio = img.diameter() / arc.diameter();
    assert!((ratio - PHI2).abs() < 1e-9 * PHI2, "{ratio}");
}

#[test]
fn quotient_iterates_are_representative_independent() {
    let sys = SystemModel::sphere_pa();
    for i in 1..30 {
        let (x, y) = (0.031 * i as f64, 0.77 - 0.023 * i as f64);
        let a = Point::new(Chart::SphereQuotient, x, y);
        let b = Point::new(Chart::SphereQuotient, 1.0 - x, 1.0 - y);
        for n in [1, 3, -2] {
            let fa = sys.iterate(&a, n).unwrap();
            let fb = sys.iterate(&b, n).unwrap();
            assert!(sys.distance(&fa, &fb).unwrap() < 1e-10);
        }
    }
}

#[test]
fn models_are_selected_by_name() {
    for name in ["cat", "sphere-pA", "north-south", "identity"] {
        assert_eq!(SystemModel::named(name).unwrap().name(), name);
    }
    assert!(matches!(SystemModel::named("horseshoe"), Err(CwError::Unknown { .. })));
}
