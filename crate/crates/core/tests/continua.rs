use cwdyn::continua::{image, intersect, subcontinuum, MarkedContinuum, DEFAULT_TOL};
use cwdyn::models::{ArcKind, SystemModel};

const PHI2: f64 = 2.618033988749895;

fn polyline(sys: &SystemModel, pts: &[[f64; 2]], p: usize, q: usize) -> MarkedContinuum {
    let v: Vec<_> = pts.iter().map(|a| sys.point(a[0], a[1])).collect();
    MarkedContinuum::from_points(&v, p, q).unwrap()
}

#[test]
fn diameters() {
    let sys = SystemModel::cat();
    assert_eq!(MarkedContinuum::singleton(sys.point(0.2, 0.2)).diameter(), 0.0);
    assert!((polyline(&sys, &[[0.0, 0.0], [0.3, 0.0]], 0, 1).diameter() - 0.3).abs() < 1e-15);
    let wrap = polyline(&sys, &[[0.1, 0.0], [0.5, 0.0], [0.9, 0.0]], 0, 2);
    assert!((wrap.diameter() - 0.4).abs() < 1e-15);
}

#[test]
fn image_at_zero_is_identity() {
    let sys = SystemModel::cat();
    let c = polyline(&sys, &[[0.1, 0.2], [0.15, 0.22], [0.2, 0.21]], 0, 2);
    assert_eq!(image(&sys, &c, 0).unwrap(), c);
}

#[test]
fn eigen_images_scale_diameters() {
    let sys = SystemModel::cat();
    let x = sys.point(0.41, 0.13);
    let s = sys.local_arc(&x, ArcKind::Stable, 0.05, 3).unwrap();
    let ratio = image(&sys, &s, 1).unwrap().diameter() / s.diameter();
    assert!((ratio - 1.0 / PHI2).abs() < 1e-9);

    let u = cwdyn::cwmetric::eigen_segment(&sys, &x, ArcKind::Unstable, 0.01, 0.5).unwrap();
    let img = image(&sys, &u, 4).unwrap();
    let w = img.unwrapped();
    let pre_wrap = (w[w.len() - 1][0] - w[0][0]).hypot(w[w.len() - 1][1] - w[0][1]);
    assert!((pre_wrap - 0.01 * PHI2.powi(4)).abs() < 1e-9, "{pre_wrap}");
    assert!((pre_wrap - 0.469).abs() < 1e-3);
}

#[test]
fn crossing_segments_meet_once() {
    let sys = SystemModel::cat();
    let a = polyline(&sys, &[[0.4, 0.4], [0.6, 0.6]], 0, 1);
    let b = polyline(&sys, &[[0.4, 0.6], [0.6, 0.4]], 0, 1);
    let pts = intersect(&a, &b, DEFAULT_TOL).unwrap();
    assert_eq!(pts.len(), 1);
    assert!(sys.distance(&pts[0], &sys.point(0.5, 0.5)).unwrap() < 1e-12);
}

#[test]
fn parallel_segments_are_disjoint() {
    let sys = SystemModel::cat();
    let a = polyline(&sys, &[[0.1, 0.1], [0.3, 0.1]], 0, 1);
    let b = polyline(&sys, &[[0.1, 0.2], [0.3, 0.2]], 0, 1);
    assert!(intersect(&a, &b, DEFAULT_TOL).unwrap().is_empty());
}

#[test]
fn arcs_near_a_spine_meet_twice() {
    let sys = SystemModel::sphere_pa();
    let x = sys.point(0.004, 0.003);
    let s = sys.local_arc(&x, ArcKind::Stable, 0.05, 3).unwrap();
    let u = sys.local_arc(&x, ArcKind::Unstable, 0.05, 3).unwrap();
    assert_eq!(intersect(&s, &u, DEFAULT_TOL).unwrap().len(), 2);
}

#[test]
fn subcontinua() {
    let sys = SystemModel::cat();
    let c = polyline(&sys, &[[0.1, 0.1], [0.2, 0.1], [0.2, 0.2]], 0, 2);
    let v = sys.point(0.2, 0.1);
    let single = subcontinuum(&c, &v, &v, DEFAULT_TOL).unwrap();
    assert!(single.is_singleton());
    assert!(sys.distance(&single.p(), &v).unwrap() < 1e-15);

    let whole = subcontinuum(&c, &c.vertex(2), &c.vertex(0), DEFAULT_TOL).unwrap();
    assert_eq!(whole.len(), 3);
    assert!(sys.distance(&whole.p(), &c.vertex(2)).unwrap() < 1e-15);
    assert!(sys.distance(&whole.q(), &c.vertex(0)).unwrap() < 1e-15);

    let mid = subcontinuum(&c, &sys.point(0.15, 0.1), &sys.point(0.2, 0.15), DEFAULT_TOL).unwrap();
    assert_eq!(mid.len(), 3);
    assert!(sys.distance(&mid.vertex(1), &v).unwrap() < 1e-15);
}

#[test]
fn off_continuum_points_are_rejected() {
    let sys = SystemModel::cat();
    let c = polyline(&sys, &[[0.1, 0.1], [0.2, 0.1]], 0, 1);
    assert!(subcontinuum(&c, &sys.point(0.15, 0.3), &c.q(), DEFAULT_TOL).is_err());
}

#[test]
fn records_roundtrip_through_json() {
    let sys = SystemModel::sphere_pa();
    let c = polyline(&sys, &[[0.1, 0.1], [0.12, 0.11], [0.13, 0.15]], 2, 0);
    let text = serde_json::to_string(&c).unwrap();
    let back = MarkedContinuum::from_record(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back.len(), 3);
    assert_eq!((back.mark_p(), back.mark_q()), (2, 0));
    for i in 0..3 {
        assert!(sys.distance(&back.vertex(i), &c.vertex(i)).unwrap() < 1e-15);
    }
}
