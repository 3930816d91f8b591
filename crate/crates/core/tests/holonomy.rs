use cwdyn::continua::{project, MarkedContinuum};
use cwdyn::cwmetric::{calibrate, MetricConstants};
use cwdyn::holonomy::{build_rectangle, holonomy, isometry_check, pseudo_isometry_probe, sample_configuration, HolonomyParams, RectangleOutcome};
use cwdyn::models::{lift_offset, ArcKind, Point, SystemModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PHI2: f64 = 2.618033988749895;

fn setup(sys: &SystemModel) -> (HolonomyParams, MetricConstants) {
    (HolonomyParams::for_model(sys).unwrap(), calibrate(sys, sys.c, 200).unwrap())
}

fn offset(sys: &SystemModel, x: &Point, d: [f64; 2]) -> Point {
    Point::from_lift(sys.chart(), lift_offset(x.lift(), d))
}

/// Eigenvectors of [[2,1],[1,1]]: unstable (1, PHI2 − 2), stable (1, 1 − PHI2).
fn cat_holonomy_oracle(sys: &SystemModel, y: &Point, z: &Point, kind: ArcKind) -> Point {
    let (eu, es) = ([1.0, PHI2 - 2.0], [1.0, 1.0 - PHI2]);
    let (move_along, keep) = match kind {
        ArcKind::Stable => (eu, es),
        ArcKind::Unstable => (es, eu),
    };
    // z + t·move_along − y is parallel to `keep`.
    let r = sys.chart().rel(z.lift(), y.lift());
    let t = (r[0] * keep[1] - r[1] * keep[0]) / (move_along[0] * keep[1] - move_along[1] * keep[0]);
    offset(sys, z, [t * move_along[0], t * move_along[1]])
}

#[test]
fn trivial_holonomy_contains_z() {
    let sys = SystemModel::cat();
    let (params, _) = setup(&sys);
    let x = sys.point(0.3, 0.6);
    let pts = holonomy(&sys, &x, &x, &x, ArcKind::Stable, &params).unwrap();
    assert!(pts.iter().any(|p| sys.distance(p, &x).unwrap() < 1e-12));
}

#[test]
fn cat_holonomy_is_the_linear_solve() {
    let sys = SystemModel::cat();
    let (params, _) = setup(&sys);
    for i in 0..200 {
        let kind = if i % 2 == 0 { ArcKind::Stable } else { ArcKind::Unstable };
        let f = i as f64;
        let x = sys.point((0.137 * f).fract(), (0.291 * f + 0.05).fract());
        let y = offset(&sys, &x, [0.3 * params.delta * (0.7 * f).sin(), 0.3 * params.delta * (1.3 * f).cos()]);
        let dir = if kind == ArcKind::Stable { [1.0, 1.0 - PHI2] } else { [1.0, PHI2 - 2.0] };
        let n = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let t = 0.4 * params.delta * (0.9 * f).cos() / n;
        let z = offset(&sys, &x, [t * dir[0], t * dir[1]]);
        let pts = holonomy(&sys, &x, &y, &z, kind, &params).unwrap();
        assert_eq!(pts.len(), 1);
        let want = cat_holonomy_oracle(&sys, &y, &z, kind);
        assert!(sys.distance(&pts[0], &want).unwrap() < 1e-10, "instance {i}");
    }
}

#[test]
fn holonomy_points_lie_on_both_arcs() {
    let sys = SystemModel::sphere_pa();
    let (params, _) = setup(&sys);
    let hyp = sys.hyperbolic().unwrap();
    let x = sys.point(0.003, 0.002);
    let y = offset(&sys, &x, [2e-4 * hyp.e_u[0], 2e-4 * hyp.e_u[1]]);
    let z = offset(&sys, &x, [5e-4 * hyp.e_s[0], 5e-4 * hyp.e_s[1]]);
    let pts = holonomy(&sys, &x, &y, &z, ArcKind::Stable, &params).unwrap();
    assert_eq!(pts.len(), 2);
    let transport = sys.local_arc(&z, ArcKind::Unstable, params.eps, params.resolution).unwrap();
    let target = sys.local_arc(&y, ArcKind::Stable, params.eps, params.resolution).unwrap();
    for p in &pts {
        assert!(project(&transport, p).distance <= params.tol);
        assert!(project(&target, p).distance <= params.tol);
    }
}

#[test]
fn far_pairs_are_outside_the_domain() {
    let sys = SystemModel::cat();
    let (params, _) = setup(&sys);
    let x = sys.point(0.3, 0.6);
    let y = offset(&sys, &x, [2.0 * params.delta, 0.0]);
    assert!(holonomy(&sys, &x, &y, &x, ArcKind::Stable, &params).is_err());
}

fn on(c: &MarkedContinuum, p: &Point, tol: f64) -> bool {
    project(c, p).distance <= tol
}

#[test]
fn cat_rectangles_are_parallelograms() {
    let sys = SystemModel::cat();
    let (params, consts) = setup(&sys);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (c, pstar, c_prime) = sample_configuration(&sys, &mut rng, (1e-8, 1e-3)).unwrap();
        let RectangleOutcome::Built(r) = build_rectangle(&sys, &c, &pstar, &c_prime, &params, &consts, 2).unwrap() else {
            panic!("cat rectangle obstructed");
        };
        let [p, q, ps, qs] = r.corners;
        assert_eq!(r.branches, 1);
        let side = sys.chart().rel(p.lift(), q.lift());
        assert!(sys.distance(&offset(&sys, &ps, side), &qs).unwrap() < 1e-12);
        assert!(on(&r.c, &p, params.tol) && on(&r.c, &q, params.tol));
        assert!(on(&r.c_prime, &p, params.tol) && on(&r.c_prime, &ps, params.tol));
        assert!(on(&r.c_star, &ps, params.tol) && on(&r.c_star, &qs, params.tol));
        assert!(on(&r.c_star_star, &q, params.tol) && on(&r.c_star_star, &qs, params.tol));
    }
}

#[test]
fn degenerate_rectangle_collapses() {
    let sys = SystemModel::cat();
    let (params, consts) = setup(&sys);
    let p = sys.point(0.42, 0.17);
    let c = MarkedContinuum::singleton(p);
    let c_prime = sys.local_arc(&p, ArcKind::Unstable, 1e-4, 3).unwrap();
    let pstar = c_prime.vertex(c_prime.len() - 1);
    let r = build_rectangle(&sys, &c, &pstar, &c_prime, &params, &consts, 2).unwrap().built().unwrap();
    assert!(sys.distance(&r.corners[3], &pstar).unwrap() < 1e-12);
    assert_eq!(r.d_star, 0.0);
}

#[test]
fn cat_probe_is_isometric_and_monotone() {
    let sys = SystemModel::cat();
    let (params, consts) = setup(&sys);
    let r = pseudo_isometry_probe(&sys, 300, &[1e-1, 1e-2, 1e-3], (1e-15, 1e-11), &params, &consts, 2, 3).unwrap();
    assert_eq!(r.built, r.samples);
    for row in &r.modulus {
        assert!(row.max_deviation_star <= 1e-6 && row.max_deviation_star_star <= 1e-6);
    }
    for w in r.modulus.windows(2) {
        assert!(w[0].gamma > w[1].gamma);
        assert!(w[1].max_deviation_star <= w[0].max_deviation_star);
        assert!(w[1].max_deviation_star_star <= w[0].max_deviation_star_star);
    }
}

#[test]
fn cat_holonomies_preserve_d() {
    let sys = SystemModel::cat();
    let (params, consts) = setup(&sys);
    let r = isometry_check(&sys, 200, &params, &consts, 2, 11).unwrap();
    assert_eq!(r.successes, r.samples);
}
