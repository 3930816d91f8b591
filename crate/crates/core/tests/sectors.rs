use cwdyn::models::SystemModel;
use cwdyn::sectors::{
    boundary_decay, classify_outline, classify_sector, enclosing_sector, enumerate_spines, find_sectors, sector_parametrization, spine_count,
    spine_sectors, CornerContinuation, Outline, Region, Regularity,
};

type V2 = [f64; 2];

/// Lens with a stable side through (0.5, 0.5) and an unstable side through (0.5, -0.5).
fn lens(f: impl Fn(V2) -> V2) -> Outline {
    let s: Vec<V2> = [[0.0, 0.0], [0.5, 0.5], [1.0, 0.0]].into_iter().map(&f).collect();
    let u: Vec<V2> = [[1.0, 0.0], [0.5, -0.5], [0.0, 0.0]].into_iter().map(&f).collect();
    Outline::from_paths(&s, &u).unwrap()
}

/// Leaves continuing straight through both corners.
fn crossing(f: impl Fn(V2) -> V2) -> [CornerContinuation; 2] {
    [
        CornerContinuation { stable: f([-1.0, -1.0]), unstable: f([-1.0, 1.0]) },
        CornerContinuation { stable: f([1.0, -1.0]), unstable: f([1.0, 1.0]) },
    ]
}

fn id(v: V2) -> V2 {
    v
}

fn mirror(v: V2) -> V2 {
    [v[0], -v[1]]
}

#[test]
fn crossing_leaves_make_a_regular_sector() {
    assert_eq!(classify_outline(&lens(id), &crossing(id), 1e-9).unwrap(), Regularity::Regular);
}

#[test]
fn inward_continuation_is_non_regular() {
    let mut conts = crossing(id);
    conts[0].stable = [1.0, 0.1];
    assert_eq!(classify_outline(&lens(id), &conts, 1e-9).unwrap(), Regularity::NonRegular);
    let mut conts = crossing(id);
    conts[1].unstable = [-1.0, 0.2];
    assert_eq!(classify_outline(&lens(id), &conts, 1e-9).unwrap(), Regularity::NonRegular);
}

#[test]
fn mirrored_fixture_stays_regular() {
    assert_eq!(classify_outline(&lens(mirror), &crossing(mirror), 1e-9).unwrap(), Regularity::Regular);
}

#[test]
fn regularity_is_reflection_invariant() {
    for k in 0..72 {
        let t = k as f64 * std::f64::consts::TAU / 72.0 + 0.01;
        let d = [t.cos(), t.sin()];
        let mut conts = crossing(id);
        conts[k % 2].stable = d;
        let plain = classify_outline(&lens(id), &conts, 1e-9);
        let mut m = crossing(mirror);
        m[k % 2].stable = mirror(d);
        let mirrored = classify_outline(&lens(mirror), &m, 1e-9);
        match (plain, mirrored) {
            (Ok(a), Ok(b)) => assert_eq!(a, b, "direction {d:?}"),
            (Err(_), Err(_)) => {}
            (a, b) => panic!("direction {d:?}: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn continuation_along_the_boundary_is_indeterminate() {
    let mut conts = crossing(id);
    conts[0].unstable = [1.0, 1.0];
    assert!(classify_outline(&lens(id), &conts, 1e-9).is_err());
}

#[test]
fn spine_census() {
    assert_eq!(enumerate_spines(&SystemModel::sphere_pa(), 0.05, 64).unwrap().len(), 4);
    assert!(find_sectors(&SystemModel::cat(), &Region::whole(), 0.05, 32, usize::MAX).unwrap().sectors.is_empty());
}

#[test]
fn pa_sectors_are_regular_around_one_spine() {
    let sys = SystemModel::sphere_pa();
    let search = find_sectors(&sys, &Region::whole(), 0.05, 128, usize::MAX).unwrap();
    assert!(!search.sectors.is_empty());
    assert_eq!(search.indeterminate, 0);
    let spines = enumerate_spines(&sys, 0.05, 128).unwrap();
    for s in &search.sectors {
        assert!(s.regular);
        assert_eq!(classify_sector(&sys, s).unwrap(), Regularity::Regular);
        assert_eq!(spine_count(&sys, s, &spines).unwrap(), 1);
    }
    let owners = spine_sectors(&sys, &search.sectors, &spines).unwrap();
    assert!(owners.iter().all(|o| o.is_some()));

    let s = &search.sectors[owners[0].unwrap()];
    let p = sector_parametrization(&sys, s, 17).unwrap();
    assert!(p.ok(), "{p:?}");
    let e = enclosing_sector(&sys, s, 8).unwrap();
    assert!(e.clearance > 0.0);
    assert!(e.sector.size() > s.size());
    for n in 1..=3 {
        assert!(boundary_decay(&sys, s, n).unwrap());
    }
}

#[test]
fn enclosures_nest() {
    let sys = SystemModel::sphere_pa();
    let search = find_sectors(&sys, &Region::whole(), 0.05, 64, usize::MAX).unwrap();
    let spines = enumerate_spines(&sys, 0.05, 64).unwrap();
    let owners = spine_sectors(&sys, &search.sectors, &spines).unwrap();
    let s = &search.sectors[owners[0].unwrap()];
    let outer = enclosing_sector(&sys, s, 8).unwrap();
    let outer2 = enclosing_sector(&sys, &outer.sector, 8).unwrap();
    assert!(outer2.clearance > 0.0);
    assert!(outer2.sector.size() > outer.sector.size());
}
