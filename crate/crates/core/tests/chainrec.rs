use std::collections::BTreeSet;

use cwdyn::chainrec::{analyze, build_graph, chain_classes, class_order, resolution_ladder, tarjan_scc, transitivity_verdict, ChainClassGraph, Role, Verdict};
use cwdyn::models::SystemModel;
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;

/// Components as sets of node sets, from our labels and from petgraph.
fn components(g: &ChainClassGraph) -> (BTreeSet<BTreeSet<u32>>, BTreeSet<BTreeSet<u32>>) {
    let labels = tarjan_scc(g);
    let mut ours = std::collections::BTreeMap::<u32, BTreeSet<u32>>::new();
    for (u, &c) in labels.iter().enumerate() {
        ours.entry(c).or_default().insert(u as u32);
    }
    let mut pg = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..g.node_count()).map(|_| pg.add_node(())).collect();
    for (u, v) in g.edges() {
        pg.add_edge(nodes[u as usize], nodes[v as usize], ());
    }
    let theirs = kosaraju_scc(&pg).into_iter().map(|c| c.into_iter().map(|n| n.index() as u32).collect()).collect();
    (ours.into_values().collect(), theirs)
}

/// Repeller {0, 1} feeding attractors {2, 3} and {4}; node 5 is transient.
fn fixture() -> ChainClassGraph {
    ChainClassGraph::from_edges(6, &[(0, 1), (1, 0), (1, 5), (5, 2), (2, 3), (3, 2), (0, 4), (4, 4)])
}

#[test]
fn tarjan_agrees_with_kosaraju() {
    let (ours, theirs) = components(&fixture());
    assert_eq!(ours, theirs);
    for (sys, res) in [(SystemModel::cat(), 32), (SystemModel::north_south(), 64)] {
        let g = build_graph(&sys, res, 0.05).unwrap();
        let (ours, theirs) = components(&g);
        assert_eq!(ours, theirs, "{}", sys.name());
    }
}

#[test]
fn synthetic_order_and_roles() {
    let mut g = fixture();
    let part = chain_classes(&mut g);
    assert_eq!(part.classes, vec![vec![0, 1], vec![2, 3], vec![4]]);
    assert_eq!(part.labels[5], None);
    let ord = class_order(&mut g, &part).unwrap();
    assert_eq!(ord.order, vec![(0, 1), (0, 2)]);
    assert_eq!(ord.roles, vec![Role::Repeller, Role::Attractor, Role::Attractor]);
    assert_eq!(transitivity_verdict(&part), Verdict::NotTransitive);
}

#[test]
fn acyclic_nodes_form_no_class() {
    let mut g = ChainClassGraph::from_edges(3, &[(0, 1), (1, 2)]);
    assert!(chain_classes(&mut g).classes.is_empty());
}

#[test]
fn identity_cells_loop_to_themselves() {
    let sys = SystemModel::identity();
    let g = build_graph(&sys, 16, 0.1).unwrap();
    assert!((0..g.node_count() as u32).all(|u| g.successors(u).contains(&u)));
    let r = analyze(&sys, 16, 0.1).unwrap();
    assert_eq!(r.classes.len(), 1);
    assert_eq!(r.verdict, Verdict::TransitiveCandidate);
}

#[test]
fn eps_below_the_cell_diagonal_is_rejected() {
    assert!(build_graph(&SystemModel::cat(), 16, 0.01).is_err());
}

#[test]
fn cat_is_a_single_class() {
    let r = analyze(&SystemModel::cat(), 128, 0.05).unwrap();
    assert_eq!(r.classes.len(), 1);
    assert_eq!(r.classes[0].cells, 128 * 128);
    assert_eq!(r.verdict, Verdict::TransitiveCandidate);
}

#[test]
fn north_south_repeller_precedes_attractor() {
    let r = analyze(&SystemModel::north_south(), 128, 0.01).unwrap();
    assert_eq!(r.classes.len(), 2);
    assert_eq!(r.order.len(), 1);
    let (lo, hi) = r.order[0];
    assert_eq!(r.roles[lo as usize], Role::Repeller);
    assert_eq!(r.roles[hi as usize], Role::Attractor);
    assert_eq!(r.verdict, Verdict::NotTransitive);
}

#[test]
fn ladder_counts_do_not_drop() {
    let (rows, monotone) = resolution_ladder(&SystemModel::north_south(), &[64, 128], 0.025).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(monotone);
    assert!(rows.windows(2).all(|w| w[0].classes <= w[1].classes));
}

#[test]
fn classes_are_invariant_under_the_map() {
    let sys = SystemModel::sphere_pa();
    let mut g = build_graph(&sys, 64, 0.05).unwrap();
    let part = chain_classes(&mut g);
    for class in &part.classes {
        for &u in class {
            let id = part.labels[u as usize];
            assert!(g.successors(u).iter().any(|&v| part.labels[v as usize] == id));
        }
    }
}
