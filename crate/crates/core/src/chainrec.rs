//! Chain-recurrent classes of grid discretizations, their order, and
//! attractor/repeller roles.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continua::{image_indexed, intersect, subcontinuum, MarkedContinuum, DEFAULT_TOL, VERTEX_BUDGET};
use crate::cwmetric::{d_metric, MetricConstants};
use crate::error::{CwError, Result};
use crate::models::{from_fixed, lift_from, ArcKind, Chart, Lift, Point, SystemModel};

/// Cells of a `res × res` grid on the model's chart, identified as the chart requires.
#[derive(Debug, Clone)]
struct Grid {
    chart: Chart,
    res: usize,
    node_of_cell: Vec<u32>,
    centers: Vec<Lift>,
    /// Nodes whose center lies within `band` of the collapsed boundary.
    band: Vec<u32>,
    pole: Option<u32>,
    diag: f64,
}

impl Grid {
    fn new(chart: Chart, res: usize, band: f64) -> Self {
        let mut node_of_cell = vec![u32::MAX; res * res];
        let mut centers = Vec::new();
        let center = |i: usize, j: usize| lift_from([(i as f64 + 0.5) / res as f64, (j as f64 + 0.5) / res as f64]);
        for i in 0..res {
            for j in 0..res {
                let cell = i * res + j;
                if node_of_cell[cell] != u32::MAX {
                    continue;
                }
                let id = centers.len() as u32;
                node_of_cell[cell] = id;
                if chart == Chart::SphereQuotient {
                    node_of_cell[(res - 1 - i) * res + (res - 1 - j)] = id;
                }
                centers.push(center(i, j));
            }
        }
        let (pole, diag) = match chart {
            Chart::SphereGeographic => {
                centers.push([0, 0]);
                (Some(centers.len() as u32 - 1), 1.0 / res as f64)
            }
            _ => (None, std::f64::consts::SQRT_2 / res as f64),
        };
        let band = match chart {
            Chart::SphereGeographic => (0..centers.len() as u32)
                .filter(|&v| Chart::boundary_distance(centers[v as usize]) <= band)
                .collect(),
            _ => Vec::new(),
        };
        Grid { chart, res, node_of_cell, centers, band, pole, diag }
    }

    fn cell_index(&self, x: u128) -> usize {
        ((from_fixed(x) * self.res as f64).floor() as usize).min(self.res - 1)
    }

    pub fn node_of(&self, l: Lift) -> u32 {
        let l = self.chart.canonical(l);
        if Some(l) == self.pole.map(|p| self.centers[p as usize]) {
            return self.pole.unwrap();
        }
        self.node_of_cell[self.cell_index(l[0]) * self.res + self.cell_index(l[1])]
    }

    /// Nodes whose center is within `thr` of `w`.
    fn near(&self, w: Lift, thr: f64) -> Vec<u32> {
        let res = self.res as i64;
        let reach = (thr * self.res as f64).ceil() as i64 + 1;
        let mut out = Vec::new();
        let reps: Vec<Lift> = match self.chart {
            Chart::SphereQuotient => vec![w, crate::models::lift_neg(w)],
            _ => vec![w],
        };
        let boundary = self.chart == Chart::SphereGeographic && Chart::boundary_distance(w) == 0.0;
        if !boundary {
            for r in reps {
                let (ci, cj) = (self.cell_index(r[0]) as i64, self.cell_index(r[1]) as i64);
                for di in -reach..=reach {
                    for dj in -reach..=reach {
                        let (i, j) = (ci + di, cj + dj);
                        let (i, j) = if self.chart.wraps() {
                            (i.rem_euclid(res), j.rem_euclid(res))
                        } else if i < 0 || j < 0 || i >= res || j >= res {
                            continue;
                        } else {
                            (i, j)
                        };
                        let v = self.node_of_cell[(i * res + j) as usize];
                        if self.chart.distance(w, self.centers[v as usize]) <= thr {
                            out.push(v);
                        }
                    }
                }
            }
        }
        if let Some(p) = self.pole {
            if Chart::boundary_distance(w) <= thr {
                for &v in &self.band {
                    if self.chart.distance(w, self.centers[v as usize]) <= thr {
                        out.push(v);
                    }
                }
                out.push(p);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Attractor,
    Repeller,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    TransitiveCandidate,
    NotTransitive,
}

/// Directed cell graph in CSR form, with its class decomposition once computed.
#[derive(Debug, Clone)]
pub struct ChainClassGraph {
    pub grid_resolution: usize,
    pub eps: f64,
    pub chart: Option<Chart>,
    centers: Vec<Lift>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    pub scc_labels: Vec<Option<u32>>,
    pub class_order: Vec<(u32, u32)>,
    pub roles: Vec<Role>,
}

impl ChainClassGraph {
    /// A graph given directly by its edge list (nodes without geometry).
    pub fn from_edges(nodes: usize, edges: &[(u32, u32)]) -> Self {
        let mut adj = vec![Vec::new(); nodes];
        for &(u, v) in edges {
            adj[u as usize].push(v);
        }
        Self::from_adjacency(0, 0.0, None, Vec::new(), adj)
    }

    fn from_adjacency(res: usize, eps: f64, chart: Option<Chart>, centers: Vec<Lift>, adj: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut row in adj {
            row.sort_unstable();
            row.dedup();
            targets.extend(row);
            offsets.push(targets.len());
        }
        ChainClassGraph {
            grid_resolution: res,
            eps,
            chart,
            centers,
            offsets,
            targets,
            scc_labels: Vec::new(),
            class_order: Vec::new(),
            roles: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn successors(&self, u: u32) -> &[u32] {
        &self.targets[self.offsets[u as usize]..self.offsets[u as usize + 1]]
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.node_count() as u32).flat_map(move |u| self.successors(u).iter().map(move |&v| (u, v)))
    }

    pub fn center(&self, u: u32) -> Option<Lift> {
        self.centers.get(u as usize).copied()
    }

    /// Node whose cell contains `x`.
    pub fn node_at(&self, x: &Point) -> Result<u32> {
        let chart = self.chart.ok_or_else(|| CwError::Domain("graph has no grid".into()))?;
        if x.chart() != chart {
            return Err(CwError::ChartMismatch(x.chart(), chart));
        }
        Ok(Grid::new(chart, self.grid_resolution, 0.0).node_of(x.lift()))
    }

    fn reversed(&self) -> Vec<Vec<u32>> {
        let mut rev = vec![Vec::new(); self.node_count()];
        for (u, v) in self.edges() {
            rev[v as usize].push(u);
        }
        rev
    }
}

pub fn build_graph(sys: &SystemModel, grid_resolution: usize, eps: f64) -> Result<ChainClassGraph> {
    if grid_resolution < 2 {
        return Err(CwError::Config(format!("grid resolution {grid_resolution} is too small")));
    }
    let probe = Grid::new(sys.chart(), grid_resolution, 0.0);
    if !(eps >= probe.diag) {
        return Err(CwError::Config(format!(
            "eps = {eps} is below the cell diagonal {:.4e} at resolution {grid_resolution}",
            probe.diag
        )));
    }
    let thr = eps + probe.diag;
    let grid = Grid::new(sys.chart(), grid_resolution, thr);
    let adj: Vec<Vec<u32>> = grid.centers.par_iter().map(|&c| grid.near(sys.map_lift(c, 1), thr)).collect();
    let centers = grid.centers.clone();
    Ok(ChainClassGraph::from_adjacency(grid_resolution, eps, Some(sys.chart()), centers, adj))
}

/// Strongly connected components by an iterative Tarjan pass; component ids
/// are in reverse topological order of the condensation.
pub fn tarjan_scc(g: &ChainClassGraph) -> Vec<u32> {
    const UNSEEN: u32 = u32::MAX;
    let n = g.node_count();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut call: Vec<(u32, usize)> = Vec::new();
    let (mut next, mut ncomp) = (0u32, 0u32);
    for root in 0..n as u32 {
        if index[root as usize] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root as usize] = next;
        low[root as usize] = next;
        next += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        while let Some(&mut (u, ref mut pos)) = call.last_mut() {
            let succ = g.successors(u);
            if *pos < succ.len() {
                let v = succ[*pos];
                *pos += 1;
                if index[v as usize] == UNSEEN {
                    index[v as usize] = next;
                    low[v as usize] = next;
                    next += 1;
                    stack.push(v);
                    on_stack[v as usize] = true;
                    call.push((v, 0));
                } else if on_stack[v as usize] {
                    low[u as usize] = low[u as usize].min(index[v as usize]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent as usize] = low[parent as usize].min(low[u as usize]);
            }
            if low[u as usize] == index[u as usize] {
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w as usize] = false;
                    comp[w as usize] = ncomp;
                    if w == u {
                        break;
                    }
                }
                ncomp += 1;
            }
        }
    }
    comp
}

/// Chain-recurrent classes: components carrying a cycle, numbered by their
/// smallest node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: Vec<Option<u32>>,
    pub classes: Vec<Vec<u32>>,
    pub node_count: usize,
}

pub fn chain_classes(g: &mut ChainClassGraph) -> Partition {
    let comp = tarjan_scc(g);
    let ncomp = comp.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); ncomp];
    for (u, &c) in comp.iter().enumerate() {
        members[c as usize].push(u as u32);
    }
    let mut classes: Vec<Vec<u32>> = members
        .into_iter()
        .filter(|m| m.len() > 1 || g.successors(m[0]).contains(&m[0]))
        .collect();
    classes.sort_by_key(|m| m[0]);
    let mut labels = vec![None; g.node_count()];
    for (id, m) in classes.iter().enumerate() {
        for &u in m {
            labels[u as usize] = Some(id as u32);
        }
    }
    g.scc_labels = labels.clone();
    Partition { labels, classes, node_count: g.node_count() }
}

fn reach(adj: impl Fn(u32) -> Vec<u32>, start: &[u32], n: usize) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue: VecDeque<u32> = start.iter().copied().collect();
    for &s in start {
        seen[s as usize] = true;
    }
    while let Some(u) = queue.pop_front() {
        for v in adj(u) {
            if !seen[v as usize] {
                seen[v as usize] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Nodes forward-reachable from the class.
pub fn forward_closure(g: &ChainClassGraph, class: &[u32]) -> Vec<bool> {
    reach(|u| g.successors(u).to_vec(), class, g.node_count())
}

/// Nodes backward-reachable from the class.
pub fn backward_closure(g: &ChainClassGraph, class: &[u32]) -> Vec<bool> {
    let rev = g.reversed();
    reach(|u| rev[u as usize].clone(), class, g.node_count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOrder {
    /// Pairs (i, j) with C_i < C_j.
    pub order: Vec<(u32, u32)>,
    pub roles: Vec<Role>,
}

pub fn class_order(g: &mut ChainClassGraph, partition: &Partition) -> Result<ClassOrder> {
    let k = partition.classes.len();
    let mut order = Vec::new();
    for (i, class) in partition.classes.iter().enumerate() {
        let fwd = forward_closure(g, class);
        for j in 0..k {
            if j != i && fwd[partition.classes[j][0] as usize] {
                order.push((i as u32, j as u32));
            }
        }
    }
    if let Some(&(i, j)) = order.iter().find(|&&(i, j)| order.contains(&(j, i))) {
        return Err(CwError::Domain(format!(
            "classes {i} and {j} precede each other; the discretization is too coarse, refine and retry"
        )));
    }
    let roles = (0..k as u32)
        .map(|c| {
            let above = order.iter().any(|&(i, _)| i == c);
            let below = order.iter().any(|&(_, j)| j == c);
            match (above, below) {
                (false, true) => Role::Attractor,
                (true, false) => Role::Repeller,
                _ => Role::Neither,
            }
        })
        .collect::<Vec<_>>();
    g.class_order = order.clone();
    g.roles = roles.clone();
    Ok(ClassOrder { order, roles })
}

pub fn transitivity_verdict(partition: &Partition) -> Verdict {
    if partition.classes.len() == 1 && partition.classes[0].len() == partition.node_count {
        Verdict::TransitiveCandidate
    } else {
        Verdict::NotTransitive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub id: u32,
    pub cells: usize,
    pub representative: Option<[f64; 2]>,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecReport {
    pub model: String,
    pub resolution: usize,
    pub eps: f64,
    pub nodes: usize,
    pub edges: usize,
    pub classes: Vec<ClassSummary>,
    pub order: Vec<(u32, u32)>,
    pub roles: Vec<Role>,
    pub verdict: Verdict,
}

pub fn analyze(sys: &SystemModel, grid_resolution: usize, eps: f64) -> Result<ChainRecReport> {
    let mut g = build_graph(sys, grid_resolution, eps)?;
    let part = chain_classes(&mut g);
    let ord = class_order(&mut g, &part)?;
    let classes = part
        .classes
        .iter()
        .enumerate()
        .map(|(id, m)| ClassSummary {
            id: id as u32,
            cells: m.len(),
            representative: g.center(m[0]).map(|l| Point::from_lift(sys.chart(), l).coords()),
            role: ord.roles[id],
        })
        .collect();
    Ok(ChainRecReport {
        model: sys.name().to_string(),
        resolution: grid_resolution,
        eps,
        nodes: g.node_count(),
        edges: g.edge_count(),
        classes,
        order: ord.order,
        roles: ord.roles,
        verdict: transitivity_verdict(&part),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub resolution: usize,
    pub classes: usize,
    pub verdict: Verdict,
}

/// Class counts across resolutions, with a flag for non-decreasing counts.
pub fn resolution_ladder(sys: &SystemModel, resolutions: &[usize], eps: f64) -> Result<(Vec<LadderRow>, bool)> {
    let rows = resolutions
        .iter()
        .map(|&res| {
            let r = analyze(sys, res, eps)?;
            Ok(LadderRow { resolution: res, classes: r.classes.len(), verdict: r.verdict })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[0].classes <= w[1].classes);
    Ok((rows, monotone))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportLink {
    pub q: Point,
    pub p: Point,
    pub d_star: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTransport {
    pub n: u32,
    pub gamma_vertices: usize,
    pub d_target: f64,
    pub links: Vec<TransportLink>,
    pub max_deviation: f64,
    pub start_class: Option<u32>,
    pub end_class: Option<u32>,
}

/// Transports a stable continuum along γ = f^{2n}(C^u_ε(y)) by stable
/// holonomies, from a point of γ on C^s_ε(z) to f^{2n}(y). Cat map only.
#[allow(clippy::too_many_arguments)]
pub fn chain_transport(
    sys: &SystemModel,
    g: &ChainClassGraph,
    y: &Point,
    z: &Point,
    n: u32,
    eps: f64,
    delta: f64,
    consts: &MetricConstants,
    depth: u32,
) -> Result<ChainTransport> {
    if sys.name() != "cat" {
        return Err(CwError::Domain("chain-transport runs on the cat map only".into()));
    }
    let arc = sys.local_arc(y, ArcKind::Unstable, eps, 3)?;
    let (gamma, _) = image_indexed(sys, &arc, 2 * n as i64, VERTEX_BUDGET)?;
    let s_z = sys.local_arc(z, ArcKind::Stable, eps, 3)?;
    let hits = intersect(&gamma, &s_z, DEFAULT_TOL)?;
    let q0 = *hits
        .iter()
        .min_by(|a, b| sys.distance(a, z).unwrap().total_cmp(&sys.distance(b, z).unwrap()))
        .ok_or_else(|| CwError::SearchFailure(format!("f^{}(C^u(y)) misses C^s(z); increase n", 2 * n)))?;
    let end = sys.iterate(y, 2 * n as i64)?;
    let path = subcontinuum(&gamma, &q0, &end, DEFAULT_TOL)?;
    let c = subcontinuum(&s_z, &q0, z, DEFAULT_TOL)?;
    let d_target = d_metric(sys, &c, consts, depth)?.value;
    let qs = spaced_points(sys, &path, delta)?;
    let mut links = Vec::with_capacity(qs.len());
    let mut p_prev = *z;
    let mut max_dev = 0.0f64;
    for q in qs.iter().skip(1) {
        let u = sys.local_arc(&p_prev, ArcKind::Unstable, eps, 3)?;
        let s = sys.local_arc(q, ArcKind::Stable, eps, 3)?;
        let p = *intersect(&u, &s, DEFAULT_TOL)?
            .iter()
            .min_by(|a, b| sys.distance(a, &p_prev).unwrap().total_cmp(&sys.distance(b, &p_prev).unwrap()))
            .ok_or_else(|| CwError::ModelFault("stable holonomy is empty along γ".into()))?;
        let star = subcontinuum(&s, q, &p, DEFAULT_TOL)?;
        let d_star = d_metric(sys, &star, consts, depth)?.value;
        let ratio = if d_target > 0.0 { d_star / d_target } else { 1.0 };
        max_dev = max_dev.max((ratio - 1.0).abs());
        links.push(TransportLink { q: *q, p, d_star, ratio });
        p_prev = p;
    }
    let class_of = |x: &Point| -> Result<Option<u32>> { Ok(g.scc_labels.get(g.node_at(x)? as usize).copied().flatten()) };
    Ok(ChainTransport {
        n,
        gamma_vertices: gamma.len(),
        d_target,
        start_class: class_of(z)?,
        end_class: class_of(&p_prev)?,
        links,
        max_deviation: max_dev,
    })
}

/// Points along a polyline from its first to its last vertex, consecutive ones
/// at most `step` apart.
fn spaced_points(sys: &SystemModel, c: &MarkedContinuum, step: f64) -> Result<Vec<Point>> {
    let verts = c.vertices();
    let mut out = vec![verts[0]];
    for w in verts.windows(2) {
        let d = sys.distance(&w[0], &w[1])?;
        let pieces = (d / step).ceil().max(1.0) as usize;
        let seg = MarkedContinuum::segment(w[0], w[1])?;
        let ends = seg.unwrapped();
        for i in 1..=pieces {
            let t = i as f64 / pieces as f64;
            let off = [ends[1][0] * t, ends[1][1] * t];
            out.push(Point::from_lift(sys.chart(), crate::models::lift_offset(w[0].lift(), off)));
        }
    }
    Ok(out)
}
