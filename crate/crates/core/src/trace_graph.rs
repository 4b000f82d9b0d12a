//! Directed multigraphs `T_pi` attached to partitions, their gluings, and the
//! tree rules deciding which of them survive in the limit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partitions::{CrossPartition, SetPartition};

/// Edge colors of the two-block model: blue edges carry weights of the first
/// block, red edges of the second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Blue,
    Red,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub color: Option<Color>,
}

/// Directed multigraph with loops and optional edge colors.
///
/// Edges are kept sorted so that two graphs with the same labelled edge
/// multiset compare equal; [`TraceGraph::key`] is used as a cache key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceGraph {
    vertex_count: usize,
    edges: Vec<Edge>,
}

impl TraceGraph {
    pub fn new(vertex_count: usize, mut edges: Vec<Edge>) -> Result<Self> {
        if let Some(e) = edges.iter().find(|e| e.from >= vertex_count || e.to >= vertex_count) {
            return Err(Error::ShapeMismatch(format!(
                "edge {}->{} outside {} vertices",
                e.from, e.to, vertex_count
            )));
        }
        let colored = edges.iter().filter(|e| e.color.is_some()).count();
        if colored != 0 && colored != edges.len() {
            return Err(Error::ShapeMismatch("color map must cover every edge or none".into()));
        }
        edges.sort();
        Ok(Self { vertex_count, edges })
    }

    /// Uncolored graph from `(from, to)` pairs.
    pub fn from_pairs(vertex_count: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(vertex_count, pairs.iter().map(|&(from, to)| Edge { from, to, color: None }).collect())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Same graph with every edge painted `color`.
    pub fn with_color(&self, color: Color) -> Self {
        let edges = self.edges.iter().map(|e| Edge { color: Some(color), ..*e }).collect();
        Self { vertex_count: self.vertex_count, edges }
    }

    pub fn is_colored(&self) -> bool {
        self.edges.first().is_some_and(|e| e.color.is_some())
    }

    /// Canonical encoding: vertex count followed by the sorted edge triples.
    pub fn key(&self) -> Vec<u32> {
        let mut k = Vec::with_capacity(1 + 3 * self.edges.len());
        k.push(self.vertex_count as u32);
        for e in &self.edges {
            let c = match e.color {
                None => 0,
                Some(Color::Blue) => 1,
                Some(Color::Red) => 2,
            };
            k.extend([e.from as u32, e.to as u32, c]);
        }
        k
    }

    /// DOT text with multiplicities as labels and colors as attributes.
    pub fn to_dot(&self, name: &str) -> String {
        let mut counts: BTreeMap<(usize, usize, Option<Color>), usize> = BTreeMap::new();
        for e in &self.edges {
            *counts.entry((e.from, e.to, e.color)).or_default() += 1;
        }
        let mut s = format!("digraph {name} {{\n");
        for v in 0..self.vertex_count {
            let _ = writeln!(s, "  v{v};");
        }
        for ((from, to, color), m) in counts {
            let color = match color {
                None => String::new(),
                Some(Color::Blue) => ", color=blue".into(),
                Some(Color::Red) => ", color=red".into(),
            };
            let _ = writeln!(s, "  v{from} -> v{to} [label=\"{m}\"{color}];");
        }
        s.push_str("}\n");
        s
    }
}

/// `T_pi`: one vertex per block and an edge `block(m) -> block(m+1)` for each
/// `m`, cyclically.
pub fn graph_of_partition(pi: &SetPartition) -> TraceGraph {
    let k = pi.ground_size();
    let edges = (0..k)
        .map(|m| Edge { from: pi.block_of(m), to: pi.block_of((m + 1) % k), color: None })
        .collect();
    TraceGraph::new(pi.block_count(), edges).expect("partition graph endpoints are block indices")
}

/// Edge multiplicities of one unordered vertex pair `u < v`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairCounts {
    /// Edges `u -> v` split by color (uncolored edges count as blue).
    pub forward: [u32; 2],
    /// Edges `v -> u` split by color.
    pub backward: [u32; 2],
}

impl PairCounts {
    pub fn forward_total(&self) -> u32 {
        self.forward[0] + self.forward[1]
    }
    pub fn backward_total(&self) -> u32 {
        self.backward[0] + self.backward[1]
    }
    pub fn total(&self) -> u32 {
        self.forward_total() + self.backward_total()
    }
}

/// Counters describing a trace graph.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraphStats {
    pub vertex_count: usize,
    pub edge_count: usize,
    /// `loops_per_vertex[v]`: number of loops at `v`.
    pub loops_per_vertex: Vec<u32>,
    /// `p_k`: number of vertices carrying exactly `k >= 1` loops.
    pub loop_counts: BTreeMap<u32, u32>,
    /// Per adjacent pair `u < v`, the edge counts in both directions.
    pub pairs: BTreeMap<(usize, usize), PairCounts>,
    /// `q_{k,l}`: adjacent pairs `u < v` with `k` edges `u -> v` and `l` edges `v -> u`.
    pub ordered_pair_counts: BTreeMap<(u32, u32), u32>,
    /// `q_k`: adjacent pairs with exactly `k` edges in total.
    pub unordered_counts: BTreeMap<u32, u32>,
    /// Number of edges after forgetting multiplicity and orientation, loops included.
    pub reduced_edge_count: usize,
    pub component_count: usize,
    /// `reduced_edge_count + component_count - vertex_count`.
    pub cycle_excess: usize,
    /// Pairs with edges in a single direction: `(blue, red)` counts of that direction.
    pub colored_pair_counts: BTreeMap<(u32, u32), u32>,
}

impl GraphStats {
    pub fn has_single_loop(&self) -> bool {
        self.loop_counts.contains_key(&1)
    }

    pub fn has_loop(&self) -> bool {
        !self.loop_counts.is_empty()
    }

    /// A vertex pair joined by exactly one edge.
    pub fn has_single_edge_pair(&self) -> bool {
        self.unordered_counts.contains_key(&1)
    }

    pub fn is_connected(&self) -> bool {
        self.component_count <= 1
    }

    /// Connected, loop-free and the reduced simple graph is a tree.
    pub fn is_tree_shaped(&self) -> bool {
        !self.has_loop() && self.is_connected() && self.cycle_excess == 0
    }

    /// Every adjacent pair carries edges in one direction only.
    pub fn is_unidirectional(&self) -> bool {
        self.pairs.values().all(|p| p.forward_total() == 0 || p.backward_total() == 0)
    }
}

pub fn stats(g: &TraceGraph) -> GraphStats {
    let n = g.vertex_count();
    let mut loops_per_vertex = vec![0u32; n];
    let mut pairs: BTreeMap<(usize, usize), PairCounts> = BTreeMap::new();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in g.edges() {
        let c = usize::from(e.color == Some(Color::Red));
        if e.from == e.to {
            loops_per_vertex[e.from] += 1;
            continue;
        }
        let a = find(&mut parent, e.from);
        let b = find(&mut parent, e.to);
        parent[a] = b;
        let (u, v) = if e.from < e.to { (e.from, e.to) } else { (e.to, e.from) };
        let entry = pairs.entry((u, v)).or_default();
        if e.from == u {
            entry.forward[c] += 1;
        } else {
            entry.backward[c] += 1;
        }
    }
    let mut loop_counts = BTreeMap::new();
    for &l in &loops_per_vertex {
        if l > 0 {
            *loop_counts.entry(l).or_default() += 1;
        }
    }
    let mut ordered_pair_counts = BTreeMap::new();
    let mut unordered_counts = BTreeMap::new();
    let mut colored_pair_counts = BTreeMap::new();
    for p in pairs.values() {
        *ordered_pair_counts.entry((p.forward_total(), p.backward_total())).or_default() += 1;
        *unordered_counts.entry(p.total()).or_default() += 1;
        if p.backward_total() == 0 {
            *colored_pair_counts.entry((p.forward[0], p.forward[1])).or_default() += 1;
        } else if p.forward_total() == 0 {
            *colored_pair_counts.entry((p.backward[0], p.backward[1])).or_default() += 1;
        }
    }
    let component_count = (0..n).filter(|&v| find(&mut parent, v) == v).count();
    let looped = loops_per_vertex.iter().filter(|&&l| l > 0).count();
    let reduced_edge_count = looped + pairs.len();
    GraphStats {
        vertex_count: n,
        edge_count: g.edge_count(),
        loops_per_vertex,
        loop_counts,
        pairs,
        ordered_pair_counts,
        unordered_counts,
        reduced_edge_count,
        component_count,
        cycle_excess: reduced_edge_count + component_count - n,
        colored_pair_counts,
    }
}

/// Which tree rule applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TreeRule {
    /// Thick trees: every adjacent pair carries at least two edges in total.
    Elliptic,
    /// Fat trees: additionally all edges of a pair point the same way.
    Iid,
    /// Colored fat trees: fat-tree shape with free edge colors.
    ColoredBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Classification {
    AdmissibleTree,
    ZeroBySingleEdgeOrLoop,
    ZeroByCycle,
    ZeroByDirectionOrColorRule,
}

pub fn classify(g: &TraceGraph, rule: TreeRule) -> Classification {
    classify_stats(&stats(g), rule)
}

/// Shared admissibility predicate for single graphs and gluings.
pub fn classify_stats(s: &GraphStats, rule: TreeRule) -> Classification {
    if s.has_loop() || s.has_single_edge_pair() {
        return Classification::ZeroBySingleEdgeOrLoop;
    }
    if !s.is_connected() || s.cycle_excess != 0 {
        return Classification::ZeroByCycle;
    }
    match rule {
        TreeRule::Elliptic => Classification::AdmissibleTree,
        TreeRule::Iid | TreeRule::ColoredBlock => {
            if s.is_unidirectional() {
                Classification::AdmissibleTree
            } else {
                Classification::ZeroByDirectionOrColorRule
            }
        }
    }
}

/// Glues `graphs` along `sigma`: vertex `v` of graph `j` becomes block
/// `sigma.block_of(j, v)`. The flag reports whether two edges from different
/// graphs land on the same ordered pair of blocks (colors ignored).
pub fn merge_under_cross_partition(graphs: &[TraceGraph], sigma: &CrossPartition) -> Result<(TraceGraph, bool)> {
    let sizes: Vec<usize> = graphs.iter().map(|g| g.vertex_count()).collect();
    if sizes != sigma.sizes() {
        return Err(Error::ShapeMismatch(format!(
            "cross partition sizes {:?} do not match graph sizes {:?}",
            sigma.sizes(),
            sizes
        )));
    }
    let mut owner: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut shared = false;
    let mut edges = Vec::with_capacity(graphs.iter().map(|g| g.edge_count()).sum());
    for (j, g) in graphs.iter().enumerate() {
        for e in g.edges() {
            let from = sigma.block_of(j, e.from);
            let to = sigma.block_of(j, e.to);
            match owner.get(&(from, to)) {
                Some(&o) if o != j => shared = true,
                Some(_) => {}
                None => {
                    owner.insert((from, to), j);
                }
            }
            edges.push(Edge { from, to, color: e.color });
        }
    }
    Ok((TraceGraph::new(sigma.block_count(), edges)?, shared))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::{enumerate_cross_partitions, enumerate_set_partitions};

    fn part(k: usize, blocks: &[&[usize]]) -> SetPartition {
        let blocks: Vec<Vec<usize>> = blocks.iter().map(|b| b.iter().map(|m| m - 1).collect()).collect();
        SetPartition::from_blocks(k, &blocks).unwrap()
    }

    #[test]
    fn partition_graph_examples() {
        let g = graph_of_partition(&part(2, &[&[1], &[2]]));
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g, TraceGraph::from_pairs(2, &[(0, 1), (1, 0)]).unwrap());

        let g = graph_of_partition(&part(2, &[&[1, 2]]));
        assert_eq!(stats(&g).loop_counts.get(&2), Some(&1));

        let g = graph_of_partition(&part(4, &[&[1, 3], &[2, 4]]));
        let s = stats(&g);
        assert_eq!(s.ordered_pair_counts.get(&(2, 2)), Some(&1));
    }

    #[test]
    fn stats_examples() {
        let s = stats(&TraceGraph::from_pairs(2, &[(0, 1), (1, 0)]).unwrap());
        assert_eq!(s.ordered_pair_counts.get(&(1, 1)), Some(&1));
        assert_eq!(s.reduced_edge_count, 1);
        assert_eq!(s.cycle_excess, 0);

        let s = stats(&TraceGraph::from_pairs(1, &[(0, 0), (0, 0)]).unwrap());
        assert_eq!(s.loop_counts.get(&2), Some(&1));
        assert_eq!(s.reduced_edge_count, 1);

        let triangle =
            TraceGraph::from_pairs(3, &[(0, 1), (0, 1), (1, 2), (1, 2), (2, 0), (2, 0)]).unwrap();
        let s = stats(&triangle);
        assert_eq!(s.reduced_edge_count, 3);
        assert_eq!(s.cycle_excess, 1);
    }

    #[test]
    fn classify_examples() {
        let two = TraceGraph::from_pairs(2, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(classify(&two, TreeRule::Elliptic), Classification::AdmissibleTree);
        assert_eq!(classify(&two, TreeRule::Iid), Classification::ZeroByDirectionOrColorRule);

        let loops = TraceGraph::from_pairs(1, &[(0, 0), (0, 0)]).unwrap();
        for rule in [TreeRule::Elliptic, TreeRule::Iid, TreeRule::ColoredBlock] {
            assert_eq!(classify(&loops, rule), Classification::ZeroBySingleEdgeOrLoop);
        }

        let colored = TraceGraph::new(
            2,
            vec![
                Edge { from: 0, to: 1, color: Some(Color::Blue) },
                Edge { from: 0, to: 1, color: Some(Color::Blue) },
                Edge { from: 0, to: 1, color: Some(Color::Red) },
            ],
        )
        .unwrap();
        assert_eq!(classify(&colored, TreeRule::ColoredBlock), Classification::AdmissibleTree);
        assert_eq!(stats(&colored).colored_pair_counts.get(&(2, 1)), Some(&1));
    }

    #[test]
    fn merge_examples() {
        let g = graph_of_partition(&part(2, &[&[1], &[2]]));
        let graphs = [g.clone(), g];
        let sigmas = enumerate_cross_partitions(&[2, 2]).unwrap();
        let four_edge = TraceGraph::from_pairs(2, &[(0, 1), (0, 1), (1, 0), (1, 0)]).unwrap();

        let straight = sigmas.iter().find(|s| s.block_count() == 2 && s.block_of(0, 0) == s.block_of(1, 0)).unwrap();
        let (m, flag) = merge_under_cross_partition(&graphs, straight).unwrap();
        assert!(flag);
        assert_eq!(m, four_edge);

        let crossed = sigmas.iter().find(|s| s.block_count() == 2 && s.block_of(0, 0) == s.block_of(1, 1)).unwrap();
        let (m, flag) = merge_under_cross_partition(&graphs, crossed).unwrap();
        assert!(flag);
        assert_eq!(m, four_edge);

        let apart = sigmas.iter().find(|s| s.block_count() == 4).unwrap();
        let (m, flag) = merge_under_cross_partition(&graphs, apart).unwrap();
        assert!(!flag);
        assert_eq!(m.vertex_count(), 4);

        assert!(merge_under_cross_partition(&graphs[..1], apart).is_err());
    }

    #[test]
    fn every_partition_graph_has_k_edges() {
        for k in 1..=8 {
            for pi in enumerate_set_partitions(k).unwrap() {
                assert_eq!(graph_of_partition(&pi).edge_count(), k);
            }
        }
    }

    #[test]
    fn closed_walks_never_give_fat_trees() {
        for k in 1..=7 {
            for pi in enumerate_set_partitions(k).unwrap() {
                let g = graph_of_partition(&pi);
                let iid = classify(&g, TreeRule::Iid);
                assert_ne!(iid, Classification::AdmissibleTree, "{pi}");
                if iid == Classification::AdmissibleTree {
                    assert_eq!(classify(&g, TreeRule::Elliptic), Classification::AdmissibleTree);
                }
            }
        }
    }

    #[test]
    fn dot_output_lists_multiplicities() {
        let g = TraceGraph::from_pairs(2, &[(0, 1), (0, 1), (1, 0)]).unwrap();
        let dot = g.to_dot("t");
        assert!(dot.contains("v0 -> v1 [label=\"2\"]"));
        assert!(dot.contains("v1 -> v0 [label=\"1\"]"));
    }
}
