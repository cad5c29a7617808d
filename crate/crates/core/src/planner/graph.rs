use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphVertex {
    pub id: usize,
    pub position: Vec3,
    pub volumetric_gain: f64,
    pub is_frontier: bool,
    /// Vertex whose evaluated gain this one adopted.
    pub cluster_rep: Option<usize>,
}

/// Undirected graph with Euclidean (or explicit) edge lengths. Vertex ids
/// are dense indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExplorationGraph {
    vertices: Vec<GraphVertex>,
    adjacency: Vec<Vec<(usize, f64)>>,
    root: usize,
}

impl ExplorationGraph {
    pub fn new(root_position: Vec3) -> Self {
        let mut g = Self::default();
        g.add_vertex(root_position);
        g
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn add_vertex(&mut self, position: Vec3) -> usize {
        let id = self.vertices.len();
        self.vertices.push(GraphVertex {
            id,
            position,
            volumetric_gain: 0.0,
            is_frontier: false,
            cluster_rep: None,
        });
        self.adjacency.push(Vec::new());
        id
    }

    /// Remove the most recently added vertex and its edges.
    pub fn pop_vertex(&mut self) {
        let id = self.vertices.len() - 1;
        for (n, _) in std::mem::take(&mut self.adjacency[id]) {
            self.adjacency[n].retain(|(m, _)| *m != id);
        }
        self.vertices.pop();
        self.adjacency.pop();
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        let w = (self.vertices[a].position - self.vertices[b].position).norm();
        self.add_edge_weighted(a, b, w);
    }

    pub fn add_edge_weighted(&mut self, a: usize, b: usize, w: f64) {
        assert!(a != b && a < self.vertices.len() && b < self.vertices.len(), "bad edge {a}-{b}");
        if self.has_edge(a, b) {
            return;
        }
        self.adjacency[a].push((b, w));
        self.adjacency[b].push((a, w));
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].iter().any(|(n, _)| *n == b)
    }

    pub fn vertex(&self, id: usize) -> &GraphVertex {
        &self.vertices[id]
    }

    pub fn vertex_mut(&mut self, id: usize) -> &mut GraphVertex {
        &mut self.vertices[id]
    }

    pub fn vertices(&self) -> &[GraphVertex] {
        &self.vertices
    }

    pub fn neighbors(&self, id: usize) -> &[(usize, f64)] {
        &self.adjacency[id]
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Every edge once, as `(a, b, length)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (a, adj) in self.adjacency.iter().enumerate() {
            for &(b, w) in adj {
                if a < b {
                    out.push((a, b, w));
                }
            }
        }
        out
    }

    /// Nearest vertex to `p`, smaller id on ties.
    pub fn nearest(&self, p: &Vec3) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for v in &self.vertices {
            let d = (v.position - p).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((v.id, d));
            }
        }
        best
    }

    /// Keep only vertices reachable from the root, renumbering them in
    /// ascending order of their old ids.
    pub fn retain_root_component(&mut self) {
        let reach = shortest_paths(self);
        let mut map = vec![usize::MAX; self.vertices.len()];
        let mut kept = Vec::new();
        for (i, d) in reach.dist.iter().enumerate() {
            if d.is_finite() {
                map[i] = kept.len();
                kept.push(i);
            }
        }
        if kept.len() == self.vertices.len() {
            return;
        }
        let mut vertices = Vec::with_capacity(kept.len());
        let mut adjacency = Vec::with_capacity(kept.len());
        for &old in &kept {
            let mut v = self.vertices[old].clone();
            v.id = map[old];
            v.cluster_rep = v.cluster_rep.map(|c| map[c]).filter(|&c| c != usize::MAX);
            vertices.push(v);
            adjacency.push(
                self.adjacency[old]
                    .iter()
                    .filter(|(n, _)| map[*n] != usize::MAX)
                    .map(|&(n, w)| (map[n], w))
                    .collect(),
            );
        }
        self.root = map[self.root];
        self.vertices = vertices;
        self.adjacency = adjacency;
    }
}

/// Dijkstra shortest-path tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pub parent: Vec<Option<usize>>,
}

impl ShortestPaths {
    /// Vertex ids from the source to `v`, or `None` if unreachable.
    pub fn path_to(&self, v: usize) -> Option<Vec<usize>> {
        if !self.dist[v].is_finite() {
            return None;
        }
        let mut out = vec![v];
        let mut cur = v;
        while let Some(p) = self.parent[cur] {
            out.push(p);
            cur = p;
        }
        out.reverse();
        Some(out)
    }

    /// Reachable vertices with no children in the tree, ascending id. The
    /// source is never a leaf.
    pub fn leaves(&self) -> Vec<usize> {
        let mut has_child = vec![false; self.dist.len()];
        for p in self.parent.iter().flatten() {
            has_child[*p] = true;
        }
        (0..self.dist.len())
            .filter(|&v| v != self.source && self.dist[v].is_finite() && !has_child[v])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Item {
    dist: f64,
    id: usize,
}

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (dist, id).
        other.dist.total_cmp(&self.dist).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn shortest_paths(graph: &ExplorationGraph) -> ShortestPaths {
    shortest_paths_from(graph, graph.root())
}

/// Dijkstra from `source`. Among equal-length routes the parent with the
/// smaller id wins.
pub fn shortest_paths_from(graph: &ExplorationGraph, source: usize) -> ShortestPaths {
    let n = graph.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Item { dist: 0.0, id: source });
    while let Some(Item { dist: d, id: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in graph.neighbors(u) {
            if v == source {
                continue;
            }
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                parent[v] = Some(u);
                heap.push(Item { dist: nd, id: v });
            } else if nd == dist[v] && parent[v].is_some_and(|p| u < p) {
                parent[v] = Some(u);
            }
        }
    }
    ShortestPaths { source, dist, parent }
}
