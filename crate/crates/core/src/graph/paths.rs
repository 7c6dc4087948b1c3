//! Loop-free k-shortest paths (Yen) over an undirected weighted adjacency
//! list.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

/// Adjacency list: `adj[u]` holds `(v, weight)` for every edge `u - v`.
pub type Adjacency = [Vec<(usize, f64)>];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub hops: Vec<usize>,
    pub latency_ms: f64,
}

impl PathResult {
    fn cmp_rank(&self, other: &Self) -> Ordering {
        self.latency_ms
            .total_cmp(&other.latency_ms)
            .then_with(|| self.hops.cmp(&other.hops))
    }
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then node index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn edge_weight(adj: &Adjacency, u: usize, v: usize) -> Option<f64> {
    adj[u]
        .iter()
        .filter(|(n, _)| *n == v)
        .map(|&(_, w)| w)
        .min_by(f64::total_cmp)
}

/// Sum of edge weights along `hops`, accumulated from the first hop.
pub fn path_latency(adj: &Adjacency, hops: &[usize]) -> Option<f64> {
    hops.windows(2)
        .try_fold(0.0, |acc, w| edge_weight(adj, w[0], w[1]).map(|x| acc + x))
}

struct Dijkstra {
    dist: Vec<f64>,
    prev: Vec<usize>,
    done: Vec<bool>,
}

impl Dijkstra {
    fn new(n: usize) -> Self {
        Self {
            dist: vec![f64::INFINITY; n],
            prev: vec![usize::MAX; n],
            done: vec![false; n],
        }
    }

    fn run(
        &mut self,
        adj: &Adjacency,
        src: usize,
        dst: usize,
        blocked_nodes: &[bool],
        blocked_edges: &HashSet<(usize, usize)>,
    ) -> Option<Vec<usize>> {
        self.dist.fill(f64::INFINITY);
        self.prev.fill(usize::MAX);
        self.done.fill(false);
        let mut heap = BinaryHeap::new();
        self.dist[src] = 0.0;
        heap.push(Entry { dist: 0.0, node: src });
        while let Some(Entry { dist, node }) = heap.pop() {
            if self.done[node] {
                continue;
            }
            self.done[node] = true;
            if node == dst {
                break;
            }
            for &(next, w) in &adj[node] {
                if blocked_nodes[next] || self.done[next] || blocked_edges.contains(&(node, next)) {
                    continue;
                }
                let d = dist + w;
                if d < self.dist[next] {
                    self.dist[next] = d;
                    self.prev[next] = node;
                    heap.push(Entry { dist: d, node: next });
                }
            }
        }
        if !self.done[dst] {
            return None;
        }
        let mut path = vec![dst];
        let mut cur = dst;
        while cur != src {
            cur = self.prev[cur];
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }
}

/// Single-source shortest path from `src` to `dst`.
pub fn shortest_path(adj: &Adjacency, src: usize, dst: usize) -> Option<PathResult> {
    let mut d = Dijkstra::new(adj.len());
    let hops = d.run(adj, src, dst, &vec![false; adj.len()], &HashSet::new())?;
    let latency_ms = path_latency(adj, &hops)?;
    Some(PathResult { hops, latency_ms })
}

/// Up to `k` simple paths from `src` to `dst` in non-decreasing latency
/// order. Returns an empty list when `dst` is unreachable or `k == 0`.
pub fn yen(adj: &Adjacency, src: usize, dst: usize, k: usize) -> Vec<PathResult> {
    let n = adj.len();
    if k == 0 || src >= n || dst >= n {
        return Vec::new();
    }
    let Some(first) = shortest_path(adj, src, dst) else {
        return Vec::new();
    };
    if src == dst {
        return vec![first];
    }

    let mut found = vec![first];
    let mut candidates: Vec<PathResult> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    seen.insert(found[0].hops.clone());

    let mut dijkstra = Dijkstra::new(n);
    let mut blocked_nodes = vec![false; n];
    let mut blocked_edges = HashSet::new();

    while found.len() < k {
        let last = found.last().unwrap().hops.clone();
        for i in 0..last.len() - 1 {
            let spur = last[i];
            let root = &last[..=i];

            blocked_edges.clear();
            for p in &found {
                if p.hops.len() > i + 1 && p.hops[..=i] == *root {
                    let (a, b) = (p.hops[i], p.hops[i + 1]);
                    blocked_edges.insert((a, b));
                    blocked_edges.insert((b, a));
                }
            }
            blocked_nodes.fill(false);
            for &r in &root[..i] {
                blocked_nodes[r] = true;
            }

            if let Some(spur_path) = dijkstra.run(adj, spur, dst, &blocked_nodes, &blocked_edges) {
                let mut hops = root[..i].to_vec();
                hops.extend_from_slice(&spur_path);
                if seen.insert(hops.clone()) {
                    let latency_ms = path_latency(adj, &hops).expect("spur path uses graph edges");
                    candidates.push(PathResult { hops, latency_ms });
                }
            }
        }
        let Some(best) = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cmp_rank(b.1))
            .map(|(i, _)| i)
        else {
            break;
        };
        found.push(candidates.swap_remove(best));
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    fn undirected(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b, w) in edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        adj
    }

    #[test]
    fn triangle() {
        let adj = undirected(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        let paths = yen(&adj, 0, 2, 2);
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].hops, vec![0, 1, 2]);
        assert_eq!(paths[0].latency_ms, 2.0);
        assert_eq!(paths[1].hops, vec![0, 2]);
        assert_eq!(paths[1].latency_ms, 3.0);
        assert_eq!(yen(&adj, 0, 2, 10).len(), 2);
    }

    #[test]
    fn unreachable_and_degenerate() {
        let adj = undirected(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        assert!(yen(&adj, 0, 3, 5).is_empty());
        assert!(yen(&adj, 0, 1, 0).is_empty());
        assert_eq!(yen(&adj, 0, 0, 3).len(), 1);
    }

    #[test]
    fn k_one_is_dijkstra() {
        let adj = undirected(
            5,
            &[(0, 1, 2.0), (1, 4, 2.0), (0, 2, 1.0), (2, 3, 1.0), (3, 4, 1.5), (0, 4, 9.0)],
        );
        let one = yen(&adj, 0, 4, 1);
        assert_eq!(one, vec![shortest_path(&adj, 0, 4).unwrap()]);
        assert_eq!(one[0].hops, vec![0, 2, 3, 4]);
    }

    #[test]
    fn classic_yen_example() {
        // C D E F G H = 0..6, directed weights mirrored as undirected
        let adj = undirected(
            6,
            &[
                (0, 1, 3.0),
                (0, 2, 2.0),
                (1, 3, 4.0),
                (2, 1, 1.0),
                (2, 3, 2.0),
                (2, 4, 3.0),
                (3, 4, 2.0),
                (3, 5, 1.0),
                (4, 5, 2.0),
            ],
        );
        let paths = yen(&adj, 0, 5, 3);
        let costs: Vec<f64> = paths.iter().map(|p| p.latency_ms).collect();
        assert_eq!(costs, vec![5.0, 7.0, 7.0]);
        assert_eq!(paths[0].hops, vec![0, 2, 3, 5]);
    }
}
