use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ConsensusError;
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    Ring,
    Complete,
    ErdosRenyi { p: f64, seed: u64 },
    FromFile,
}

/// Undirected, connected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    /// Sorted pairs with `i < j`.
    edges: Vec<(usize, usize)>,
    kind: GraphKind,
}

impl Graph {
    pub fn ring(n: usize) -> Result<Self, ConsensusError> {
        let edges = (0..n).map(|i| (i, (i + 1) % n));
        Self::from_edges(n, edges, GraphKind::Ring)
    }

    pub fn complete(n: usize) -> Result<Self, ConsensusError> {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::from_edges(n, edges, GraphKind::Complete)
    }

    /// G(n, p) with a seeded RNG. Disconnected draws are rejected, not
    /// resampled.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self, ConsensusError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ConsensusError::InvalidConfig(format!("edge probability must lie in [0, 1], got {p}")));
        }
        let mut rng = seeded(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, edges, GraphKind::ErdosRenyi { p, seed })
    }

    /// Parses an edge list, one `i j` pair per line, 0-indexed. Blank lines
    /// and `#` comments are skipped; `n` is the largest index plus one.
    pub fn parse_edge_list(text: &str) -> Result<Self, ConsensusError> {
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |reason: String| ConsensusError::InvalidEdge { line: idx + 1, reason };
            if fields.len() != 2 {
                return Err(bad(format!("expected two node indices, got {line:?}")));
            }
            let parse = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
            let (i, j) = (parse(fields[0])?, parse(fields[1])?);
            if i == j {
                return Err(bad(format!("self-loop on node {i}")));
            }
            edges.push((i, j));
        }
        let n = edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0);
        Self::from_edges(n, edges, GraphKind::FromFile)
    }

    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        kind: GraphKind,
    ) -> Result<Self, ConsensusError> {
        if n < 3 {
            return Err(ConsensusError::TooFewNodes(n));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(ConsensusError::InvalidConfig(format!("edge ({i}, {j}) outside 0..{n}")));
            }
            if i == j {
                return Err(ConsensusError::InvalidConfig(format!("self-loop on node {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let g = Self {
            n,
            edges: set.into_iter().collect(),
            kind,
        };
        match g.components() {
            1 => Ok(g),
            components => Err(ConsensusError::Disconnected { components }),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    /// Number of connected components (union-find).
    pub fn components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut count = self.n;
        for &(i, j) in &self.edges {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
                count -= 1;
            }
        }
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors() {
        let r = Graph::ring(5).unwrap();
        assert_eq!(r.edges().len(), 5);
        assert!(r.degrees().iter().all(|&d| d == 2));
        let c = Graph::complete(4).unwrap();
        assert_eq!(c.edges().len(), 6);
        assert!(c.has_edge(3, 0));
    }

    #[test]
    fn rejects_small_and_disconnected() {
        assert!(matches!(Graph::ring(2), Err(ConsensusError::TooFewNodes(2))));
        let e = Graph::parse_edge_list("0 1\n2 3\n4 5\n").unwrap_err();
        assert!(matches!(e, ConsensusError::Disconnected { components: 3 }));
        assert!(e.to_string().contains("3 connected components"));
    }

    #[test]
    fn edge_list_parsing() {
        let g = Graph::parse_edge_list("# triangle\n0 1\n1 2\n\n2 0 # closing\n").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert!(matches!(
            Graph::parse_edge_list("0 1\n1 x\n"),
            Err(ConsensusError::InvalidEdge { line: 2, .. })
        ));
        assert!(Graph::parse_edge_list("0 0\n").is_err());
        assert!(Graph::parse_edge_list("0 1 2\n").is_err());
    }

    #[test]
    fn erdos_renyi_is_seeded() {
        let a = Graph::erdos_renyi(12, 0.5, 3).unwrap();
        let b = Graph::erdos_renyi(12, 0.5, 3).unwrap();
        assert_eq!(a, b);
        assert!(Graph::erdos_renyi(12, 0.0, 3).is_err());
    }
}
