//! Simple undirected graphs used as the source of stabilizers.
//!
//! Vertices are 0-indexed throughout the Rust API. The JSON form (and every
//! CLI surface) is 1-indexed; conversion happens only in [`Graph::from_json`]
//! and [`Graph::to_json`].

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A validated simple graph with no isolated vertices.
///
/// Edges are stored normalized (`a < b`) and sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphJson {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl Graph {
    /// Build a graph from 0-indexed edges.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for v in [a, b] {
                if v >= n {
                    return Err(Error::VertexOutOfRange { vertex: v + 1, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a + 1));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(Error::DuplicateEdge(e.0 + 1, e.1 + 1));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
        }
        if let Some(v) = adjacency.iter().position(Vec::is_empty) {
            return Err(Error::IsolatedVertex(v + 1));
        }
        Ok(Graph { n, edges, adjacency })
    }

    /// Parse `{"n": int, "edges": [[i, j], ...]}` with 1-indexed vertices.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GraphJson = serde_json::from_str(text)?;
        Self::from_one_indexed(raw.n, raw.edges.iter().map(|e| (e[0], e[1])))
    }

    /// Build from 1-indexed edges, as used by the JSON form.
    pub fn from_one_indexed(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut zero = Vec::new();
        for (a, b) in edges {
            for v in [a, b] {
                if v == 0 || v > n {
                    return Err(Error::VertexOutOfRange { vertex: v, n });
                }
            }
            zero.push((a - 1, b - 1));
        }
        Self::new(n, zero)
    }

    /// Canonical JSON (1-indexed, sorted edges, no whitespace).
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("graph serializes")
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let raw = GraphJson {
            n: self.n,
            edges: self.edges.iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
        };
        serde_json::to_value(raw).expect("graph serializes")
    }

    pub fn builtin(kind: Builtin, n: usize) -> Result<Self> {
        let unsupported = || Error::UnsupportedBuiltin {
            kind: kind.to_string(),
            n,
        };
        let min = if kind == Builtin::Ring { 3 } else { 2 };
        if n < min {
            return Err(unsupported());
        }
        let edges: Vec<(usize, usize)> = match kind {
            Builtin::Star => (1..n).map(|i| (0, i)).collect(),
            Builtin::Ring => (0..n).map(|i| (i, (i + 1) % n)).collect(),
            Builtin::Line => (0..n - 1).map(|i| (i, i + 1)).collect(),
            Builtin::Complete => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect(),
        };
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Normalized edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbours of `v`, sorted ascending.
    pub fn neighborhood(&self, v: usize) -> Result<&[usize]> {
        self.adjacency
            .get(v)
            .map(Vec::as_slice)
            .ok_or(Error::VertexOutOfRange {
                vertex: v + 1,
                n: self.n,
            })
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Lowest-index vertex of maximal degree.
    pub fn pivot(&self) -> usize {
        let max = self.max_degree();
        self.adjacency
            .iter()
            .position(|a| a.len() == max)
            .expect("graph is non-empty")
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency
            .get(a)
            .is_some_and(|list| list.binary_search(&b).is_ok())
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    /// Map every vertex `v` to `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        validate_permutation(perm, self.n)?;
        Self::new(self.n, self.edges.iter().map(|&(a, b)| (perm[a], perm[b])))
    }

    /// Parity of the number of edges with both endpoints in `subset`.
    pub fn edge_parity(&self, subset: &[usize]) -> Result<bool> {
        let mut member = vec![false; self.n];
        for &v in subset {
            *member.get_mut(v).ok_or(Error::VertexOutOfRange {
                vertex: v + 1,
                n: self.n,
            })? = true;
        }
        Ok(self
            .edges
            .iter()
            .filter(|&&(a, b)| member[a] && member[b])
            .count()
            % 2
            == 1)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

impl Serialize for Graph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = GraphJson::deserialize(d)?;
        Graph::from_one_indexed(raw.n, raw.edges.iter().map(|e| (e[0], e[1])))
            .map_err(serde::de::Error::custom)
    }
}

/// Transposition exchanging `a` and `b` on `n` vertices.
pub fn transposition(n: usize, a: usize, b: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.swap(a, b);
    p
}

pub fn invert_permutation(perm: &[usize]) -> Result<Vec<usize>> {
    validate_permutation(perm, perm.len())?;
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    Ok(inv)
}

fn validate_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::NotAPermutation(n));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::NotAPermutation(n));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    Star,
    Ring,
    Line,
    Complete,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [Builtin::Star, Builtin::Ring, Builtin::Line, Builtin::Complete];
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Builtin::Star => "star",
            Builtin::Ring => "ring",
            Builtin::Line => "line",
            Builtin::Complete => "complete",
        })
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" => Ok(Builtin::Star),
            "ring" => Ok(Builtin::Ring),
            "line" => Ok(Builtin::Line),
            "complete" => Ok(Builtin::Complete),
            other => Err(Error::UnsupportedBuiltin {
                kind: other.to_string(),
                n: 0,
            }),
        }
    }
}
