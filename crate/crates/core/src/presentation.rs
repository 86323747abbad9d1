//! Graph-product presentations: defining graphs, their nerves, and the
//! shipped presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

/// Vertex subsets of the defining graph. Presentations are limited to 128
/// generators so a subset fits a single word.
pub type Mask = u128;

pub const MAX_GENERATORS: usize = 128;

#[inline]
pub fn bit(v: usize) -> Mask {
    1u128 << v
}

pub fn mask_iter(mut m: Mask) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let v = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(v)
        }
    })
}

/// Raw defining data, exactly as read from a graph file. Nothing is checked
/// here; see [`validate_graph`] and [`Presentation::new`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefiningGraph {
    #[serde(rename = "vertices")]
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub orders: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    TooFewVertices(usize),
    TooManyVertices(usize),
    OrdersLength { expected: usize, got: usize },
    OrderTooSmall { vertex: usize, order: u32 },
    OrderTooLarge { vertex: usize, order: u32 },
    VertexOutOfRange { edge: [usize; 2] },
    Loop(usize),
    DuplicateEdge([usize; 2]),
    NoEdge,
    NoNonAdjacentPair,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewVertices(n) => write!(f, "need at least 2 vertices, got {n}"),
            Violation::TooManyVertices(n) => {
                write!(f, "at most {MAX_GENERATORS} vertices supported, got {n}")
            }
            Violation::OrdersLength { expected, got } => {
                write!(f, "orders has {got} entries, expected {expected}")
            }
            Violation::OrderTooSmall { vertex, order } => {
                write!(f, "order {order} at vertex {vertex} is below 2")
            }
            Violation::OrderTooLarge { vertex, order } => {
                write!(f, "order {order} at vertex {vertex} exceeds 255")
            }
            Violation::VertexOutOfRange { edge } => {
                write!(f, "edge {edge:?} names a vertex out of range")
            }
            Violation::Loop(v) => write!(f, "loop at vertex {v}"),
            Violation::DuplicateEdge(e) => write!(f, "duplicate edge {e:?}"),
            Violation::NoEdge => write!(f, "graph has no edge"),
            Violation::NoNonAdjacentPair => {
                write!(f, "no non-adjacent pair (group finite/affine)")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

pub fn validate_graph(g: &DefiningGraph) -> ValidationReport {
    let mut out = Vec::new();
    if g.n < 2 {
        out.push(Violation::TooFewVertices(g.n));
    }
    if g.n > MAX_GENERATORS {
        out.push(Violation::TooManyVertices(g.n));
    }
    if g.orders.len() != g.n {
        out.push(Violation::OrdersLength { expected: g.n, got: g.orders.len() });
    }
    for (v, &q) in g.orders.iter().enumerate() {
        if q < 2 {
            out.push(Violation::OrderTooSmall { vertex: v, order: q });
        } else if q > 255 {
            out.push(Violation::OrderTooLarge { vertex: v, order: q });
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for &[a, b] in &g.edges {
        if a >= g.n || b >= g.n {
            out.push(Violation::VertexOutOfRange { edge: [a, b] });
            continue;
        }
        if a == b {
            out.push(Violation::Loop(a));
            continue;
        }
        let key = [a.min(b), a.max(b)];
        if !seen.insert(key) {
            out.push(Violation::DuplicateEdge(key));
        }
    }
    if seen.is_empty() {
        out.push(Violation::NoEdge);
    }
    let pairs = g.n * g.n.saturating_sub(1) / 2;
    if g.n >= 2 && seen.len() == pairs {
        out.push(Violation::NoNonAdjacentPair);
    }
    ValidationReport { violations: out }
}

/// A validated presentation with adjacency precomputed as bitsets.
#[derive(Clone, Debug)]
pub struct Presentation {
    graph: DefiningGraph,
    adj: Vec<Mask>,
    orders: Vec<u8>,
}

impl Presentation {
    pub fn new(graph: DefiningGraph) -> Result<Self, ValidationReport> {
        let report = validate_graph(&graph);
        if !report.is_valid() {
            return Err(report);
        }
        let mut adj = vec![0; graph.n];
        let mut edges: Vec<[usize; 2]> =
            graph.edges.iter().map(|&[a, b]| [a.min(b), a.max(b)]).collect();
        edges.sort_unstable();
        for &[a, b] in &edges {
            adj[a] |= bit(b);
            adj[b] |= bit(a);
        }
        let orders = graph.orders.iter().map(|&q| q as u8).collect();
        Ok(Presentation { graph: DefiningGraph { edges, ..graph }, adj, orders })
    }

    /// Same graph with every order set to 2: the Coxeter group W of the
    /// apartment.
    pub fn coxeter(&self) -> Presentation {
        let mut g = self.graph.clone();
        g.orders = vec![2; g.n];
        Presentation::new(g).expect("coxeter image of a valid presentation is valid")
    }

    pub fn with_orders(&self, orders: Vec<u32>) -> Result<Presentation, ValidationReport> {
        let mut g = self.graph.clone();
        g.orders = orders;
        Presentation::new(g)
    }

    pub fn graph(&self) -> &DefiningGraph {
        &self.graph
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.graph.n
    }

    #[inline]
    pub fn order(&self, v: usize) -> u8 {
        self.orders[v]
    }

    #[inline]
    pub fn adj(&self, v: usize) -> Mask {
        self.adj[v]
    }

    #[inline]
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a] & bit(b) != 0
    }

    /// Star of v: v together with its link.
    #[inline]
    pub fn star(&self, v: usize) -> Mask {
        self.adj[v] | bit(v)
    }

    pub fn all(&self) -> Mask {
        if self.n() == 128 {
            Mask::MAX
        } else {
            bit(self.n()) - 1
        }
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.graph.edges
    }

    pub fn is_clique(&self, m: Mask) -> bool {
        mask_iter(m).all(|v| self.adj[v] & m == m & !bit(v))
    }

    /// Γ_I is finite iff I spans a clique.
    pub fn is_spherical(&self, m: Mask) -> bool {
        self.is_clique(m)
    }

    pub fn thickness_constant(&self) -> Option<u8> {
        let q = self.orders[0];
        self.orders.iter().all(|&x| x == q).then_some(q)
    }

    /// Sha-256 over a canonical serialization: sorted normalized edges and
    /// orders. Key order of the source file does not matter.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        for &[a, b] in &self.graph.edges {
            h.update((a as u64).to_le_bytes());
            h.update((b as u64).to_le_bytes());
        }
        for &q in &self.orders {
            h.update([q]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn nerve(&self) -> NerveComplex {
        let mut simplices = Vec::new();
        let mut stack: Vec<(Mask, Mask)> = vec![(0, self.all())];
        while let Some((clique, candidates)) = stack.pop() {
            simplices.push(clique);
            // Extend only by vertices above the current maximum, so each clique
            // is produced once.
            let floor = if clique == 0 { 0 } else { 128 - clique.leading_zeros() as usize };
            for v in mask_iter(candidates) {
                if v >= floor {
                    stack.push((clique | bit(v), candidates & self.adj[v]));
                }
            }
        }
        simplices.sort_by_key(|&m| (m.count_ones(), m));
        NerveComplex { n: self.n(), simplices }
    }

    pub fn clique_number(&self) -> usize {
        self.nerve().simplices.iter().map(|m| m.count_ones() as usize).max().unwrap_or(0)
    }

    /// Connectivity of the full subgraph on `m`; the empty set counts as
    /// disconnected.
    pub fn induced_connected(&self, m: Mask) -> bool {
        if m == 0 {
            return false;
        }
        let start = m.trailing_zeros() as usize;
        let mut seen = bit(start);
        let mut frontier = seen;
        while frontier != 0 {
            let mut next = 0;
            for v in mask_iter(frontier) {
                next |= self.adj[v] & m;
            }
            frontier = next & !seen;
            seen |= next;
        }
        seen == m
    }
}

/// Flag complex of the defining graph. Simplices are cliques, the empty
/// simplex included, sorted by size then bit pattern.
#[derive(Clone, Debug)]
pub struct NerveComplex {
    pub n: usize,
    pub simplices: Vec<Mask>,
}

impl NerveComplex {
    pub fn count_by_dimension(&self) -> Vec<usize> {
        let top = self.simplices.iter().map(|m| m.count_ones() as usize).max().unwrap_or(0);
        let mut out = vec![0; top + 1];
        for m in &self.simplices {
            out[m.count_ones() as usize] += 1;
        }
        out
    }
}

/// No induced square: every 4-circuit has a chord.
pub fn is_hyperbolic(p: &Presentation) -> bool {
    let n = p.n();
    for a in 0..n {
        for c in (a + 1)..n {
            if p.adjacent(a, c) {
                continue;
            }
            let common = p.adj(a) & p.adj(c);
            for b in mask_iter(common) {
                if common & !p.adj(b) & !bit(b) != 0 {
                    return false;
                }
            }
        }
    }
    true
}

/// Davis–Meier criterion: L∖σ connected for every simplex σ, the empty one
/// included.
pub fn boundary_connected(p: &Presentation) -> bool {
    let all = p.all();
    p.nerve().simplices.iter().all(|&s| p.induced_connected(all & !s))
}

#[derive(Clone, Debug)]
pub struct Preset {
    pub name: String,
    pub presentation: Presentation,
}

pub const PRESET_NAMES: [&str; 3] = ["cycle:<n>", "dodecahedron", "120cell"];

const CELL120_EDGES: &str = include_str!("../data/120cell.edges");

pub fn cycle_graph(n: usize, q: u32) -> DefiningGraph {
    DefiningGraph { n, edges: (0..n).map(|i| [i, (i + 1) % n]).collect(), orders: vec![q; n] }
}

/// Face-adjacency graph of the dodecahedron (the icosahedron graph): a top
/// face, two rings of five, a bottom face.
pub fn dodecahedron_graph(q: u32) -> DefiningGraph {
    let mut edges = Vec::new();
    for i in 0..5 {
        let up = 1 + i;
        let up_next = 1 + (i + 1) % 5;
        let low = 6 + i;
        let low_next = 6 + (i + 1) % 5;
        edges.push([0, up]);
        edges.push([up, up_next]);
        edges.push([up, low]);
        edges.push([up, low_next]);
        edges.push([low, low_next]);
        edges.push([low, 11]);
    }
    DefiningGraph { n: 12, edges, orders: vec![q; 12] }
}

pub fn cell120_graph(q: u32) -> DefiningGraph {
    let edges = CELL120_EDGES
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace().map(|t| t.parse::<usize>().expect("edge table"));
            [it.next().unwrap(), it.next().unwrap()]
        })
        .collect();
    DefiningGraph { n: 120, edges, orders: vec![q; 120] }
}

#[derive(Debug, thiserror::Error)]
pub enum PresetError {
    #[error("unknown preset {0:?}; expected cycle:<n>, dodecahedron or 120cell")]
    Unknown(String),
    #[error("preset {name} is invalid: {report}")]
    Invalid { name: String, report: ValidationReport },
}

impl std::error::Error for ValidationReport {}

/// Presets use thickness 3 everywhere.
pub fn preset(name: &str) -> Result<Preset, PresetError> {
    let graph = if let Some(rest) = name.strip_prefix("cycle:") {
        let n: usize = rest.parse().map_err(|_| PresetError::Unknown(name.to_string()))?;
        cycle_graph(n, 3)
    } else if name == "dodecahedron" {
        dodecahedron_graph(3)
    } else if name == "120cell" {
        cell120_graph(3)
    } else {
        return Err(PresetError::Unknown(name.to_string()));
    };
    let presentation = Presentation::new(graph)
        .map_err(|report| PresetError::Invalid { name: name.to_string(), report })?;
    Ok(Preset { name: name.to_string(), presentation })
}
