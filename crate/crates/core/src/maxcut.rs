//! Max-Cut instances, their Ising Hamiltonians, exhaustive ground truth and
//! the seeded random-graph generator.
//!
//! Nodes and qubits are 0-based in memory; graph files use 1-based node ids.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register `brute_force_extremes` will enumerate.
pub const BRUTE_FORCE_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Undirected weighted graph with no self-loops or duplicate edges.
/// Edges are stored with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    num_nodes: usize,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if num_nodes < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {num_nodes}")));
        }
        let mut out: Vec<Edge> = Vec::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) out of range for {num_nodes} nodes"
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) has weight {w}")));
            }
            let (i, j) = (a.min(b), a.max(b));
            if out.iter().any(|e| e.i == i && e.j == j) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            out.push(Edge { i, j, w });
        }
        Ok(Self { num_nodes, edges: out })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w).sum()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for e in &self.edges {
            deg[e.i] += 1;
            deg[e.j] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                let other = if e.i == v {
                    e.j
                } else if e.j == v {
                    e.i
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Edge-list text: a header line `K`, then one `i j w` line per edge with
    /// 1-based node ids.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.num_nodes);
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {}", e.i + 1, e.j + 1, e.w);
        }
        out
    }

    /// Parses [`to_edge_list`](Self::to_edge_list) output. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing node-count header".into(),
        })?;
        let num_nodes: usize = header.parse().map_err(|_| Error::Parse {
            line: hline,
            message: format!("expected node count, got `{header}`"),
        })?;
        let mut edges = Vec::new();
        for (line, l) in lines {
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `i j w`, got `{l}`"),
                });
            }
            let node = |s: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(Error::Parse {
                        line,
                        message: format!("bad node id `{s}`"),
                    }),
                }
            };
            let w: f64 = fields[2].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad weight `{}`", fields[2]),
            })?;
            edges.push((node(fields[0])?, node(fields[1])?, w));
        }
        Self::new(num_nodes, edges)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GraphDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// JSON form of a graph: `{"num_nodes": K, "edges": [[i, j, w], ...]}` with
/// 1-based node ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl From<&WeightedGraph> for GraphDocument {
    fn from(g: &WeightedGraph) -> Self {
        Self {
            num_nodes: g.num_nodes,
            edges: g.edges.iter().map(|e| (e.i + 1, e.j + 1, e.w)).collect(),
        }
    }
}

impl TryFrom<GraphDocument> for WeightedGraph {
    type Error = Error;

    fn try_from(doc: GraphDocument) -> Result<Self> {
        let edges = doc
            .edges
            .iter()
            .map(|&(i, j, w)| {
                if i == 0 || j == 0 {
                    Err(Error::InvalidGraph("node ids are 1-based".into()))
                } else {
                    Ok((i - 1, j - 1, w))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        WeightedGraph::new(doc.num_nodes, edges)
    }
}

/// `H = Σ w_ij Z_i Z_j + Σ h_i Z_i`, diagonal in the computational basis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IsingHamiltonian {
    num_qubits: usize,
    couplings: Vec<(usize, usize, f64)>,
    fields: Vec<(usize, f64)>,
}

impl IsingHamiltonian {
    pub fn new(num_qubits: usize, couplings: Vec<(usize, usize, f64)>) -> Result<Self> {
        Self::with_fields(num_qubits, couplings, Vec::new())
    }

    pub fn with_fields(
        num_qubits: usize,
        couplings: Vec<(usize, usize, f64)>,
        fields: Vec<(usize, f64)>,
    ) -> Result<Self> {
        for &(i, j, _) in &couplings {
            if i == j {
                return Err(Error::RepeatedQubit(i));
            }
            for q in [i, j] {
                if q >= num_qubits {
                    return Err(Error::IndexOutOfRange { index: q, num_qubits });
                }
            }
        }
        for &(i, _) in &fields {
            if i >= num_qubits {
                return Err(Error::IndexOutOfRange { index: i, num_qubits });
            }
        }
        Ok(Self {
            num_qubits,
            couplings,
            fields,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    /// `(i, j, w)` ZZ terms.
    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.couplings
    }

    /// `(i, h)` single-Z terms.
    pub fn fields(&self) -> &[(usize, f64)] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.couplings.len() + self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Energy of the basis state `index` (qubit 0 is the most significant bit,
    /// bit value 0 is spin +1).
    pub fn energy_of_basis(&self, index: usize) -> f64 {
        let n = self.num_qubits;
        let spin = |q: usize| if (index >> (n - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 };
        let zz: f64 = self.couplings.iter().map(|&(i, j, w)| w * spin(i) * spin(j)).sum();
        let z: f64 = self.fields.iter().map(|&(i, h)| h * spin(i)).sum();
        zz + z
    }

    /// Energy of a spin configuration, `spins[q] ∈ {+1, -1}`.
    pub fn energy_of_spins(&self, spins: &[i8]) -> f64 {
        let zz: f64 = self
            .couplings
            .iter()
            .map(|&(i, j, w)| w * f64::from(spins[i] * spins[j]))
            .sum();
        let z: f64 = self.fields.iter().map(|&(i, h)| h * f64::from(spins[i])).sum();
        zz + z
    }

    /// `Σ_b p_b E(b)` for basis probabilities `probs` of length `2^N`.
    pub fn diagonal_expectation(&self, probs: &[f64]) -> f64 {
        let n = self.num_qubits;
        debug_assert_eq!(probs.len(), 1 << n);
        let mut total = 0.0;
        for &(i, j, w) in &self.couplings {
            let mask = (1usize << (n - 1 - i)) | (1usize << (n - 1 - j));
            let signed: f64 = probs
                .iter()
                .enumerate()
                .map(|(b, p)| {
                    if (b & mask).count_ones().is_multiple_of(2) {
                        *p
                    } else {
                        -*p
                    }
                })
                .sum();
            total += w * signed;
        }
        for &(i, h) in &self.fields {
            let mask = 1usize << (n - 1 - i);
            let signed: f64 = probs
                .iter()
                .enumerate()
                .map(|(b, p)| if b & mask == 0 { *p } else { -*p })
                .sum();
            total += h * signed;
        }
        total
    }
}

/// One ZZ term per edge, one qubit per node.
pub fn hamiltonian_from_graph(graph: &WeightedGraph) -> IsingHamiltonian {
    IsingHamiltonian {
        num_qubits: graph.num_nodes,
        couplings: graph.edges.iter().map(|e| (e.i, e.j, e.w)).collect(),
        fields: Vec::new(),
    }
}

/// Pins the last node to spin +1, leaving `K - 1` qubits. Edges touching the
/// pinned node become single-Z terms.
pub fn hamiltonian_fixing_last_node(graph: &WeightedGraph) -> IsingHamiltonian {
    let pinned = graph.num_nodes - 1;
    let mut couplings = Vec::new();
    let mut fields: Vec<(usize, f64)> = Vec::new();
    for e in &graph.edges {
        if e.j == pinned {
            match fields.iter_mut().find(|(q, _)| *q == e.i) {
                Some((_, h)) => *h += e.w,
                None => fields.push((e.i, e.w)),
            }
        } else {
            couplings.push((e.i, e.j, e.w));
        }
    }
    IsingHamiltonian {
        num_qubits: pinned,
        couplings,
        fields,
    }
}

/// A 0/1 partition label per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CutAssignment(pub Vec<bool>);

impl CutAssignment {
    /// Bits of basis index `index` over `n` qubits, qubit 0 first.
    pub fn from_basis(index: usize, n: usize) -> Self {
        Self((0..n).map(|q| (index >> (n - 1 - q)) & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| !b).collect())
    }

    /// `z = 1 - 2x`.
    pub fn spins(&self) -> Vec<i8> {
        self.0.iter().map(|&b| if b { -1 } else { 1 }).collect()
    }
}

impl std::fmt::Display for CutAssignment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Total weight of edges whose endpoints fall in different partitions.
pub fn cut_value(graph: &WeightedGraph, x: &CutAssignment) -> Result<f64> {
    if x.len() != graph.num_nodes {
        return Err(Error::LengthMismatch {
            expected: graph.num_nodes,
            got: x.len(),
        });
    }
    Ok(graph.edges.iter().filter(|e| x.0[e.i] != x.0[e.j]).map(|e| e.w).sum())
}

/// Extremes of the Ising energy over all `2^N` spin configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct Extremes {
    pub max: f64,
    pub min: f64,
    pub argmin: CutAssignment,
}

pub fn brute_force_extremes(ham: &IsingHamiltonian) -> Result<Extremes> {
    let n = ham.num_qubits;
    if n > BRUTE_FORCE_CAP {
        return Err(Error::SizeCap {
            what: "brute-force enumeration",
            cap: BRUTE_FORCE_CAP,
            got: n,
        });
    }
    let mut best = (f64::NEG_INFINITY, f64::INFINITY, 0usize);
    for index in 0..(1usize << n) {
        let e = ham.energy_of_basis(index);
        if e > best.0 {
            best.0 = e;
        }
        if e < best.1 {
            best.1 = e;
            best.2 = index;
        }
    }
    Ok(Extremes {
        max: best.0,
        min: best.1,
        argmin: CutAssignment::from_basis(best.2, n),
    })
}

/// `(M - E) / (M - m)`: 1 at the ground energy, 0 at the top of the spectrum.
pub fn approximation_ratio(energy: f64, max: f64, min: f64) -> Result<f64> {
    if max <= min {
        return Err(Error::DegenerateInstance(max));
    }
    Ok((max - energy) / (max - min))
}

/// Seeded connected graph with every degree in `{2, 3}` and integer weights
/// drawn uniformly from `1..=10`.
///
/// A Hamiltonian cycle through a random node order gives degree 2 and
/// connectivity; `round(K / 4)` random chords between degree-2 nodes then
/// bring the mean degree to about 2.5.
pub fn random_graph(num_nodes: usize, seed: u64) -> Result<WeightedGraph> {
    if num_nodes < 4 {
        return Err(Error::InvalidGraph(format!(
            "degree constraints need at least 4 nodes, got {num_nodes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..num_nodes).collect();
    order.shuffle(&mut rng);
    let mut pairs: Vec<(usize, usize)> = (0..num_nodes)
        .map(|k| {
            let (a, b) = (order[k], order[(k + 1) % num_nodes]);
            (a.min(b), a.max(b))
        })
        .collect();
    let mut degree = vec![2usize; num_nodes];
    let chords = (num_nodes + 2) / 4;
    for _ in 0..chords {
        let eligible: Vec<(usize, usize)> = (0..num_nodes)
            .flat_map(|i| (i + 1..num_nodes).map(move |j| (i, j)))
            .filter(|&(i, j)| degree[i] < 3 && degree[j] < 3 && !pairs.contains(&(i, j)))
            .collect();
        if eligible.is_empty() {
            break;
        }
        let (i, j) = eligible[rng.random_range(0..eligible.len())];
        degree[i] += 1;
        degree[j] += 1;
        pairs.push((i, j));
    }
    pairs.sort_unstable();
    let edges: Vec<(usize, usize, f64)> = pairs
        .into_iter()
        .map(|(i, j)| (i, j, f64::from(rng.random_range(1..=10u8))))
        .collect();
    WeightedGraph::new(num_nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triangle() -> WeightedGraph {
        WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    fn bits(s: &str) -> CutAssignment {
        CutAssignment(s.chars().map(|c| c == '1').collect())
    }

    #[test]
    fn hamiltonian_maps_edges() {
        let h = hamiltonian_from_graph(&triangle());
        assert_eq!(h.couplings(), &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let single = WeightedGraph::new(2, [(0, 1, 5.0)]).unwrap();
        assert_eq!(hamiltonian_from_graph(&single).couplings(), &[(0, 1, 5.0)]);
        let empty = WeightedGraph::new(3, []).unwrap();
        assert!(hamiltonian_from_graph(&empty).is_empty());
    }

    #[test]
    fn cut_values() {
        let g = triangle();
        assert_eq!(cut_value(&g, &bits("000")).unwrap(), 0.0);
        assert_eq!(cut_value(&g, &bits("010")).unwrap(), 2.0);
        let single = WeightedGraph::new(2, [(0, 1, 5.0)]).unwrap();
        assert_eq!(cut_value(&single, &bits("01")).unwrap(), 5.0);
        assert!(matches!(
            cut_value(&g, &bits("01")),
            Err(Error::LengthMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn extremes() {
        let t = brute_force_extremes(&hamiltonian_from_graph(&triangle())).unwrap();
        assert_eq!((t.max, t.min), (3.0, -1.0));
        let single = WeightedGraph::new(2, [(0, 1, 5.0)]).unwrap();
        let s = brute_force_extremes(&hamiltonian_from_graph(&single)).unwrap();
        assert_eq!((s.max, s.min), (5.0, -5.0));
        let empty = IsingHamiltonian::new(3, vec![]).unwrap();
        let e = brute_force_extremes(&empty).unwrap();
        assert_eq!((e.max, e.min), (0.0, 0.0));
        let big = IsingHamiltonian::new(25, vec![]).unwrap();
        assert!(matches!(brute_force_extremes(&big), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(approximation_ratio(-1.0, 3.0, -1.0).unwrap(), 1.0);
        assert_eq!(approximation_ratio(3.0, 3.0, -1.0).unwrap(), 0.0);
        assert_eq!(approximation_ratio(1.0, 3.0, -1.0).unwrap(), 0.5);
        assert!(matches!(
            approximation_ratio(0.0, 0.0, 0.0),
            Err(Error::DegenerateInstance(_))
        ));
    }

    #[test]
    fn graph_validation() {
        assert!(WeightedGraph::new(1, []).is_err());
        assert!(WeightedGraph::new(3, [(1, 1, 1.0)]).is_err());
        assert!(WeightedGraph::new(3, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(WeightedGraph::new(3, [(0, 3, 1.0)]).is_err());
    }

    #[test]
    fn random_graph_small_is_infeasible() {
        assert!(random_graph(3, 0).is_err());
        assert!(random_graph(4, 0).is_ok());
    }

    #[test]
    fn random_graph_is_deterministic() {
        assert_eq!(random_graph(10, 7).unwrap(), random_graph(10, 7).unwrap());
        assert_ne!(random_graph(10, 7).unwrap(), random_graph(10, 8).unwrap());
    }

    proptest! {
        #[test]
        fn random_graph_protocol(k in 4usize..40, seed in any::<u64>()) {
            let g = random_graph(k, seed).unwrap();
            let deg = g.degrees();
            prop_assert!(deg.iter().all(|&d| d == 2 || d == 3));
            prop_assert!(g.is_connected());
            for e in g.edges() {
                prop_assert!(e.w.fract() == 0.0 && (1.0..=10.0).contains(&e.w));
            }
        }

        #[test]
        fn edge_list_round_trip(k in 4usize..20, seed in any::<u64>()) {
            let g = random_graph(k, seed).unwrap();
            prop_assert_eq!(WeightedGraph::parse_edge_list(&g.to_edge_list()).unwrap(), g.clone());
            prop_assert_eq!(WeightedGraph::from_json(&g.to_json().unwrap()).unwrap(), g);
        }
    }

    #[test]
    fn energy_cut_duality_and_flip_symmetry() {
        for seed in 0..5 {
            let g = random_graph(8, seed).unwrap();
            let h = hamiltonian_from_graph(&g);
            let total = g.total_weight();
            for index in 0..(1usize << 8) {
                let x = CutAssignment::from_basis(index, 8);
                let cut = cut_value(&g, &x).unwrap();
                let energy = h.energy_of_spins(&x.spins());
                assert_eq!(total - 2.0 * cut, energy);
                assert_eq!(energy, h.energy_of_basis(index));
                let flipped = x.complement();
                assert_eq!(cut_value(&g, &flipped).unwrap(), cut);
                assert_eq!(h.energy_of_spins(&flipped.spins()), energy);
            }
        }
    }

    #[test]
    fn max_is_negated_min_of_negated_instance() {
        for seed in 0..5 {
            let g = random_graph(9, seed).unwrap();
            let h = hamiltonian_from_graph(&g);
            let neg = IsingHamiltonian::new(
                h.num_qubits(),
                h.couplings().iter().map(|&(i, j, w)| (i, j, -w)).collect(),
            )
            .unwrap();
            let a = brute_force_extremes(&h).unwrap();
            let b = brute_force_extremes(&neg).unwrap();
            assert_eq!(a.max, -b.min);
            assert_eq!(h.energy_of_spins(&a.argmin.spins()), a.min);
        }
    }

    #[test]
    fn pinned_node_preserves_extremes() {
        for seed in 0..5 {
            let g = random_graph(8, seed).unwrap();
            let full = brute_force_extremes(&hamiltonian_from_graph(&g)).unwrap();
            let reduced_h = hamiltonian_fixing_last_node(&g);
            assert_eq!(reduced_h.num_qubits(), 7);
            let reduced = brute_force_extremes(&reduced_h).unwrap();
            assert_eq!((full.max, full.min), (reduced.max, reduced.min));
        }
    }

    #[test]
    fn edge_list_parsing_errors() {
        assert!(WeightedGraph::parse_edge_list("").is_err());
        assert!(WeightedGraph::parse_edge_list("3\n1 2\n").is_err());
        assert!(WeightedGraph::parse_edge_list("3\n0 2 1\n").is_err());
        let g = WeightedGraph::parse_edge_list("# triangle\n3\n1 2 1\n2 3 1\n\n1 3 1\n").unwrap();
        assert_eq!(g, triangle());
    }
}
