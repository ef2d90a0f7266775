//! Directed graphs over players, plus the connectivity and reduction checks
//! the gossip algorithms need as preconditions.
//!
//! Vertices are numbered `1..=n` in every public function. Internally the
//! adjacency lists are zero-based and sorted.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    out: Vec<Vec<usize>>,
    inn: Vec<Vec<usize>>,
}

impl Digraph {
    /// Graph with `n` vertices and no edges.
    pub fn empty(n: usize) -> Self {
        Digraph {
            n,
            out: vec![Vec::new(); n],
            inn: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from 1-based `(from, to)` pairs. Duplicates are merged;
    /// self-loops and out-of-range endpoints are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (from, to) in edges {
            for v in [from, to] {
                if v == 0 || v > n {
                    return Err(Error::VertexOutOfRange { vertex: v, n });
                }
            }
            if from == to {
                return Err(Error::SelfLoop(from));
            }
            set.insert((from - 1, to - 1));
        }
        let mut g = Digraph::empty(n);
        for (a, b) in set {
            g.out[a].push(b);
            g.inn[b].push(a);
        }
        for list in g.inn.iter_mut() {
            list.sort_unstable();
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let edges = (1..=n).flat_map(|i| (1..=n).filter(move |&j| j != i).map(move |j| (i, j)));
        Digraph::from_edges(n, edges).expect("complete digraph edges are valid")
    }

    /// Directed cycle 1 → 2 → … → n → 1.
    pub fn ring(n: usize) -> Self {
        if n < 2 {
            return Digraph::empty(n);
        }
        Digraph::from_edges(n, (1..=n).map(|i| (i, i % n + 1))).expect("ring edges are valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// All edges as sorted 1-based pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(a, outs)| outs.iter().map(move |&b| (a + 1, b + 1)))
            .collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        from >= 1
            && to >= 1
            && from <= self.n
            && to <= self.n
            && self.out[from - 1].binary_search(&(to - 1)).is_ok()
    }

    fn check_vertex(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n {
            Err(Error::VertexOutOfRange {
                vertex: i,
                n: self.n,
            })
        } else {
            Ok(())
        }
    }

    /// `{ j : (j, i) ∈ E }`, ascending.
    pub fn in_neighbors(&self, i: usize) -> Result<Vec<usize>> {
        self.check_vertex(i)?;
        Ok(self.inn[i - 1].iter().map(|&j| j + 1).collect())
    }

    pub fn out_neighbors(&self, i: usize) -> Result<Vec<usize>> {
        self.check_vertex(i)?;
        Ok(self.out[i - 1].iter().map(|&j| j + 1).collect())
    }

    /// In-neighbours together with `i` itself, ascending.
    pub fn closed_in_neighbors(&self, i: usize) -> Result<Vec<usize>> {
        self.check_vertex(i)?;
        Ok(self.closed_in0(i - 1).into_iter().map(|j| j + 1).collect())
    }

    pub(crate) fn in0(&self, i: usize) -> &[usize] {
        &self.inn[i]
    }

    pub(crate) fn out0(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub(crate) fn closed_in0(&self, i: usize) -> Vec<usize> {
        let mut v = self.inn[i].clone();
        let pos = v.partition_point(|&j| j < i);
        v.insert(pos, i);
        v
    }

    pub(crate) fn has_edge0(&self, from: usize, to: usize) -> bool {
        self.out[from].binary_search(&to).is_ok()
    }

    pub fn is_subgraph_of(&self, other: &Digraph) -> bool {
        self.n == other.n && self.edges().iter().all(|&(a, b)| other.has_edge(a, b))
    }

    pub fn is_complete(&self) -> bool {
        self.edge_count() == self.n * self.n.saturating_sub(1)
    }

    /// True iff every ordered vertex pair is joined by a directed path.
    /// Forward and backward reachability from vertex 1, linear in edges.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        reaches_all(&self.out) && reaches_all(&self.inn)
    }

    pub(crate) fn edge_matrix(&self) -> Vec<Vec<bool>> {
        let mut m = vec![vec![false; self.n]; self.n];
        for (a, outs) in self.out.iter().enumerate() {
            for &b in outs {
                m[a][b] = true;
            }
        }
        m
    }

    fn from_matrix(m: &[Vec<bool>]) -> Self {
        let n = m.len();
        let edges = (0..n).flat_map(|a| {
            (0..n)
                .filter(move |&b| m[a][b])
                .map(move |b| (a + 1, b + 1))
        });
        Digraph::from_edges(n, edges).expect("matrix has no self-loops")
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

/// Rule-based transitive reduction.
///
/// Edges are visited in lexicographic order; `(i, l)` is removed when some
/// `j` has both `(i, j)` and `(j, l)` in the current graph. The two edges of
/// that witness path are then pinned and never removed afterwards, so every
/// removed edge keeps a parallel length-2 path in the result. This keeps
/// reachability intact (strongly connected inputs stay strongly connected)
/// and the output is always a subset of the input.
pub fn transitive_reduction(g: &Digraph) -> Digraph {
    reduce(g, None)
}

/// Same removal rule, but edges outside `keep` are tried first and witness
/// paths lying inside `keep` are preferred. Used to decide whether `keep`
/// contains *some* reduction of `g`.
pub fn transitive_reduction_preferring(g: &Digraph, keep: &Digraph) -> Digraph {
    reduce(g, Some(keep))
}

fn reduce(g: &Digraph, keep: Option<&Digraph>) -> Digraph {
    let n = g.n;
    let mut present = g.edge_matrix();
    let mut pinned = vec![vec![false; n]; n];
    let kept = |a: usize, b: usize| keep.is_some_and(|k| k.n == n && k.has_edge0(a, b));

    let mut order: Vec<(usize, usize)> =
        g.edges().into_iter().map(|(a, b)| (a - 1, b - 1)).collect();
    if keep.is_some() {
        // stable: non-kept edges first, each group lexicographic
        order.sort_by_key(|&(a, b)| kept(a, b));
    }

    for (i, l) in order {
        if pinned[i][l] {
            continue;
        }
        let witnesses = (0..n).filter(|&j| j != i && j != l && present[i][j] && present[j][l]);
        let chosen = if keep.is_some() {
            let all: Vec<usize> = witnesses.collect();
            all.iter()
                .copied()
                .find(|&j| kept(i, j) && kept(j, l))
                .or_else(|| all.first().copied())
        } else {
            witnesses.into_iter().next()
        };
        if let Some(j) = chosen {
            present[i][l] = false;
            pinned[i][j] = true;
            pinned[j][l] = true;
        }
    }
    Digraph::from_matrix(&present)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A communication edge that is not an interference edge.
    NotInInterference,
    /// An edge of the reduction that the communication graph lacks.
    MissingFromCommunication,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub edge: (usize, usize),
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct Assumption6Report {
    pub holds: bool,
    pub reduction: Vec<(usize, usize)>,
    pub violations: Vec<Violation>,
}

/// Checks `G_TR ⊆ G_C ⊆ G_I` for a transitive reduction `G_TR` of `G_I`.
pub fn check_assumption_6(g_c: &Digraph, g_i: &Digraph) -> Result<Assumption6Report> {
    if g_c.n != g_i.n {
        return Err(Error::VertexCountMismatch(g_c.n, g_i.n));
    }
    let tr = transitive_reduction_preferring(g_i, g_c);
    let mut violations = Vec::new();
    for (a, b) in g_c.edges() {
        if !g_i.has_edge(a, b) {
            violations.push(Violation {
                edge: (a, b),
                kind: ViolationKind::NotInInterference,
            });
        }
    }
    for (a, b) in tr.edges() {
        if !g_c.has_edge(a, b) {
            violations.push(Violation {
                edge: (a, b),
                kind: ViolationKind::MissingFromCommunication,
            });
        }
    }
    Ok(Assumption6Report {
        holds: violations.is_empty(),
        reduction: tr.edges(),
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma3Failure {
    pub player: usize,
    /// Interference in-neighbours that no communication in-neighbour can relay.
    pub unreachable: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma3Report {
    pub holds: bool,
    pub failing_players: Vec<Lemma3Failure>,
}

/// Executable certificate that every player can collect estimates of all its
/// interference in-neighbours from its communication in-neighbours:
/// `⋃_{j ∈ N_C^in(i)} (N_I^in(i) ∩ Ñ_I^in(j)) = N_I^in(i)` for every `i`.
pub fn check_lemma_3(g_c: &Digraph, g_i: &Digraph) -> Result<Lemma3Report> {
    if g_c.n != g_i.n {
        return Err(Error::VertexCountMismatch(g_c.n, g_i.n));
    }
    let mut failing = Vec::new();
    for i in 0..g_i.n {
        let target: BTreeSet<usize> = g_i.in0(i).iter().copied().collect();
        let mut covered = BTreeSet::new();
        for &j in g_c.in0(i) {
            for l in g_i.closed_in0(j) {
                if target.contains(&l) {
                    covered.insert(l);
                }
            }
        }
        if covered != target {
            failing.push(Lemma3Failure {
                player: i + 1,
                unreachable: target.difference(&covered).map(|&l| l + 1).collect(),
            });
        }
    }
    Ok(Lemma3Report {
        holds: failing.is_empty(),
        failing_players: failing,
    })
}

/// Random strongly connected digraph: a random Hamiltonian cycle plus every
/// other ordered pair independently with probability `p`.
pub fn random_strongly_connected<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Digraph {
    let mut perm: Vec<usize> = (1..=n).collect();
    perm.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|k| (perm[k], perm[(k + 1) % n])).collect();
    for a in 1..=n {
        for b in 1..=n {
            if a != b && rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    if n < 2 {
        return Digraph::empty(n);
    }
    Digraph::from_edges(n, edges).expect("generated edges are valid")
}

/// Random `(G_C, G_I)` pair satisfying `G_TR ⊆ G_C ⊆ G_I`: `G_I` strongly
/// connected, `G_C` its reduction plus each dropped edge with probability
/// `extra`.
pub fn random_interference_pair<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    extra: f64,
    rng: &mut R,
) -> (Digraph, Digraph) {
    let g_i = random_strongly_connected(n, p, rng);
    let tr = transitive_reduction(&g_i);
    let mut edges = tr.edges();
    for (a, b) in g_i.edges() {
        if !tr.has_edge(a, b) && rng.random_bool(extra) {
            edges.push((a, b));
        }
    }
    let g_c = Digraph::from_edges(n, edges).expect("subset of valid edges");
    (g_c, g_i)
}
