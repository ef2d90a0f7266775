//! Exact spectral checks of the gossip contraction.
//!
//! The expectation over gossip events is taken by enumerating every event
//! with its probability `p(i,j) = 1/(N·|N_C^in(i)|)`. Per-event Gram terms are
//! computed through [`map_slice`] and summed in event order, so sequential and
//! parallel runs give bit-identical matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::digraph::{check_assumption_6, Digraph};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Parallelism};
use crate::gossip::{weight_matrix_complete, weight_matrix_partial, EventSampler, GossipEvent};
use crate::layout::EstimateLayout;

/// Largest `N` for the dense complete-interference check (`N² ≤ 144`).
pub const MAX_EXACT_PLAYERS: usize = 12;
/// Largest stacked dimension for the dense partial-interference check.
pub const MAX_EXACT_SLOTS: usize = 150;

#[derive(Debug, Clone, Serialize)]
pub struct EventDistribution {
    n: usize,
    events: Vec<(GossipEvent, f64)>,
}

impl EventDistribution {
    /// Every `(i, j)` with `j ∈ N_C^in(i)`, ordered by `i` then `j`.
    pub fn new(g_c: &Digraph) -> Result<Self> {
        let n = g_c.n();
        if n < 2 {
            return Err(Error::Input("gossip needs at least two players".into()));
        }
        let mut events = Vec::new();
        for i in 0..n {
            let ins = g_c.in0(i);
            if ins.is_empty() {
                return Err(Error::NotStronglyConnected(format!(
                    "player {} has no communication in-neighbour",
                    i + 1
                )));
            }
            let p = 1.0 / (n as f64 * ins.len() as f64);
            events.extend(ins.iter().map(|&j| (GossipEvent::new(i + 1, j + 1), p)));
        }
        Ok(EventDistribution { n, events })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn events(&self) -> &[(GossipEvent, f64)] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.events.iter().map(|e| e.1).sum()
    }

    fn index_of(&self, ev: GossipEvent) -> Option<usize> {
        self.events.iter().position(|e| e.0 == ev)
    }
}

fn require_connected(g: &Digraph, what: &str) -> Result<()> {
    if g.is_strongly_connected() {
        Ok(())
    } else {
        Err(Error::NotStronglyConnected(what.into()))
    }
}

fn weighted_sum(terms: Vec<DMatrix<f64>>, dist: &EventDistribution, dim: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(dim, dim);
    for (t, (_, p)) in terms.iter().zip(dist.events()) {
        acc += t * *p;
    }
    acc
}

/// `Q = (W − 1 1ᵀ W / N) ⊗ I_N` for one event.
pub fn q_complete(n: usize, ev: GossipEvent) -> Result<DMatrix<f64>> {
    let w = weight_matrix_complete(n, ev)?;
    let avg = DMatrix::from_element(n, n, 1.0 / n as f64) * &w;
    Ok((w - avg).kronecker(&DMatrix::identity(n, n)))
}

/// `Q^I = (I − H diag(1./m^out) Hᵀ) W^I` for one event.
pub fn q_partial(layout: &EstimateLayout, ev: GossipEvent) -> Result<DMatrix<f64>> {
    Ok(consensus_projector(layout) * weight_matrix_partial(layout, ev)?)
}

/// `I − H diag(1./m^out) Hᵀ`: the map `x̃ ↦ x̃ − Z`.
pub fn consensus_projector(layout: &EstimateLayout) -> DMatrix<f64> {
    let m = layout.m();
    let mut p = DMatrix::identity(m, m);
    for j in 0..layout.n() {
        let col = layout.column(j);
        let w = 1.0 / col.len() as f64;
        for &a in col {
            for &b in col {
                p[(a, b)] -= w;
            }
        }
    }
    p
}

/// `E[QᵀQ]` over the event distribution of `g_c`; needs `g_c` strongly
/// connected.
pub fn expected_qtq_complete(g_c: &Digraph, mode: Parallelism) -> Result<DMatrix<f64>> {
    require_connected(g_c, "communication graph")?;
    expected_qtq_complete_unchecked(g_c, mode)
}

/// As [`expected_qtq_complete`] but only requires every player to have an
/// in-neighbour. Used for negative controls.
pub fn expected_qtq_complete_unchecked(g_c: &Digraph, mode: Parallelism) -> Result<DMatrix<f64>> {
    let n = g_c.n();
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::TooLarge(format!(
            "{n} players > {MAX_EXACT_PLAYERS}"
        )));
    }
    let dist = EventDistribution::new(g_c)?;
    let terms: Vec<Result<DMatrix<f64>>> = map_slice(dist.events(), mode, |&(ev, _)| {
        let q = q_complete(n, ev)?;
        Ok(q.transpose() * q)
    });
    let terms = terms.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(weighted_sum(terms, &dist, n * n))
}

fn check_layout(layout: &EstimateLayout, g_i: &Digraph) -> Result<()> {
    if layout.n() != g_i.n() {
        return Err(Error::VertexCountMismatch(layout.n(), g_i.n()));
    }
    for i in 0..g_i.n() {
        if layout.neighborhood(i) != g_i.closed_in0(i).as_slice() {
            return Err(Error::Input(format!(
                "layout neighbourhood of player {} does not match the interference graph",
                i + 1
            )));
        }
    }
    Ok(())
}

/// `E[Q^IᵀQ^I]`; needs both graphs strongly connected and the reduction
/// condition between them.
pub fn expected_qtq_partial(
    layout: &EstimateLayout,
    g_c: &Digraph,
    g_i: &Digraph,
    mode: Parallelism,
) -> Result<DMatrix<f64>> {
    check_layout(layout, g_i)?;
    require_connected(g_c, "communication graph")?;
    require_connected(g_i, "interference graph")?;
    let a6 = check_assumption_6(g_c, g_i)?;
    if !a6.holds {
        return Err(Error::AssumptionGate(format!(
            "{} reduction violations",
            a6.violations.len()
        )));
    }
    expected_qtq_partial_unchecked(layout, g_c, mode)
}

pub fn expected_qtq_partial_unchecked(
    layout: &EstimateLayout,
    g_c: &Digraph,
    mode: Parallelism,
) -> Result<DMatrix<f64>> {
    if layout.n() != g_c.n() {
        return Err(Error::VertexCountMismatch(layout.n(), g_c.n()));
    }
    if layout.m() > MAX_EXACT_SLOTS {
        return Err(Error::TooLarge(format!(
            "{} slots > {MAX_EXACT_SLOTS}",
            layout.m()
        )));
    }
    let dist = EventDistribution::new(g_c)?;
    let proj = consensus_projector(layout);
    let terms: Vec<Result<DMatrix<f64>>> = map_slice(dist.events(), mode, |&(ev, _)| {
        let q = &proj * weight_matrix_partial(layout, ev)?;
        Ok(q.transpose() * q)
    });
    let terms = terms.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(weighted_sum(terms, &dist, layout.m()))
}

/// Eigenvalue extremes of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spectrum {
    pub max: f64,
    pub min: f64,
}

pub fn symmetric_spectrum(a: &DMatrix<f64>) -> Spectrum {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Spectrum { max, min }
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax()
}

/// Power iteration for the largest eigenvalue of a symmetric PSD matrix.
/// Returns `(λ, ‖A v − λ v‖)`.
pub fn power_iteration(a: &DMatrix<f64>, tol: f64, max_iters: usize) -> (f64, f64) {
    let n = a.nrows();
    // deterministic start with no symmetry that could hide an eigenvector
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    v.normalize_mut();
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let av = a * &v;
        lambda = v.dot(&av);
        residual = (&av - &v * lambda).norm();
        if residual <= tol * lambda.abs().max(1.0) {
            break;
        }
        let norm = av.norm();
        if norm == 0.0 {
            break;
        }
        v = av / norm;
    }
    (lambda, residual)
}

/// `γ = λmax E[QᵀQ]`.
pub fn gamma_complete(g_c: &Digraph, mode: Parallelism) -> Result<f64> {
    Ok(symmetric_spectrum(&expected_qtq_complete(g_c, mode)?).max)
}

/// `γ^I = λmax E[Q^IᵀQ^I]`.
pub fn gamma_partial(
    layout: &EstimateLayout,
    g_c: &Digraph,
    g_i: &Digraph,
    mode: Parallelism,
) -> Result<f64> {
    Ok(symmetric_spectrum(&expected_qtq_partial(layout, g_c, g_i, mode)?).max)
}

/// `max_ev max|W^I(ev) H − H|` over every event of `g_c`.
pub fn check_lemma_4(layout: &EstimateLayout, g_c: &Digraph) -> Result<f64> {
    check_lemma_4_with(layout, g_c, &layout.h_dense(true))
}

/// Same residual against an arbitrary `H` (for negative controls).
pub fn check_lemma_4_with(layout: &EstimateLayout, g_c: &Digraph, h: &DMatrix<f64>) -> Result<f64> {
    if layout.n() != g_c.n() {
        return Err(Error::VertexCountMismatch(layout.n(), g_c.n()));
    }
    if h.nrows() != layout.m() {
        return Err(Error::LengthMismatch {
            expected: layout.m(),
            got: h.nrows(),
        });
    }
    let dist = EventDistribution::new(g_c)?;
    let mut worst = 0.0f64;
    for &(ev, _) in dist.events() {
        let w = weight_matrix_partial(layout, ev)?;
        worst = worst.max((w * h - h).amax());
    }
    Ok(worst)
}

/// Entrywise Monte-Carlo estimate of an event expectation.
#[derive(Debug, Clone)]
pub struct MonteCarlo {
    pub samples: usize,
    pub mean: DMatrix<f64>,
    pub std_err: DMatrix<f64>,
}

impl MonteCarlo {
    /// Largest `|mean − exact| / (std_err + floor)` over entries.
    pub fn max_z(&self, exact: &DMatrix<f64>, floor: f64) -> f64 {
        self.mean
            .iter()
            .zip(exact.iter())
            .zip(self.std_err.iter())
            .map(|((m, e), s)| (m - e).abs() / (s + floor))
            .fold(0.0, f64::max)
    }
}

/// Samples `samples` events and averages `gram(ev)`. Events are tallied first,
/// so the cost is one Gram matrix per distinct event.
pub fn monte_carlo<F>(g_c: &Digraph, samples: usize, seed: u64, gram: F) -> Result<MonteCarlo>
where
    F: Fn(GossipEvent) -> Result<DMatrix<f64>>,
{
    if samples < 2 {
        return Err(Error::Input("need at least two samples".into()));
    }
    let dist = EventDistribution::new(g_c)?;
    let sampler = EventSampler::new(g_c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; dist.len()];
    for _ in 0..samples {
        let ev = sampler.sample(&mut rng);
        counts[dist
            .index_of(ev)
            .expect("sampled event is in the distribution")] += 1;
    }
    let mut sum: Option<DMatrix<f64>> = None;
    let mut sum_sq: Option<DMatrix<f64>> = None;
    for (&(ev, _), &c) in dist.events().iter().zip(&counts) {
        if c == 0 {
            continue;
        }
        let g = gram(ev)?;
        let sq = g.component_mul(&g);
        let c = c as f64;
        sum = Some(match sum {
            Some(s) => s + &g * c,
            None => &g * c,
        });
        sum_sq = Some(match sum_sq {
            Some(s) => s + sq * c,
            None => sq * c,
        });
    }
    let s = samples as f64;
    let mean = sum.expect("at least one sample") / s;
    let second = sum_sq.expect("at least one sample") / s;
    let std_err =
        (second - mean.component_mul(&mean)).map(|v| (v.max(0.0) * s / (s - 1.0) / s).sqrt());
    Ok(MonteCarlo {
        samples,
        mean,
        std_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMethod {
    SymmetricEigen,
    PowerIteration,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    /// `complete` or `partial`
    pub setting: String,
    pub gamma: f64,
    pub margin: f64,
    pub event_count: usize,
    /// `None` for complete interference, where `W^I H = H` is not needed.
    pub lemma4_residual: Option<f64>,
    pub dimension: usize,
    pub min_eigenvalue: Option<f64>,
    pub max_asymmetry: f64,
    pub method: SpectralMethod,
    /// Power-iteration residual `‖A v − γ v‖` when that method is used.
    pub eigen_residual: Option<f64>,
}

/// Spectral summary for the pair `(g_c, g_i)`. Complete `g_i` uses the
/// `N² × N²` form, anything else the stacked `m × m` form. Above the size
/// guardrail the call fails unless `allow_large`, which switches to power
/// iteration.
pub fn spectral_report(
    g_c: &Digraph,
    g_i: &Digraph,
    allow_large: bool,
    mode: Parallelism,
) -> Result<SpectralReport> {
    if g_c.n() != g_i.n() {
        return Err(Error::VertexCountMismatch(g_c.n(), g_i.n()));
    }
    let n = g_c.n();
    let event_count = EventDistribution::new(g_c)?.len();
    let complete = g_i.is_complete();
    let (matrix, lemma4, large) = if complete {
        require_connected(g_c, "communication graph")?;
        let large = n > MAX_EXACT_PLAYERS;
        if large && !allow_large {
            return Err(Error::TooLarge(format!(
                "{n} players > {MAX_EXACT_PLAYERS}"
            )));
        }
        let m = if large {
            large_complete(g_c, mode)?
        } else {
            expected_qtq_complete(g_c, mode)?
        };
        (m, None, large)
    } else {
        let layout = EstimateLayout::build(g_i)?;
        let large = layout.m() > MAX_EXACT_SLOTS;
        if large && !allow_large {
            return Err(Error::TooLarge(format!(
                "{} slots > {MAX_EXACT_SLOTS}",
                layout.m()
            )));
        }
        let residual = check_lemma_4(&layout, g_c)?;
        let m = if large {
            require_connected(g_c, "communication graph")?;
            large_partial(&layout, g_c, mode)?
        } else {
            expected_qtq_partial(&layout, g_c, g_i, mode)?
        };
        (m, Some(residual), large)
    };
    let (gamma, min_eigenvalue, method, eigen_residual) = if large {
        let (l, r) = power_iteration(&matrix, 1e-10, 200_000);
        (l, None, SpectralMethod::PowerIteration, Some(r))
    } else {
        let s = symmetric_spectrum(&matrix);
        (s.max, Some(s.min), SpectralMethod::SymmetricEigen, None)
    };
    Ok(SpectralReport {
        setting: if complete { "complete" } else { "partial" }.into(),
        gamma,
        margin: 1.0 - gamma,
        event_count,
        lemma4_residual: lemma4,
        dimension: matrix.nrows(),
        min_eigenvalue,
        max_asymmetry: max_asymmetry(&matrix),
        method,
        eigen_residual,
    })
}

// `QᵀQ = (MᵀM) ⊗ I_N`, so above the guardrail the `N × N` factor carries the
// whole spectrum.
fn large_complete(g_c: &Digraph, mode: Parallelism) -> Result<DMatrix<f64>> {
    let n = g_c.n();
    let dist = EventDistribution::new(g_c)?;
    let terms: Vec<Result<DMatrix<f64>>> = map_slice(dist.events(), mode, |&(ev, _)| {
        let w = weight_matrix_complete(n, ev)?;
        let m = &w - DMatrix::from_element(n, n, 1.0 / n as f64) * &w;
        Ok(m.transpose() * m)
    });
    let terms = terms.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(weighted_sum(terms, &dist, n))
}

fn large_partial(
    layout: &EstimateLayout,
    g_c: &Digraph,
    mode: Parallelism,
) -> Result<DMatrix<f64>> {
    let dist = EventDistribution::new(g_c)?;
    let proj = consensus_projector(layout);
    let terms: Vec<Result<DMatrix<f64>>> = map_slice(dist.events(), mode, |&(ev, _)| {
        let q = &proj * weight_matrix_partial(layout, ev)?;
        Ok(q.transpose() * q)
    });
    let terms = terms.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(weighted_sum(terms, &dist, layout.m()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_sums_to_one() {
        let g = Digraph::from_edges(4, [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3), (2, 4)]).unwrap();
        let d = EventDistribution::new(&g).unwrap();
        assert_eq!(d.len(), 6);
        assert!((d.total_probability() - 1.0).abs() < 1e-12);
        let ring = EventDistribution::new(&Digraph::ring(3)).unwrap();
        let p21 = ring
            .events()
            .iter()
            .find(|e| e.0 == GossipEvent::new(2, 1))
            .unwrap()
            .1;
        assert_eq!(p21, 1.0 / 3.0);
    }

    #[test]
    fn two_player_gamma_below_one() {
        let e = expected_qtq_complete(&Digraph::complete(2), Parallelism::Sequential).unwrap();
        assert!(max_asymmetry(&e) < 1e-12);
        let s = symmetric_spectrum(&e);
        assert!(s.max < 1.0 && s.max > 0.0);
    }

    #[test]
    fn disconnected_needs_override_and_fails_contraction() {
        let g = Digraph::from_edges(4, [(1, 2), (2, 1), (3, 4), (4, 3)]).unwrap();
        assert!(expected_qtq_complete(&g, Parallelism::Sequential).is_err());
        let e = expected_qtq_complete_unchecked(&g, Parallelism::Sequential).unwrap();
        // cross-component disagreement (1,1,-1,-1) ⊗ y is left untouched
        let y = [0.3, -1.2, 0.7, 2.0];
        let s = [1.0, 1.0, -1.0, -1.0];
        let x = nalgebra::DVector::from_fn(16, |k, _| s[k / 4] * y[k % 4]);
        let q = x.dot(&(&e * &x)) / x.dot(&x);
        assert!((q - 1.0).abs() < 1e-12);
        assert!(symmetric_spectrum(&e).max >= 1.0 - 1e-9);
    }

    #[test]
    fn partial_equals_complete_on_complete_interference() {
        for n in 2..=3 {
            let g_c = Digraph::ring(n);
            let g_i = Digraph::complete(n);
            let layout = EstimateLayout::build(&g_i).unwrap();
            for i in 1..=n {
                for &j in &g_c.in_neighbors(i).unwrap() {
                    let ev = GossipEvent::new(i, j);
                    let diff =
                        (q_partial(&layout, ev).unwrap() - q_complete(n, ev).unwrap()).amax();
                    assert!(diff < 1e-15);
                }
            }
            let gp = gamma_partial(&layout, &g_c, &g_i, Parallelism::Sequential).unwrap();
            let gc = gamma_complete(&g_c, Parallelism::Sequential).unwrap();
            assert!((gp - gc).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_mapping_invariance_and_negative_control() {
        let g_i = Digraph::complete(3);
        let layout = EstimateLayout::build(&g_i).unwrap();
        assert_eq!(check_lemma_4(&layout, &Digraph::ring(3)).unwrap(), 0.0);
        let r = check_lemma_4_with(&layout, &Digraph::ring(3), &layout.h_dense(false)).unwrap();
        assert!(r > 0.0);
    }

    #[test]
    fn modes_are_bit_identical() {
        let g = Digraph::from_edges(4, [(1, 2), (2, 3), (3, 4), (4, 1), (3, 1)]).unwrap();
        let a = expected_qtq_complete(&g, Parallelism::Sequential).unwrap();
        let b = expected_qtq_complete(&g, Parallelism::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_iteration_agrees_with_eigensolver() {
        let e = expected_qtq_complete(&Digraph::ring(4), Parallelism::Sequential).unwrap();
        let (l, r) = power_iteration(&e, 1e-12, 1_000_000);
        let s = symmetric_spectrum(&e).max;
        assert!((l - s).abs() < 1e-8, "{l} vs {s}, residual {r}");
    }

    #[test]
    fn report_for_ring() {
        let r = spectral_report(
            &Digraph::ring(5),
            &Digraph::complete(5),
            false,
            Parallelism::Sequential,
        )
        .unwrap();
        assert_eq!(r.event_count, 5);
        assert_eq!(r.dimension, 25);
        assert!(r.gamma < 1.0 && r.margin > 1e-6);
        assert!(r.lemma4_residual.is_none());
    }
}
