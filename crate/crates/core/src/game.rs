//! Game specification: per-player action intervals, local cost/gradient
//! evaluators over the interference graph, sampling diagnostics for the
//! standing assumptions, and the two built-in games.
//!
//! A cost evaluator for player `i` only ever sees the local vector `x^i`:
//! the actions of `Ñ_I^in(i)` (its interference in-neighbours plus itself)
//! in ascending player order. [`GameSpec::local_view`] builds that vector
//! from a full action profile.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::digraph::Digraph;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Parallelism};

/// Closed action set `[lo, hi]` of one player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ActionInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidGame(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(ActionInterval { lo, hi })
    }

    pub fn project(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Euclidean projection onto an interval.
pub fn project(interval: &ActionInterval, v: f64) -> f64 {
    interval.project(v)
}

/// Cost and own-action partial derivative of each player, evaluated on the
/// player's local action vector. `player` is a zero-based index.
///
/// Implementations must be pure: the engine evaluates them from several
/// threads at once.
pub trait CostModel: Send + Sync + fmt::Debug {
    fn cost(&self, player: usize, local: &[f64]) -> f64;
    fn grad(&self, player: usize, local: &[f64]) -> f64;
}

#[derive(Clone)]
pub struct GameSpec {
    name: String,
    intervals: Vec<ActionInterval>,
    interference: Digraph,
    neighborhoods: Vec<Vec<usize>>,
    own_pos: Vec<usize>,
    model: Arc<dyn CostModel>,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("name", &self.name)
            .field("n", &self.n())
            .field("interference_edges", &self.interference.edge_count())
            .field("model", &self.model)
            .finish()
    }
}

impl GameSpec {
    pub fn new(
        name: impl Into<String>,
        intervals: Vec<ActionInterval>,
        interference: Digraph,
        model: Arc<dyn CostModel>,
    ) -> Result<Self> {
        if intervals.len() != interference.n() {
            return Err(Error::LengthMismatch {
                expected: interference.n(),
                got: intervals.len(),
            });
        }
        let neighborhoods: Vec<Vec<usize>> = (0..interference.n())
            .map(|i| interference.closed_in0(i))
            .collect();
        let own_pos = neighborhoods
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                nb.binary_search(&i)
                    .expect("closed neighbourhood contains owner")
            })
            .collect();
        Ok(GameSpec {
            name: name.into(),
            intervals,
            interference,
            neighborhoods,
            own_pos,
            model,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[ActionInterval] {
        &self.intervals
    }

    pub fn interference(&self) -> &Digraph {
        &self.interference
    }

    pub fn has_complete_interference(&self) -> bool {
        self.interference.is_complete()
    }

    /// Zero-based members of `Ñ_I^in(i)`, ascending.
    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    /// Position of player `i`'s own action inside its local vector.
    pub fn own_position(&self, i: usize) -> usize {
        self.own_pos[i]
    }

    pub fn local_view(&self, i: usize, x: &[f64]) -> Vec<f64> {
        self.neighborhoods[i].iter().map(|&j| x[j]).collect()
    }

    pub fn cost(&self, i: usize, local: &[f64]) -> f64 {
        self.model.cost(i, local)
    }

    pub fn grad(&self, i: usize, local: &[f64]) -> f64 {
        self.model.grad(i, local)
    }

    pub fn cost_at(&self, i: usize, x: &[f64]) -> f64 {
        self.model.cost(i, &self.local_view(i, x))
    }

    pub fn grad_at(&self, i: usize, x: &[f64]) -> f64 {
        self.model.grad(i, &self.local_view(i, x))
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.intervals
            .iter()
            .map(ActionInterval::midpoint)
            .collect()
    }

    pub fn project_all(&self, x: &mut [f64]) {
        for (v, iv) in x.iter_mut().zip(&self.intervals) {
            *v = iv.project(*v);
        }
    }

    pub fn check_bounds(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        for (i, (&v, iv)) in x.iter().zip(&self.intervals).enumerate() {
            if !iv.contains(v) {
                return Err(Error::OutOfBounds {
                    player: i + 1,
                    value: v,
                    lo: iv.lo,
                    hi: iv.hi,
                });
            }
        }
        Ok(())
    }

    /// Game map `F(x) = [∇_{x_i} J_i(x^i)]_i`. Rejects points outside the
    /// action sets; projecting is the caller's job.
    pub fn pseudo_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_bounds(x)?;
        Ok(self.pseudo_gradient_unchecked(x))
    }

    pub(crate) fn pseudo_gradient_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.grad_at(i, x)).collect()
    }

    /// `max_i |x_i − T_i(x_i − F_i(x))|`, zero exactly at equilibria.
    pub fn natural_residual(&self, x: &[f64]) -> f64 {
        let f = self.pseudo_gradient_unchecked(x);
        x.iter()
            .zip(&f)
            .zip(&self.intervals)
            .map(|((&xi, &fi), iv)| (xi - iv.project(xi - fi)).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneViolation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `(F(x) − F(y))ᵀ(x − y)`, which should be strictly positive.
    pub inner_product: f64,
}

/// Sampling diagnostics for convexity/monotonicity/Lipschitz assumptions.
///
/// Every estimate here is a maximum over sampled difference quotients, i.e.
/// a lower bound on the true constant. A clean report is evidence, not a
/// proof.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub samples: usize,
    pub monotone_violation_count: usize,
    /// First few violating pairs.
    pub monotone_violations: Vec<MonotoneViolation>,
    /// Own-action Lipschitz estimates `σ_i`.
    pub sigma: Vec<f64>,
    /// Lipschitz estimates `L_i` in the other players' actions.
    pub lipschitz_others: Vec<f64>,
    /// `ρ_i = sqrt(2 L_i² + 2 σ_i²)`.
    pub rho: Vec<f64>,
    /// `ρ = sqrt(Σ ρ_i²)`.
    pub rho_total: f64,
    /// Largest sampled `|∇_{x_i} J_i|`.
    pub gradient_bound: f64,
    pub evaluation_failures: usize,
    pub note: &'static str,
}

impl AssumptionReport {
    pub fn is_compliant(&self) -> bool {
        self.monotone_violation_count == 0 && self.evaluation_failures == 0
    }
}

const KEPT_VIOLATIONS: usize = 16;

struct SampleStats {
    inner: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: Vec<f64>,
    lips: Vec<f64>,
    gmax: f64,
    failed: bool,
}

fn sample_in<R: Rng>(region: &[ActionInterval], rng: &mut R) -> Vec<f64> {
    region
        .iter()
        .map(|iv| {
            if iv.width() > 0.0 {
                rng.random_range(iv.lo..=iv.hi)
            } else {
                iv.lo
            }
        })
        .collect()
}

/// Samples `sample_count` point pairs from `region` (defaults to the action
/// sets) and estimates the assumption constants. Deterministic given `seed`
/// regardless of threading: sample `k` draws from its own ChaCha stream.
pub fn check_assumptions(
    game: &GameSpec,
    sample_count: usize,
    seed: u64,
    region: Option<&[ActionInterval]>,
    mode: Parallelism,
) -> Result<AssumptionReport> {
    if sample_count == 0 {
        return Err(Error::Input("sample_count must be at least 1".into()));
    }
    let region = region.unwrap_or(game.intervals());
    if region.len() != game.n() {
        return Err(Error::LengthMismatch {
            expected: game.n(),
            got: region.len(),
        });
    }
    let n = game.n();

    let stats = map_indexed(sample_count, mode, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let x = sample_in(region, &mut rng);
        let y = sample_in(region, &mut rng);
        let fx = game.pseudo_gradient_unchecked(&x);
        let fy = game.pseudo_gradient_unchecked(&y);
        let inner: f64 = (0..n).map(|i| (fx[i] - fy[i]) * (x[i] - y[i])).sum();
        let mut sigma = vec![0.0; n];
        let mut lips = vec![0.0; n];
        let mut failed = !inner.is_finite();
        for i in 0..n {
            let nb = game.neighborhood(i);
            let own = game.own_position(i);
            let lx = game.local_view(i, &x);
            // own action moved, others fixed at x
            let mut l_own = lx.clone();
            l_own[own] = y[i];
            let dx = (x[i] - y[i]).abs();
            if dx > 0.0 {
                sigma[i] = (game.grad(i, &lx) - game.grad(i, &l_own)).abs() / dx;
            }
            // others moved to y, own fixed at x
            let mut l_oth = game.local_view(i, &y);
            l_oth[own] = x[i];
            let du: f64 = nb
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (x[j] - y[j]).powi(2))
                .sum::<f64>()
                .sqrt();
            if du > 0.0 {
                lips[i] = (game.grad(i, &lx) - game.grad(i, &l_oth)).abs() / du;
            }
            failed |= !sigma[i].is_finite() || !lips[i].is_finite();
        }
        let gmax = fx.iter().chain(&fy).fold(0.0f64, |m, g| m.max(g.abs()));
        failed |= !gmax.is_finite();
        SampleStats {
            inner,
            x,
            y,
            sigma,
            lips,
            gmax,
            failed,
        }
    });

    let mut report = AssumptionReport {
        samples: sample_count,
        monotone_violation_count: 0,
        monotone_violations: Vec::new(),
        sigma: vec![0.0; n],
        lipschitz_others: vec![0.0; n],
        rho: vec![0.0; n],
        rho_total: 0.0,
        gradient_bound: 0.0,
        evaluation_failures: 0,
        note: "sampled lower bounds on the true constants; not a proof",
    };
    for s in stats {
        if s.failed {
            report.evaluation_failures += 1;
            continue;
        }
        if s.inner <= 0.0 && s.x != s.y {
            report.monotone_violation_count += 1;
            if report.monotone_violations.len() < KEPT_VIOLATIONS {
                report.monotone_violations.push(MonotoneViolation {
                    x: s.x,
                    y: s.y,
                    inner_product: s.inner,
                });
            }
        }
        for i in 0..n {
            report.sigma[i] = report.sigma[i].max(s.sigma[i]);
            report.lipschitz_others[i] = report.lipschitz_others[i].max(s.lips[i]);
        }
        report.gradient_bound = report.gradient_bound.max(s.gmax);
    }
    for i in 0..n {
        let (l, s) = (report.lipschitz_others[i], report.sigma[i]);
        report.rho[i] = (2.0 * l * l + 2.0 * s * s).sqrt();
    }
    report.rho_total = report.rho.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheck {
    pub points: usize,
    pub max_rel_err: f64,
    pub worst_player: usize,
}

pub const FD_STEP: f64 = 1e-5;

/// Compares analytic gradients with central differences of the cost at
/// random interior points (each interval shrunk by 5% per side). The error
/// measure is `|g − fd| / max(1, |g|)`.
pub fn gradient_check(game: &GameSpec, points: usize, seed: u64) -> GradientCheck {
    let region: Vec<ActionInterval> = game
        .intervals()
        .iter()
        .map(|iv| ActionInterval {
            lo: iv.lo + 0.05 * iv.width(),
            hi: iv.hi - 0.05 * iv.width(),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, 0usize);
    for _ in 0..points {
        let x = sample_in(&region, &mut rng);
        for i in 0..game.n() {
            let own = game.own_position(i);
            let local = game.local_view(i, &x);
            let g = game.grad(i, &local);
            let mut plus = local.clone();
            plus[own] += FD_STEP;
            let mut minus = local.clone();
            minus[own] -= FD_STEP;
            let fd = (game.cost(i, &plus) - game.cost(i, &minus)) / (2.0 * FD_STEP);
            let err = (g - fd).abs() / g.abs().max(1.0);
            if !(err <= worst.0) {
                worst = (err, i + 1);
            }
        }
    }
    GradientCheck {
        points,
        max_rel_err: worst.0,
        worst_player: worst.1,
    }
}

// ---------------------------------------------------------------------------
// Quadratic benchmark

/// `J_i(x) = (x_i − a_i)² + x_i · Σ_j C_ij x_j`.
#[derive(Debug)]
pub struct QuadraticModel {
    a: Vec<f64>,
    diag: Vec<f64>,
    /// per player: (local position, C_ij) for j in Ñ(i)
    terms: Vec<Vec<(usize, f64)>>,
    own_pos: Vec<usize>,
}

impl CostModel for QuadraticModel {
    fn cost(&self, i: usize, local: &[f64]) -> f64 {
        let xi = local[self.own_pos[i]];
        let coupled: f64 = self.terms[i].iter().map(|&(p, c)| c * local[p]).sum();
        (xi - self.a[i]).powi(2) + xi * coupled
    }

    fn grad(&self, i: usize, local: &[f64]) -> f64 {
        let xi = local[self.own_pos[i]];
        let coupled: f64 = self.terms[i].iter().map(|&(p, c)| c * local[p]).sum();
        2.0 * (xi - self.a[i]) + coupled + self.diag[i] * xi
    }
}

/// Jacobian of the quadratic game map: `2I + C + diag(C)`.
fn quadratic_jacobian(coupling: &[Vec<f64>]) -> DMatrix<f64> {
    let n = coupling.len();
    DMatrix::from_fn(n, n, |i, j| {
        let mut v = coupling[i][j];
        if i == j {
            v += 2.0 + coupling[i][i];
        }
        v
    })
}

/// Quadratic benchmark with a closed-form equilibrium. `interference`
/// defaults to the complete digraph; nonzero off-diagonal couplings must be
/// edges `j → i` of it. Rejects couplings whose game map is not strictly
/// monotone.
pub fn quadratic_game(
    a: &[f64],
    coupling: &[Vec<f64>],
    interval: ActionInterval,
    interference: Option<Digraph>,
) -> Result<GameSpec> {
    let n = a.len();
    if coupling.len() != n || coupling.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidGame(format!("coupling must be {n}×{n}")));
    }
    if a.iter()
        .chain(coupling.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidGame("non-finite parameter".into()));
    }
    let interference = interference.unwrap_or_else(|| Digraph::complete(n));
    if interference.n() != n {
        return Err(Error::VertexCountMismatch(interference.n(), n));
    }
    for (i, row) in coupling.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if i != j && c != 0.0 && !interference.has_edge(j + 1, i + 1) {
                return Err(Error::InvalidGame(format!(
                    "coupling C[{}][{}] is nonzero but {} does not interfere with {}",
                    i + 1,
                    j + 1,
                    j + 1,
                    i + 1
                )));
            }
        }
    }
    let jac = quadratic_jacobian(coupling);
    let sym = (&jac + jac.transpose()) * 0.5;
    if sym.cholesky().is_none() {
        return Err(Error::InvalidGame(
            "game map is not strictly monotone: symmetric part of 2I + C + diag(C) is not positive definite".into(),
        ));
    }
    let mut terms = Vec::with_capacity(n);
    let mut own_pos = Vec::with_capacity(n);
    for i in 0..n {
        let nb = interference.closed_in0(i);
        own_pos.push(nb.binary_search(&i).unwrap());
        terms.push(
            nb.iter()
                .enumerate()
                .filter(|&(_, &j)| coupling[i][j] != 0.0)
                .map(|(p, &j)| (p, coupling[i][j]))
                .collect(),
        );
    }
    let model = QuadraticModel {
        a: a.to_vec(),
        diag: (0..n).map(|i| coupling[i][i]).collect(),
        terms,
        own_pos,
    };
    GameSpec::new(
        "quadratic",
        vec![interval; n],
        interference,
        Arc::new(model),
    )
}

/// Unconstrained stationary point `(2I + C + diag C)⁻¹ 2a`; equals the NE
/// whenever it lies inside the action sets.
pub fn quadratic_unconstrained_ne(a: &[f64], coupling: &[Vec<f64>]) -> Result<Vec<f64>> {
    let jac = quadratic_jacobian(coupling);
    let rhs = nalgebra::DVector::from_iterator(a.len(), a.iter().map(|v| 2.0 * v));
    jac.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::InvalidGame("singular quadratic Jacobian".into()))
}

// ---------------------------------------------------------------------------
// Social-media posting game

/// Feed sums below this are floored inside `1/sqrt(·)`.
pub const FEED_FLOOR: f64 = 1e-9;

/// Reference equilibrium of the five-user example, rounded to two decimals.
pub const REFERENCE_SOCIAL_NE: [f64; 5] = [0.0, 0.0, 0.42, 2.24, 0.14];

#[derive(Debug, Clone)]
pub struct SocialParams {
    /// Per-user production cost slope `h_i`.
    pub h: Vec<f64>,
    /// Per-user utility scale `L_i`.
    pub l: Vec<f64>,
    /// Interest weights `q_ji` keyed by the 1-based edge `(j, i)`.
    pub q: BTreeMap<(usize, usize), f64>,
    /// Weight for edges absent from `q`.
    pub default_q: f64,
    pub x_max: f64,
}

impl SocialParams {
    /// Five-user parameters: `h_i = 2`, `L_i = 1.5`, `q_41 = q_45 = 1.75`,
    /// `q_32 = q_43 = 2`, all other weights 1, actions in `[0, 10]`.
    pub fn reference() -> Self {
        let q = [((4, 1), 1.75), ((4, 5), 1.75), ((3, 2), 2.0), ((4, 3), 2.0)]
            .into_iter()
            .collect();
        SocialParams {
            h: vec![2.0; 5],
            l: vec![1.5; 5],
            q,
            default_q: 1.0,
            x_max: 10.0,
        }
    }
}

/// Five-user follower graph (`i → j`: `j` follows `i`). User 4 is followed
/// by 1, 3 and 5, user 3 by 2 and 5, users 1, 2 and 5 by one user each.
pub fn social_follower_graph() -> Digraph {
    Digraph::from_edges(
        5,
        [
            (4, 1),
            (4, 3),
            (4, 5),
            (3, 2),
            (3, 5),
            (1, 2),
            (2, 3),
            (5, 4),
        ],
    )
    .expect("static edges")
}

/// Communication graph for gossip on the five-user game: the follower graph
/// plus `3 → 4`. The follower graph alone cannot relay player 2's action to
/// player 4, who is interfered by 2 through their common follower 3.
pub fn social_communication_graph() -> Digraph {
    let mut edges = social_follower_graph().edges();
    edges.push((3, 4));
    Digraph::from_edges(5, edges).expect("static edges")
}

#[derive(Debug, Clone)]
struct Follower {
    l: f64,
    /// weight of the owner's own action in this follower's feed
    q_own: f64,
    /// (local position, q) for every feed member, owner included
    feed: Vec<(usize, f64)>,
}

/// `J_i = h_i x_i − L_i sqrt(Σ_{j∈N_C^in(i)} q_ji x_j) − f_i^2`, where `f_i^2`
/// sums, over each follower `l`, the drop in `L_l sqrt(feed_l)` if `i`
/// stopped posting.
#[derive(Debug)]
pub struct SocialModel {
    h: Vec<f64>,
    l: Vec<f64>,
    own_pos: Vec<usize>,
    own_feed: Vec<Vec<(usize, f64)>>,
    followers: Vec<Vec<Follower>>,
}

impl SocialModel {
    /// Information utility `f_i^1` on the local vector.
    pub fn feed_utility(&self, i: usize, local: &[f64]) -> f64 {
        self.l[i] * weighted(&self.own_feed[i], local, None).max(0.0).sqrt()
    }

    /// Attention utility `f_i^2` on the local vector.
    pub fn attention_utility(&self, i: usize, local: &[f64]) -> f64 {
        let own = self.own_pos[i];
        self.followers[i]
            .iter()
            .map(|f| {
                let with = weighted(&f.feed, local, None).max(0.0);
                let without = weighted(&f.feed, local, Some(own)).max(0.0);
                f.l * (with.sqrt() - without.sqrt())
            })
            .sum()
    }
}

fn weighted(terms: &[(usize, f64)], local: &[f64], skip: Option<usize>) -> f64 {
    terms
        .iter()
        .filter(|&&(p, _)| Some(p) != skip)
        .map(|&(p, q)| q * local[p])
        .sum()
}

impl CostModel for SocialModel {
    fn cost(&self, i: usize, local: &[f64]) -> f64 {
        self.h[i] * local[self.own_pos[i]]
            - self.feed_utility(i, local)
            - self.attention_utility(i, local)
    }

    fn grad(&self, i: usize, local: &[f64]) -> f64 {
        let pull: f64 = self.followers[i]
            .iter()
            .map(|f| {
                let s = weighted(&f.feed, local, None).max(FEED_FLOOR);
                f.l * f.q_own / (2.0 * s.sqrt())
            })
            .sum();
        self.h[i] - pull
    }
}

/// Interference graph induced by a follower graph: user `i` is affected by
/// the users it follows and by everyone its followers follow.
pub fn social_interference(g_c: &Digraph) -> Digraph {
    let n = g_c.n();
    let mut edges = Vec::new();
    for i in 0..n {
        let mut src: Vec<usize> = g_c.in0(i).to_vec();
        for &l in g_c.out0(i) {
            src.extend_from_slice(g_c.in0(l));
        }
        for j in src {
            if j != i {
                edges.push((j + 1, i + 1));
            }
        }
    }
    Digraph::from_edges(n, edges).expect("derived from valid graph")
}

/// Builds the social-media game over follower graph `g_c` and returns it with
/// the induced interference graph.
pub fn social_media_game(g_c: &Digraph, params: &SocialParams) -> Result<(GameSpec, Digraph)> {
    let n = g_c.n();
    if !g_c.is_strongly_connected() {
        return Err(Error::NotStronglyConnected("follower graph".into()));
    }
    if params.h.len() != n || params.l.len() != n {
        return Err(Error::InvalidGame(format!("h and L must have {n} entries")));
    }
    if params
        .h
        .iter()
        .chain(&params.l)
        .any(|&v| !(v > 0.0 && v.is_finite()))
    {
        return Err(Error::InvalidGame("h_i and L_i must be positive".into()));
    }
    if !(params.default_q > 0.0) || !(params.x_max > 0.0 && params.x_max.is_finite()) {
        return Err(Error::InvalidGame(
            "default q and x_max must be positive".into(),
        ));
    }
    for (&(j, i), &q) in &params.q {
        if !g_c.has_edge(j, i) {
            return Err(Error::InvalidGame(format!(
                "q weight given for non-edge {j}->{i}"
            )));
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::InvalidGame(format!("q_{j}{i} must be positive")));
        }
    }
    let g_i = social_interference(g_c);
    let model = build_social_model(g_c, &g_i, params);
    let interval = ActionInterval::new(0.0, params.x_max)?;
    let game = GameSpec::new("social", vec![interval; n], g_i.clone(), Arc::new(model))?;
    Ok((game, g_i))
}

/// Same as [`social_media_game`], also returning the concrete model so the
/// two utility terms can be inspected separately.
pub fn social_model(g_c: &Digraph, params: &SocialParams) -> Result<(GameSpec, SocialModel)> {
    let (game, g_i) = social_media_game(g_c, params)?;
    Ok((game, build_social_model(g_c, &g_i, params)))
}

fn build_social_model(g_c: &Digraph, g_i: &Digraph, params: &SocialParams) -> SocialModel {
    let n = g_c.n();
    let q = |j: usize, i: usize| {
        params
            .q
            .get(&(j + 1, i + 1))
            .copied()
            .unwrap_or(params.default_q)
    };
    let mut m = SocialModel {
        h: params.h.clone(),
        l: params.l.clone(),
        own_pos: Vec::with_capacity(n),
        own_feed: Vec::with_capacity(n),
        followers: Vec::with_capacity(n),
    };
    for i in 0..n {
        let nb = g_i.closed_in0(i);
        let pos = |j: usize| nb.binary_search(&j).expect("feed member interferes");
        m.own_pos.push(pos(i));
        m.own_feed
            .push(g_c.in0(i).iter().map(|&j| (pos(j), q(j, i))).collect());
        m.followers.push(
            g_c.out0(i)
                .iter()
                .map(|&l| Follower {
                    l: params.l[l],
                    q_own: q(i, l),
                    feed: g_c.in0(l).iter().map(|&j| (pos(j), q(j, l))).collect(),
                })
                .collect(),
        );
    }
    m
}
