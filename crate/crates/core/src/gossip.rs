//! Asynchronous gossip NE seeking.
//!
//! Each iteration one player `i_k` wakes up uniformly at random, pulls the
//! temporary estimates of one uniformly chosen communication in-neighbour
//! `j_k`, averages the shared entries, takes one projected-gradient step on
//! its own action and writes that action back into its own slot. Only player
//! `i_k`'s block of the stacked estimate vector ever changes.
//!
//! [`step_algorithm1`] handles complete interference with an `N × N` estimate
//! table. [`step_algorithm2`] handles an arbitrary interference graph through
//! an [`EstimateLayout`]. On complete interference the two produce
//! bit-identical trajectories.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digraph::{check_assumption_6, Digraph};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Parallelism};
use crate::game::GameSpec;
use crate::layout::EstimateLayout;

/// One gossip exchange: `active` pulls from `neighbor` (1-based players).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct GossipEvent {
    pub active: usize,
    pub neighbor: usize,
}

impl GossipEvent {
    pub fn new(active: usize, neighbor: usize) -> Self {
        GossipEvent { active, neighbor }
    }

    fn validate(&self, n: usize) -> Result<(usize, usize)> {
        let err = |reason| Error::InvalidEvent {
            active: self.active,
            neighbor: self.neighbor,
            reason,
        };
        if self.active == 0 || self.neighbor == 0 || self.active > n || self.neighbor > n {
            return Err(err("player out of range"));
        }
        if self.active == self.neighbor {
            return Err(err("a player cannot gossip with itself"));
        }
        Ok((self.active - 1, self.neighbor - 1))
    }
}

/// Uniform player, then uniform communication in-neighbour.
#[derive(Debug, Clone)]
pub struct EventSampler {
    in_lists: Vec<Vec<usize>>,
}

impl EventSampler {
    pub fn new(g_c: &Digraph) -> Result<Self> {
        if g_c.n() < 2 {
            return Err(Error::Input("gossip needs at least two players".into()));
        }
        let in_lists: Vec<Vec<usize>> = (0..g_c.n()).map(|i| g_c.in0(i).to_vec()).collect();
        if let Some(i) = in_lists.iter().position(Vec::is_empty) {
            return Err(Error::NotStronglyConnected(format!(
                "player {} has no communication in-neighbour",
                i + 1
            )));
        }
        Ok(EventSampler { in_lists })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GossipEvent {
        let i = rng.random_range(0..self.in_lists.len());
        let list = &self.in_lists[i];
        let j = if list.len() == 1 {
            list[0]
        } else {
            list[rng.random_range(0..list.len())]
        };
        GossipEvent::new(i + 1, j + 1)
    }
}

pub fn sample_event<R: Rng + ?Sized>(g_c: &Digraph, rng: &mut R) -> Result<GossipEvent> {
    Ok(EventSampler::new(g_c)?.sample(rng))
}

/// `W = I − e_i (e_i − e_j)ᵀ / 2`: row `i` becomes `(e_i + e_j)/2`.
pub fn weight_matrix_complete(n: usize, ev: GossipEvent) -> Result<DMatrix<f64>> {
    let (i, j) = ev.validate(n)?;
    let mut w = DMatrix::identity(n, n);
    w[(i, i)] = 0.5;
    w[(i, j)] = 0.5;
    Ok(w)
}

/// Members of `Ñ(i) ∩ Ñ(j)` (zero-based) with their slots in `i`'s and `j`'s
/// blocks.
pub(crate) fn shared_slots(
    layout: &EstimateLayout,
    i: usize,
    j: usize,
) -> Vec<(usize, usize, usize)> {
    let (a, b) = (layout.neighborhood(i), layout.neighborhood(j));
    let (oa, ob) = (layout.offset(i), layout.offset(j));
    let mut out = Vec::new();
    let (mut p, mut q) = (0, 0);
    while p < a.len() && q < b.len() {
        match a[p].cmp(&b[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                out.push((a[p], oa + p, ob + q));
                p += 1;
                q += 1;
            }
        }
    }
    out
}

/// `W^I = I_m − Σ_{l ∈ Ñ(i)∩Ñ(j)} e_{s_il}(e_{s_il} − e_{s_jl})ᵀ / 2`.
pub fn weight_matrix_partial(layout: &EstimateLayout, ev: GossipEvent) -> Result<DMatrix<f64>> {
    let (i, j) = ev.validate(layout.n())?;
    let m = layout.m();
    let mut w = DMatrix::identity(m, m);
    for (_, si, sj) in shared_slots(layout, i, j) {
        w[(si, si)] = 0.5;
        w[(si, sj)] = 0.5;
    }
    Ok(w)
}

/// Per-player step size as a function of the update count `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// `α = 1/ν`.
    #[default]
    InverseCount,
    /// `α = scale / ν^exponent`; diminishing and square-summable for
    /// exponents in `(1/2, 1]`.
    Power {
        scale: f64,
        exponent: f64,
    },
    Constant {
        alpha: f64,
    },
}

impl StepRule {
    pub fn alpha(&self, nu: u64) -> f64 {
        match *self {
            StepRule::InverseCount => 1.0 / nu as f64,
            StepRule::Power { scale, exponent } => scale / (nu as f64).powf(exponent),
            StepRule::Constant { alpha } => alpha,
        }
    }
}

/// Starting temporary estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialEstimates {
    /// Every slot at the midpoint of its estimated player's interval.
    #[default]
    Midpoint,
    /// Every slot estimating player `j` starts at `values[j]`.
    Profile(Vec<f64>),
    /// Full stacked vector.
    Stacked(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub k: u64,
    pub x_tilde: Vec<f64>,
    pub x: Vec<f64>,
    pub nu: Vec<u64>,
    pub rng: ChaCha8Rng,
}

impl SimState {
    /// State for `layout` (use [`EstimateLayout::complete`] for the complete-interference step).
    /// Actions are read from each owner's own slot.
    pub fn new(
        game: &GameSpec,
        layout: &EstimateLayout,
        init: &InitialEstimates,
        seed: u64,
    ) -> Result<Self> {
        if layout.n() != game.n() {
            return Err(Error::VertexCountMismatch(layout.n(), game.n()));
        }
        let x_tilde: Vec<f64> = match init {
            InitialEstimates::Midpoint => {
                let mid = game.midpoint();
                layout.slot_owners().iter().map(|&(_, j)| mid[j]).collect()
            }
            InitialEstimates::Profile(v) => {
                if v.len() != game.n() {
                    return Err(Error::LengthMismatch {
                        expected: game.n(),
                        got: v.len(),
                    });
                }
                layout.slot_owners().iter().map(|&(_, j)| v[j]).collect()
            }
            InitialEstimates::Stacked(v) => {
                if v.len() != layout.m() {
                    return Err(Error::LengthMismatch {
                        expected: layout.m(),
                        got: v.len(),
                    });
                }
                v.clone()
            }
        };
        for (&(_, j), &v) in layout.slot_owners().iter().zip(&x_tilde) {
            let iv = game.intervals()[j];
            if !iv.contains(v) {
                return Err(Error::OutOfBounds {
                    player: j + 1,
                    value: v,
                    lo: iv.lo,
                    hi: iv.hi,
                });
            }
        }
        let x = (0..game.n())
            .map(|i| x_tilde[layout.slot0(i, i).expect("own slot")])
            .collect();
        Ok(SimState {
            k: 0,
            x_tilde,
            x,
            nu: vec![1; game.n()],
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Largest step size any player would use next.
    pub fn alpha_max(&self, rule: StepRule) -> f64 {
        self.nu.iter().map(|&v| rule.alpha(v)).fold(0.0, f64::max)
    }
}

fn local_step(
    game: &GameSpec,
    state: &mut SimState,
    i: usize,
    local: &[f64],
    rule: StepRule,
) -> Result<f64> {
    let g = game.grad(i, local);
    if !g.is_finite() {
        return Err(Error::NonFiniteGradient {
            player: i + 1,
            iteration: state.k,
        });
    }
    let alpha = rule.alpha(state.nu[i]);
    Ok(game.intervals()[i].project(state.x[i] - alpha * g))
}

/// One iteration of the complete-interference algorithm on an `N²` estimate
/// vector (row `i` is player `i`'s estimate of everybody).
///
/// On error the state is left untouched.
pub fn step_algorithm1(
    state: &mut SimState,
    game: &GameSpec,
    ev: GossipEvent,
    rule: StepRule,
) -> Result<()> {
    let n = game.n();
    if !game.has_complete_interference() {
        return Err(Error::Input(
            "algorithm 1 needs a complete interference graph".into(),
        ));
    }
    if state.x_tilde.len() != n * n {
        return Err(Error::LengthMismatch {
            expected: n * n,
            got: state.x_tilde.len(),
        });
    }
    let (i, j) = ev.validate(n)?;
    // x̄^i = (x̃^i + x̃^j)/2 off the diagonal; own entry is the action itself
    let mut row: Vec<f64> = (0..n)
        .map(|l| 0.5 * (state.x_tilde[i * n + l] + state.x_tilde[j * n + l]))
        .collect();
    row[i] = state.x[i];
    let new_xi = local_step(game, state, i, &row, rule)?;
    row[i] = new_xi;
    state.x_tilde[i * n..(i + 1) * n].copy_from_slice(&row);
    state.x[i] = new_xi;
    state.nu[i] += 1;
    state.k += 1;
    Ok(())
}

/// One iteration of the partial-interference algorithm on the stacked
/// estimate vector described by `layout`.
///
/// On error the state is left untouched.
pub fn step_algorithm2(
    state: &mut SimState,
    game: &GameSpec,
    layout: &EstimateLayout,
    ev: GossipEvent,
    rule: StepRule,
) -> Result<()> {
    if layout.n() != game.n() {
        return Err(Error::VertexCountMismatch(layout.n(), game.n()));
    }
    if state.x_tilde.len() != layout.m() {
        return Err(Error::LengthMismatch {
            expected: layout.m(),
            got: state.x_tilde.len(),
        });
    }
    let (i, j) = ev.validate(game.n())?;
    let start = layout.offset(i);
    let len = layout.neighborhood(i).len();
    let mut block = state.x_tilde[start..start + len].to_vec();
    for (_, si, sj) in shared_slots(layout, i, j) {
        block[si - start] = 0.5 * (state.x_tilde[si] + state.x_tilde[sj]);
    }
    let own = game.own_position(i);
    block[own] = state.x[i];
    let new_xi = local_step(game, state, i, &block, rule)?;
    block[own] = new_xi;
    state.x_tilde[start..start + len].copy_from_slice(&block);
    state.x[i] = new_xi;
    state.nu[i] += 1;
    state.k += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Complete interference when the interference graph is complete,
    /// partial otherwise.
    #[default]
    Auto,
    Complete,
    Partial,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub iterations: u64,
    pub seed: u64,
    pub step_rule: StepRule,
    pub stride: u64,
    pub init: InitialEstimates,
    pub algorithm: Algorithm,
    /// Run even if the graph assumptions fail (recorded in the trajectory).
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            iterations: 10_000,
            seed: 0,
            step_rule: StepRule::InverseCount,
            stride: 100,
            init: InitialEstimates::Midpoint,
            algorithm: Algorithm::Auto,
            force: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub k: u64,
    pub x: Vec<f64>,
    pub consensus_err: f64,
    pub ne_dist: Option<f64>,
    pub alpha_max: f64,
    /// `Σ_{t<k} α_{t,max} ‖x̃(t) − Z(t)‖`
    pub sum_weighted_err: f64,
    /// `Σ_{t<k} ‖x̃(t) − Z(t)‖²`
    pub sum_sq_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub iterations: u64,
    pub stride: u64,
    pub forced: bool,
    pub gate_failures: Vec<String>,
    pub records: Vec<Record>,
    pub final_x: Vec<f64>,
    pub final_x_tilde: Vec<f64>,
    pub final_consensus_err: f64,
    pub final_ne_dist: Option<f64>,
    pub sum_weighted_err: f64,
    pub sum_sq_err: f64,
}

impl Trajectory {
    /// CSV with header `k,x_1..x_N,consensus_err,ne_dist,alpha_max`; an
    /// unknown NE distance is left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.final_x.len();
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(["consensus_err", "ne_dist", "alpha_max"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let mut line = r.k.to_string();
            for v in &r.x {
                line.push(',');
                line.push_str(&v.to_string());
            }
            line.push(',');
            line.push_str(&r.consensus_err.to_string());
            line.push(',');
            if let Some(d) = r.ne_dist {
                line.push_str(&d.to_string());
            }
            line.push(',');
            line.push_str(&r.alpha_max.to_string());
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Which algorithm `run` will use for this game.
pub fn resolve_algorithm(game: &GameSpec, requested: Algorithm) -> Algorithm {
    match requested {
        Algorithm::Auto if game.has_complete_interference() => Algorithm::Complete,
        Algorithm::Auto => Algorithm::Partial,
        other => other,
    }
}

/// Graph preconditions of the chosen algorithm, as human-readable failures.
pub fn assumption_gate(
    game: &GameSpec,
    g_c: &Digraph,
    algorithm: Algorithm,
) -> Result<Vec<String>> {
    if g_c.n() != game.n() {
        return Err(Error::VertexCountMismatch(g_c.n(), game.n()));
    }
    let mut failures = Vec::new();
    if !g_c.is_strongly_connected() {
        failures.push("communication graph is not strongly connected".to_string());
    }
    if resolve_algorithm(game, algorithm) == Algorithm::Partial {
        let g_i = game.interference();
        if !g_i.is_strongly_connected() {
            failures.push("interference graph is not strongly connected".to_string());
        }
        let rep = check_assumption_6(g_c, g_i)?;
        for v in rep.violations {
            failures.push(format!(
                "reduction condition violated at edge {}->{} ({:?})",
                v.edge.0, v.edge.1, v.kind
            ));
        }
    }
    Ok(failures)
}

/// Runs one seeded simulation and records metrics every `stride` iterations
/// (plus `k = 0`).
pub fn run(
    game: &GameSpec,
    g_c: &Digraph,
    cfg: &RunConfig,
    reference_ne: Option<&[f64]>,
) -> Result<Trajectory> {
    let algorithm = resolve_algorithm(game, cfg.algorithm);
    let gate_failures = assumption_gate(game, g_c, algorithm)?;
    if !gate_failures.is_empty() && !cfg.force {
        return Err(Error::AssumptionGate(gate_failures.join("; ")));
    }
    if algorithm == Algorithm::Complete && !game.has_complete_interference() {
        return Err(Error::Input(
            "algorithm 1 needs a complete interference graph".into(),
        ));
    }
    if let Some(r) = reference_ne {
        if r.len() != game.n() {
            return Err(Error::LengthMismatch {
                expected: game.n(),
                got: r.len(),
            });
        }
    }
    if cfg.stride == 0 {
        return Err(Error::Input("stride must be positive".into()));
    }
    let sampler = EventSampler::new(g_c)?;
    let layout = match algorithm {
        Algorithm::Partial => EstimateLayout::build_unchecked(game.interference())?,
        _ => EstimateLayout::complete(game.n()),
    };
    let mut state = SimState::new(game, &layout, &cfg.init, cfg.seed)?;
    let mut scratch = Vec::with_capacity(game.n());
    let mut records = Vec::with_capacity((cfg.iterations / cfg.stride) as usize + 1);
    let (mut sum_w, mut sum_sq) = (0.0f64, 0.0f64);

    let record = |state: &SimState, err: f64, sum_w: f64, sum_sq: f64| Record {
        k: state.k,
        x: state.x.clone(),
        consensus_err: err,
        ne_dist: reference_ne.map(|r| distance(&state.x, r)),
        alpha_max: state.alpha_max(cfg.step_rule),
        sum_weighted_err: sum_w,
        sum_sq_err: sum_sq,
    };

    for _ in 0..cfg.iterations {
        let err = layout.consensus_error(&state.x_tilde, &mut scratch);
        if state.k % cfg.stride == 0 {
            records.push(record(&state, err, sum_w, sum_sq));
        }
        sum_w += state.alpha_max(cfg.step_rule) * err;
        sum_sq += err * err;
        let ev = sampler.sample(&mut state.rng);
        match algorithm {
            Algorithm::Partial => step_algorithm2(&mut state, game, &layout, ev, cfg.step_rule)?,
            _ => step_algorithm1(&mut state, game, ev, cfg.step_rule)?,
        }
    }
    let err = layout.consensus_error(&state.x_tilde, &mut scratch);
    if state.k % cfg.stride == 0 {
        records.push(record(&state, err, sum_w, sum_sq));
    }
    Ok(Trajectory {
        algorithm,
        seed: cfg.seed,
        iterations: cfg.iterations,
        stride: cfg.stride,
        forced: cfg.force && !gate_failures.is_empty(),
        gate_failures,
        records,
        final_ne_dist: reference_ne.map(|r| distance(&state.x, r)),
        final_x: state.x,
        final_x_tilde: state.x_tilde,
        final_consensus_err: err,
        sum_weighted_err: sum_w,
        sum_sq_err: sum_sq,
    })
}

/// Independent runs for each seed, fanned out according to `mode`. Results
/// come back in seed order.
pub fn run_seeds(
    game: &GameSpec,
    g_c: &Digraph,
    cfg: &RunConfig,
    seeds: &[u64],
    reference_ne: Option<&[f64]>,
    mode: Parallelism,
) -> Vec<Result<Trajectory>> {
    map_slice(seeds, mode, |&seed| {
        let cfg = RunConfig {
            seed,
            ..cfg.clone()
        };
        run(game, g_c, &cfg, reference_ne)
    })
}
