//! Experiment configuration (TOML) and its resolution into a game and graphs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::digraph::Digraph;
use crate::error::{Error, Result};
use crate::game::{
    quadratic_game, social_communication_graph, social_follower_graph, social_media_game,
    ActionInterval, GameSpec, SocialParams,
};
use crate::gossip::{Algorithm, InitialEstimates, RunConfig, StepRule};
use crate::oracle::solve_ne;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub game: GameConfig,
    #[serde(default)]
    pub graphs: GraphConfig,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameConfig {
    /// Posting game on a follower graph (`[from, to]`: `to` follows
    /// `from`); omitted fields take the reference five-user values.
    Social {
        followers: Option<Vec<[usize; 2]>>,
        h: Option<Vec<f64>>,
        l: Option<Vec<f64>>,
        #[serde(default)]
        q: Vec<InterestWeight>,
        default_q: Option<f64>,
        x_max: Option<f64>,
    },
    /// `J_i = (x_i − a_i)² + x_i Σ_j C_ij x_j` on `[lo, hi]`.
    Quadratic {
        a: Vec<f64>,
        coupling: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
    },
}

fn default_hi() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterestWeight {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Edge lists are 1-based `[from, to]` pairs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub communication: Option<Vec<[usize; 2]>>,
    pub interference: Option<Vec<[usize; 2]>>,
    /// Shorthand for the communication graph when no edge list is given.
    pub communication_preset: Option<GraphPreset>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphPreset {
    Ring,
    Complete,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub iterations: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub step: StepRule,
    #[serde(default)]
    pub init: InitialEstimates,
    /// Reference equilibrium for NE distances; solved by the oracle when
    /// absent.
    pub reference_ne: Option<Vec<f64>>,
}

fn default_stride() -> u64 {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out() }
    }
}

fn default_out() -> String {
    "out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub solve_tol: f64,
    pub solve_max_iters: usize,
    /// Final NE distance a run must reach to count as converged in the
    /// summary.
    pub ne_dist: f64,
    pub gradient_rel_err: f64,
    pub spectral_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            solve_tol: 1e-10,
            solve_max_iters: 2_000_000,
            ne_dist: 0.02,
            gradient_rel_err: 1e-6,
            spectral_margin: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub gradient_points: usize,
    pub assumption_samples: usize,
    pub sample_seed: u64,
    /// Allow power iteration above the dense size guardrail.
    pub allow_large: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            gradient_points: 100,
            assumption_samples: 2_000,
            sample_seed: 0,
            allow_large: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds must not be empty".into()));
        }
        if self.run.stride == 0 {
            return Err(Error::Config("run.stride must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (after any command-line
    /// overrides).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_config(&self, seed: u64, force: bool) -> RunConfig {
        RunConfig {
            iterations: self.run.iterations,
            seed,
            step_rule: self.run.step,
            stride: self.run.stride,
            init: self.run.init.clone(),
            algorithm: self.run.algorithm,
            force,
        }
    }

    /// Builds the game and graphs. Graph connectivity is not checked here;
    /// that is the run gate's job.
    pub fn build(&self) -> Result<Experiment> {
        let edges = |n: usize, list: &[[usize; 2]]| {
            Digraph::from_edges(n, list.iter().map(|e| (e[0], e[1])))
        };
        let preset = |n: usize| match self.graphs.communication_preset {
            Some(GraphPreset::Complete) => Digraph::complete(n),
            _ => Digraph::ring(n),
        };
        let (game, g_c) = match &self.game {
            GameConfig::Social {
                followers,
                h,
                l,
                q,
                default_q,
                x_max,
            } => {
                let mut p = SocialParams::reference();
                let follow = match followers {
                    Some(list) => edges(h.as_ref().map_or(5, Vec::len), list)?,
                    None => social_follower_graph(),
                };
                let n = follow.n();
                p.h = h.clone().unwrap_or_else(|| vec![2.0; n]);
                p.l = l.clone().unwrap_or_else(|| vec![1.5; n]);
                if !q.is_empty() {
                    p.q = q.iter().map(|w| ((w.from, w.to), w.weight)).collect();
                }
                if let Some(d) = default_q {
                    p.default_q = *d;
                }
                if let Some(x) = x_max {
                    p.x_max = *x;
                }
                let (game, g_i) = social_media_game(&follow, &p)?;
                let g_c = match &self.graphs.communication {
                    Some(list) => edges(n, list)?,
                    None if followers.is_none() => social_communication_graph(),
                    None => follow.clone(),
                };
                if let Some(list) = &self.graphs.interference {
                    if edges(n, list)? != g_i {
                        return Err(Error::Config(
                            "social interference graph is induced by the follower graph and must not be overridden"
                                .into(),
                        ));
                    }
                }
                (game, g_c)
            }
            GameConfig::Quadratic {
                a,
                coupling,
                lo,
                hi,
            } => {
                let n = a.len();
                let coupling = coupling.clone().unwrap_or_else(|| vec![vec![0.0; n]; n]);
                let g_i = self
                    .graphs
                    .interference
                    .as_ref()
                    .map(|l| edges(n, l))
                    .transpose()?;
                let game = quadratic_game(a, &coupling, ActionInterval::new(*lo, *hi)?, g_i)?;
                let g_c = match &self.graphs.communication {
                    Some(list) => edges(n, list)?,
                    None => preset(n),
                };
                (game, g_c)
            }
        };
        let g_i = game.interference().clone();
        Ok(Experiment {
            game,
            g_c,
            g_i,
            hash: self.hash(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub game: GameSpec,
    pub g_c: Digraph,
    pub g_i: Digraph,
    pub hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    Config,
    Oracle,
}

impl Experiment {
    /// Reference equilibrium: the configured one, else the oracle's.
    pub fn reference(&self, cfg: &ExperimentConfig) -> Result<(Vec<f64>, ReferenceSource)> {
        if let Some(r) = &cfg.run.reference_ne {
            if r.len() != self.game.n() {
                return Err(Error::LengthMismatch {
                    expected: self.game.n(),
                    got: r.len(),
                });
            }
            return Ok((r.clone(), ReferenceSource::Config));
        }
        let sol = solve_ne(
            &self.game,
            cfg.tolerances.solve_tol,
            cfg.tolerances.solve_max_iters,
        )?;
        Ok((sol.x_star, ReferenceSource::Oracle))
    }
}
