//! Command-line front end. Every subcommand returns its process exit code so
//! it can be driven from tests without spawning a process.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig, ReferenceSource};
use crate::digraph::{check_assumption_6, check_lemma_3};
use crate::error::{Error, Result};
use crate::exec::{map_slice, with_thread_cap, Parallelism};
use crate::game::{check_assumptions, gradient_check};
use crate::gossip::{assumption_gate, resolve_algorithm, run, Algorithm};
use crate::layout::EstimateLayout;
use crate::oracle::solve_ne;
use crate::spectral::{check_lemma_4_with, spectral_report};

pub const THREADS_ENV: &str = "NE_GOSSIP_THREADS";

/// `ne-gossip <semver> (<git revision>)`.
pub fn version_string() -> String {
    format!(
        "ne-gossip {} ({})",
        env!("CARGO_PKG_VERSION"),
        option_env!("NE_GOSSIP_GIT_REV").unwrap_or("unknown")
    )
}

#[derive(Debug, Parser)]
#[command(
    name = "ne-gossip",
    version,
    about = "Asynchronous gossip NE seeking over directed graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every seed and write trajectories plus a JSON summary.
    Run(CommonArgs),
    /// Check graph assumptions, lemma certificates, contraction factor and gradients.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Drop the owners' own slots from H (negative control).
        #[arg(long)]
        corrupt_h: bool,
    },
    /// Solve the game with the full-information oracle.
    Solve(CommonArgs),
    /// Expected contraction factor of the gossip averaging step.
    SpectralReport {
        #[command(flatten)]
        common: CommonArgs,
        /// Use power iteration above the dense size guardrail.
        #[arg(long)]
        allow_large: bool,
    },
    /// Reshape trajectory CSVs into long format `seed,k,series,value`.
    PlotData {
        /// Trajectory CSV files.
        files: Vec<PathBuf>,
        /// Config whose reference equilibrium is appended as `ref_x_i` rows.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Replaces the configured seed list (repeatable).
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub iters: Option<u64>,
    /// Proceed even when graph assumptions fail; recorded in the output.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if !self.seeds.is_empty() {
            cfg.run.seeds = self.seeds.clone();
        }
        if let Some(it) = self.iters {
            cfg.run.iterations = it;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match with_thread_cap(thread_cap(), || dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::AssumptionGate(_) => 3,
                _ => 1,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run(a) => cmd_run(&a),
        Command::Verify { common, corrupt_h } => cmd_verify(&common, corrupt_h),
        Command::Solve(a) => cmd_solve(&a),
        Command::SpectralReport {
            common,
            allow_large,
        } => cmd_spectral_report(&common, allow_large),
        Command::PlotData { files, config, out } => {
            cmd_plot_data(&files, config.as_deref(), out.as_deref())
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn emit_json(value: &impl Serialize, out: Option<&Path>, file: &str) -> Result<()> {
    match out {
        Some(dir) => write_json(&dir.join(file), value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn header(kind: &str, cfg: &ExperimentConfig, exp: &Experiment) -> Value {
    json!({
        "kind": kind,
        "version": version_string(),
        "config_name": cfg.name,
        "config_hash": exp.hash,
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

pub fn trajectory_file_name(seed: u64) -> String {
    format!("traj_seed{seed}.csv")
}

#[derive(Debug, Serialize)]
struct RunEntry {
    seed: u64,
    csv: String,
    iterations: u64,
    records: usize,
    final_x: Vec<f64>,
    final_ne_dist: f64,
    final_consensus_err: f64,
    sum_weighted_err: f64,
    sum_sq_err: f64,
    within_tolerance: bool,
}

pub fn cmd_run(args: &CommonArgs) -> Result<i32> {
    let cfg = args.load()?;
    let exp = cfg.build()?;
    let algorithm = resolve_algorithm(&exp.game, cfg.run.algorithm);
    let failures = assumption_gate(&exp.game, &exp.g_c, algorithm)?;
    if !failures.is_empty() && !args.force {
        return Err(Error::AssumptionGate(format!(
            "{} (pass --force to run anyway)",
            failures.join("; ")
        )));
    }
    let (reference, source) = exp.reference(&cfg)?;
    let out = args.out_dir(&cfg);
    fs::create_dir_all(&out)?;

    let results: Vec<Result<RunEntry>> =
        map_slice(&cfg.run.seeds, Parallelism::Parallel, |&seed| {
            let traj = run(
                &exp.game,
                &exp.g_c,
                &cfg.run_config(seed, args.force),
                Some(&reference),
            )?;
            let name = trajectory_file_name(seed);
            let mut file = std::io::BufWriter::new(fs::File::create(out.join(&name))?);
            traj.write_csv(&mut file)?;
            file.flush()?;
            let dist = traj.final_ne_dist.unwrap_or(f64::NAN);
            Ok(RunEntry {
                seed,
                csv: name,
                iterations: traj.iterations,
                records: traj.records.len(),
                final_x: traj.final_x,
                final_ne_dist: dist,
                final_consensus_err: traj.final_consensus_err,
                sum_weighted_err: traj.sum_weighted_err,
                sum_sq_err: traj.sum_sq_err,
                within_tolerance: dist < cfg.tolerances.ne_dist,
            })
        });
    let mut runs = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (seed, r) in cfg.run.seeds.iter().zip(results) {
        match r {
            Ok(e) => runs.push(e),
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
    }
    let summary = merge(
        header("run_summary", &cfg, &exp),
        json!({
            "algorithm": algorithm,
            "forced": args.force && !failures.is_empty(),
            "gate_failures": failures,
            "iterations": cfg.run.iterations,
            "stride": cfg.run.stride,
            "reference_ne": reference,
            "reference_source": source,
            "ne_dist_tolerance": cfg.tolerances.ne_dist,
            "runs": runs,
            "errors": errors,
        }),
    );
    write_json(&out.join("summary.json"), &summary)?;
    for e in &errors {
        eprintln!("error: {e}");
    }
    Ok(if errors.is_empty() { 0 } else { 1 })
}

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct Skipped {
    field: &'static str,
    reason: String,
}

pub fn cmd_verify(args: &CommonArgs, corrupt_h: bool) -> Result<i32> {
    let cfg = args.load()?;
    let exp = cfg.build()?;
    let (game, g_c, g_i) = (&exp.game, &exp.g_c, &exp.g_i);
    let partial = resolve_algorithm(game, cfg.run.algorithm) == Algorithm::Partial;
    let tol = &cfg.tolerances;
    let mut checks = Vec::new();
    let mut skipped = Vec::new();

    let assumption4 = g_c.is_strongly_connected();
    checks.push(Check {
        name: "assumption4",
        pass: assumption4,
    });
    let (assumption5, assumption6, lemma3) = if partial {
        let a5 = g_i.is_strongly_connected();
        let a6 = check_assumption_6(g_c, g_i)?;
        let l3 = check_lemma_3(g_c, g_i)?;
        checks.push(Check {
            name: "assumption5",
            pass: a5,
        });
        checks.push(Check {
            name: "assumption6",
            pass: a6.holds,
        });
        checks.push(Check {
            name: "lemma3",
            pass: l3.holds,
        });
        (Some(a5), Some(a6), Some(l3))
    } else {
        for field in ["assumption5", "assumption6", "lemma3"] {
            skipped.push(Skipped {
                field,
                reason: "complete interference".into(),
            });
        }
        (None, None, None)
    };

    let layout = if partial {
        EstimateLayout::build_unchecked(g_i)?
    } else {
        EstimateLayout::complete(game.n())
    };
    let lemma4_residual = if partial || corrupt_h {
        let h = layout.h_dense(!corrupt_h);
        let r = check_lemma_4_with(&layout, g_c, &h)?;
        checks.push(Check {
            name: "lemma4",
            pass: r == 0.0,
        });
        Some(r)
    } else {
        skipped.push(Skipped {
            field: "lemma4_residual",
            reason: "complete interference".into(),
        });
        None
    };

    let spectral = if checks.iter().all(|c| c.pass) || args.force {
        match spectral_report(g_c, g_i, cfg.verify.allow_large, Parallelism::Parallel) {
            Ok(r) => Some(r),
            Err(Error::TooLarge(msg)) => {
                skipped.push(Skipped {
                    field: "gamma",
                    reason: format!("size guardrail: {msg}"),
                });
                None
            }
            Err(e) => {
                skipped.push(Skipped {
                    field: "gamma",
                    reason: e.to_string(),
                });
                None
            }
        }
    } else {
        skipped.push(Skipped {
            field: "gamma",
            reason: "graph assumptions failed".into(),
        });
        None
    };
    if let Some(r) = &spectral {
        checks.push(Check {
            name: "gamma",
            pass: r.gamma > 0.0 && r.margin >= tol.spectral_margin,
        });
    }

    let grad = gradient_check(game, cfg.verify.gradient_points, cfg.verify.sample_seed);
    checks.push(Check {
        name: "gradient_check",
        pass: grad.max_rel_err < tol.gradient_rel_err,
    });
    let samples = check_assumptions(
        game,
        cfg.verify.assumption_samples,
        cfg.verify.sample_seed,
        None,
        Parallelism::Parallel,
    )?;
    checks.push(Check {
        name: "monotone_samples",
        pass: samples.is_compliant(),
    });

    let pass = checks.iter().all(|c| c.pass);
    let report = merge(
        header("verify_report", &cfg, &exp),
        json!({
            "setting": if partial { "partial" } else { "complete" },
            "corrupted_h": corrupt_h,
            "assumption4": assumption4,
            "assumption5": assumption5,
            "assumption6": assumption6,
            "lemma3": lemma3,
            "lemma4_residual": lemma4_residual,
            "gamma": spectral.as_ref().map(|r| r.gamma),
            "gamma_margin": spectral.as_ref().map(|r| r.margin),
            "spectral": spectral,
            "gradient_check_max_rel_err": grad.max_rel_err,
            "gradient_check": grad,
            "assumption_samples": samples,
            "checks": checks,
            "skipped": skipped,
            "pass": pass,
        }),
    );
    emit_json(&report, args.out.as_deref(), "verify.json")?;
    Ok(if pass { 0 } else { 1 })
}

pub fn cmd_solve(args: &CommonArgs) -> Result<i32> {
    let cfg = args.load()?;
    let exp = cfg.build()?;
    let sol = solve_ne(
        &exp.game,
        cfg.tolerances.solve_tol,
        cfg.tolerances.solve_max_iters,
    )?;
    let converged = sol.converged;
    let report = merge(
        header("ne_solution", &cfg, &exp),
        serde_json::to_value(&sol)?,
    );
    emit_json(&report, args.out.as_deref(), "solve.json")?;
    Ok(if converged { 0 } else { 1 })
}

pub fn cmd_spectral_report(args: &CommonArgs, allow_large: bool) -> Result<i32> {
    let cfg = args.load()?;
    let exp = cfg.build()?;
    let r = spectral_report(
        &exp.g_c,
        &exp.g_i,
        allow_large || cfg.verify.allow_large,
        Parallelism::Parallel,
    )?;
    let ok = r.margin > 0.0;
    let report = merge(
        header("spectral_report", &cfg, &exp),
        serde_json::to_value(&r)?,
    );
    emit_json(&report, args.out.as_deref(), "spectral.json")?;
    Ok(if ok { 0 } else { 1 })
}

/// Seed from a `traj_seed{S}.csv` file name.
fn seed_from_name(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    stem.strip_prefix("traj_seed").map(str::to_string)
}

pub fn cmd_plot_data(files: &[PathBuf], config: Option<&Path>, out: Option<&Path>) -> Result<i32> {
    if files.is_empty() {
        return Err(Error::Input("no trajectory files given".into()));
    }
    let mut rows = String::from("seed,k,series,value\n");
    let mut schema: Option<Vec<String>> = None;
    for (idx, path) in files.iter().enumerate() {
        let file =
            fs::File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let mut lines = BufReader::new(file).lines();
        let head: Vec<String> = match lines.next() {
            Some(h) => h?.split(',').map(str::to_string).collect(),
            None => return Err(Error::Input(format!("{}: empty file", path.display()))),
        };
        if head.first().map(String::as_str) != Some("k") {
            return Err(Error::Input(format!(
                "{}: not a trajectory file",
                path.display()
            )));
        }
        match &schema {
            Some(s) if *s != head => {
                return Err(Error::Input(format!(
                    "{}: columns differ from {}",
                    path.display(),
                    files[0].display()
                )))
            }
            Some(_) => {}
            None => schema = Some(head.clone()),
        }
        let seed = seed_from_name(path).unwrap_or_else(|| idx.to_string());
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != head.len() {
                return Err(Error::Input(format!("{}: ragged row", path.display())));
            }
            for (name, value) in head.iter().zip(&cells).skip(1) {
                rows.push_str(&format!("{seed},{},{name},{value}\n", cells[0]));
            }
        }
    }
    if let Some(path) = config {
        let cfg = ExperimentConfig::load(path)?;
        let exp = cfg.build()?;
        let (reference, _src): (Vec<f64>, ReferenceSource) = exp.reference(&cfg)?;
        for (i, v) in reference.iter().enumerate() {
            rows.push_str(&format!("reference,,ref_x_{},{v}\n", i + 1));
        }
    }
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("plot_data.csv"), rows)?;
        }
        None => print!("{rows}"),
    }
    Ok(0)
}
