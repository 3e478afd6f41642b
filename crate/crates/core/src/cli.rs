//! Command-line front end: problem generation, experiment runs,
//! aggregation and plotting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acq::Choice;
use crate::bo::{aggregate_samples, regret_samples, run_experiment_from, AggregateRow, Mode, ProblemSource, RegretSample, RunConfig, RunResult, RunSeeds};
use crate::problems::SyntheticProblem;
use crate::{plot, selftest, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cmokg", version, about = "Cost-weighted multi-objective knowledge-gradient Bayesian optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic problem archives.
    ///
    /// Problem `i` gets the seed a run with master seed `--seed` would use
    /// for repeat `i`.
    Generate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        family: u8,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `threads`.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute an aggregate CSV from a run-level regret CSV.
    Aggregate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw mean regret against cumulative cost from an aggregate CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// An experiment description. Relative paths resolve against the config
/// file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Every run seed derives from this (see [`RunSeeds::derive`]).
    pub master_seed: u64,
    pub families: Vec<u8>,
    pub modes: Vec<Mode>,
    pub repeats: usize,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Load problems from archives here instead of generating them.
    #[serde(default)]
    pub problem_dir: Option<PathBuf>,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.families.is_empty() || self.families.iter().any(|f| !(1..=2).contains(f)) {
            return Err(format!("families must be a non-empty subset of [1, 2], got {:?}", self.families));
        }
        if self.modes.is_empty() {
            return Err("modes must not be empty".into());
        }
        for (i, m) in self.modes.iter().enumerate() {
            if self.modes[..i].contains(m) {
                return Err(format!("mode {} listed twice", m.name()));
            }
        }
        if self.repeats == 0 {
            return Err("repeats must be >= 1".into());
        }
        if self.threads == Some(0) {
            return Err("threads must be >= 1".into());
        }
        self.run.validate().map_err(|e| e.to_string())
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { family, count, seed, out } => cmd_generate(family, count, seed, &out).map(|_| ()),
        Command::Run { config, out, threads, seed } => cmd_run(&config, out.as_deref(), threads, seed).map(|_| ()),
        Command::Aggregate { input, out } => cmd_aggregate(&input, &out),
        Command::Plot { input, out } => cmd_plot(&input, &out),
        Command::Selftest => cmd_selftest(),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e).into())
}

/// Writes `count` problem archives; returns their paths.
pub fn cmd_generate(family: u8, count: usize, seed: u64, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    if !(1..=2).contains(&family) {
        return Err(CliError::Usage(format!("family must be 1 or 2, got {family}")));
    }
    create_dir(out_dir)?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let p = SyntheticProblem::generate(family, RunSeeds::derive(seed, i as u64).problem)?;
        let path = out_dir.join(p.file_name());
        p.save(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Files written by one `run` invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutputs {
    pub traces: Vec<PathBuf>,
    pub regrets: Vec<PathBuf>,
    pub aggregates: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub failures: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'static str,
    code_version: &'static str,
    config_sha256: String,
    master_seed: u64,
    families: &'a [u8],
    modes: Vec<&'static str>,
    repeats: usize,
    threads: Option<usize>,
    runs: Vec<ManifestRun>,
    failures: usize,
}

#[derive(Serialize)]
struct ManifestRun {
    family: u8,
    repeat: usize,
    mode: &'static str,
    seeds: RunSeeds,
    status: String,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn cmd_run(config_path: &Path, out: Option<&Path>, threads: Option<usize>, seed: Option<u64>) -> CliResult<RunOutputs> {
    let text = std::fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|m| CliError::Usage(format!("{}: {m}", config_path.display())))?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    if cfg.threads == Some(0) {
        return Err(CliError::Usage("threads must be >= 1".into()));
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let out_dir = match out {
        Some(o) => o.to_path_buf(),
        None => resolve(base, &cfg.out_dir),
    };
    let source = match &cfg.problem_dir {
        Some(d) => ProblemSource::Directory(resolve(base, d)),
        None => ProblemSource::Generate,
    };
    create_dir(&out_dir)?;

    let mut outputs = RunOutputs { traces: vec![], regrets: vec![], aggregates: vec![], manifest: out_dir.join("manifest.json"), failures: 0 };
    let mut manifest_runs = Vec::new();
    for &family in &cfg.families {
        let results = run_experiment_from(&source, family, &cfg.modes, cfg.repeats, cfg.master_seed, &cfg.run, cfg.threads)?;
        for r in &results {
            if let Err(e) = &r.outcome {
                eprintln!("warning: family {family} repeat {} mode {} failed: {e}", r.repeat, r.mode.name());
                outputs.failures += 1;
            }
            manifest_runs.push(ManifestRun {
                family,
                repeat: r.repeat,
                mode: r.mode.name(),
                seeds: r.seeds,
                status: match &r.outcome {
                    Ok(_) => "ok".into(),
                    Err(e) => format!("failed: {e}"),
                },
            });
        }
        let trace_path = out_dir.join(format!("trace_family{family}.csv"));
        write_file(&trace_path, &trace_csv(&results))?;
        let regret_path = out_dir.join(format!("regret_family{family}.csv"));
        write_file(&regret_path, &regret_csv(&results))?;
        let aggregate_path = out_dir.join(format!("aggregate_family{family}.csv"));
        write_file(&aggregate_path, &aggregate_csv(&aggregate_samples(&regret_samples(&results), &cfg.modes)))?;
        outputs.traces.push(trace_path);
        outputs.regrets.push(regret_path);
        outputs.aggregates.push(aggregate_path);
    }
    let manifest = Manifest {
        format: "cmokg-manifest",
        code_version: env!("CARGO_PKG_VERSION"),
        config_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        master_seed: cfg.master_seed,
        families: &cfg.families,
        modes: cfg.modes.iter().map(|m| m.name()).collect(),
        repeats: cfg.repeats,
        threads: cfg.threads,
        runs: manifest_runs,
        failures: outputs.failures,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_file(&outputs.manifest, &json)?;
    Ok(outputs)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

fn joined(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// One row per evaluation event. The initial design appears as iteration 0
/// with every objective evaluated; objective indices are one-based.
pub fn trace_csv(results: &[RunResult]) -> String {
    let mut w = csv_writer();
    w.write_record(["run_seed", "mode", "iter", "x1", "x2", "m", "y", "cost", "cum_cost"]).expect("in-memory write");
    for r in results {
        let Ok(t) = &r.outcome else { continue };
        let seed = t.seeds.problem.to_string();
        let mut cum = 0.0;
        let m_count = t.design.iter().map(|o| o.objective + 1).max().unwrap_or(0);
        for chunk in t.design.chunks(m_count.max(1)) {
            let cost: f64 = chunk.iter().map(|o| o.cost).sum();
            cum += cost;
            let y: Vec<f64> = chunk.iter().map(|o| o.value).collect();
            let x = &chunk[0].location;
            w.write_record([
                seed.as_str(),
                t.mode.name(),
                "0",
                &x[0].to_string(),
                &x.get(1).map_or(String::new(), |v| v.to_string()),
                "ALL",
                &joined(&y),
                &cost.to_string(),
                &cum.to_string(),
            ])
            .expect("in-memory write");
        }
        for it in &t.iterations {
            let m = match it.choice {
                Choice::All => "ALL".to_string(),
                Choice::Objective(m) => (m + 1).to_string(),
            };
            w.write_record([
                seed.as_str(),
                t.mode.name(),
                &it.iter.to_string(),
                &it.x[0].to_string(),
                &it.x.get(1).map_or(String::new(), |v| v.to_string()),
                &m,
                &joined(&it.y),
                &it.cost.to_string(),
                &it.cum_cost.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

/// One row per run and checkpoint.
pub fn regret_csv(results: &[RunResult]) -> String {
    let mut w = csv_writer();
    w.write_record([
        "run_seed",
        "repeat",
        "mode",
        "checkpoint_cost",
        "iteration",
        "regret",
        "normalized_regret",
        "std_error",
        "optimal_expected_utility",
        "expected_utility",
    ])
    .expect("in-memory write");
    for r in results {
        let Ok(t) = &r.outcome else { continue };
        for c in &t.checkpoints {
            let rep = &c.report;
            w.write_record([
                t.seeds.problem.to_string(),
                r.repeat.to_string(),
                t.mode.name().to_string(),
                c.cost.to_string(),
                c.iteration.to_string(),
                rep.regret.to_string(),
                rep.normalized_regret.to_string(),
                rep.std_error.to_string(),
                rep.optimal_expected_utility.to_string(),
                rep.expected_utility.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut w = csv_writer();
    w.write_record(["mode", "checkpoint_cost", "mean_regret", "ci95_halfwidth", "n_runs"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.mode.name().to_string(),
            r.checkpoint_cost.to_string(),
            r.mean_regret.to_string(),
            r.ci95_halfwidth.map_or(String::new(), |v| v.to_string()),
            r.n_runs.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Parses a regret CSV back into samples; modes are listed in order of
/// first appearance.
pub fn parse_regret_csv(text: &str) -> std::result::Result<(Vec<RegretSample>, Vec<Mode>), String> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| format!("missing column {name}"));
    let (seed_c, mode_c, cost_c, regret_c) = (col("run_seed")?, col("mode")?, col("checkpoint_cost")?, col("regret")?);
    let mut samples = Vec::new();
    let mut modes = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = i + 2;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let mode: Mode = get(mode_c).parse().map_err(|e: Error| format!("row {row}: {e}"))?;
        let problem_seed = get(seed_c).parse().map_err(|_| format!("row {row}: bad run_seed {:?}", get(seed_c)))?;
        let checkpoint_cost = get(cost_c).parse().map_err(|_| format!("row {row}: bad checkpoint_cost {:?}", get(cost_c)))?;
        let regret = get(regret_c).parse().map_err(|_| format!("row {row}: bad regret {:?}", get(regret_c)))?;
        if !modes.contains(&mode) {
            modes.push(mode);
        }
        samples.push(RegretSample { mode, problem_seed, checkpoint_cost, regret });
    }
    if samples.is_empty() {
        return Err("no regret rows".into());
    }
    Ok((samples, modes))
}

pub fn cmd_aggregate(input: &Path, out: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let (samples, modes) = parse_regret_csv(&text).map_err(|m| CliError::Usage(format!("{}: {m}", input.display())))?;
    write_file(out, &aggregate_csv(&aggregate_samples(&samples, &modes)))
}

pub fn cmd_plot(input: &Path, out: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let parsed = plot::read_aggregate(&text).map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    write_file(out, &plot::render_svg(&parsed))
}

pub fn cmd_selftest() -> CliResult<()> {
    let checks = selftest::run_all();
    let mut report = String::new();
    let mut failed = 0;
    for c in &checks {
        let _ = writeln!(report, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    print!("{report}");
    if failed > 0 {
        return Err(CliError::Runtime(Error::Domain(format!("{failed} self-test check(s) failed"))));
    }
    Ok(())
}
