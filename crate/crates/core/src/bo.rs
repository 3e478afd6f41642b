//! The budgeted optimization loop and paired multi-run experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acq::{maximize_acquisition, AcquisitionMode, Choice, OptimizerConfig};
use crate::gp::{unit_grid_2d, ObservationRecord};
use crate::hyperfit::{fit_map_selected, FitConfig, FitOutcome, MeanPolicy, PriorSet};
use crate::metrics::{regret_weights, RegretEvaluator, RegretReport};
use crate::pareto::Nsga2Config;
use crate::problems::SyntheticProblem;
use crate::qmc::simplex_weights;
use crate::{Error, KernelSpec, Point, PosteriorState, Result, SobolStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    CmokgExpectation,
    CmokgRandom,
    BenchmarkBoth,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::CmokgExpectation, Mode::CmokgRandom, Mode::BenchmarkBoth];

    pub fn name(self) -> &'static str {
        match self {
            Mode::CmokgExpectation => "cmokg-expectation",
            Mode::CmokgRandom => "cmokg-random",
            Mode::BenchmarkBoth => "benchmark-both",
        }
    }

    fn acquisition(self) -> AcquisitionMode {
        match self {
            Mode::CmokgExpectation => AcquisitionMode::Expectation,
            Mode::CmokgRandom => AcquisitionMode::Random,
            Mode::BenchmarkBoth => AcquisitionMode::Benchmark,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?} (expected cmokg-expectation, cmokg-random or benchmark-both)")))
    }
}

/// Seeds of every random consumer in one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub problem: u64,
    pub design: u64,
    pub lambda: u64,
    pub noise: u64,
    pub optimizer: u64,
    pub hyperfit: u64,
    pub regret: u64,
    pub nsga: u64,
}

impl RunSeeds {
    /// Seeds of repeat `i` under `master`: consumer `k` (in field order,
    /// starting at 1) gets `master + 1000 * k * i + k`.
    ///
    /// The trailing `+ k` keeps consumers apart at `i = 0`.
    pub fn derive(master: u64, i: u64) -> Self {
        let s = |k: u64| master.wrapping_add(1000u64.wrapping_mul(k).wrapping_mul(i)).wrapping_add(k);
        Self { problem: s(1), design: s(2), lambda: s(3), noise: s(4), optimizer: s(5), hyperfit: s(6), regret: s(7), nsga: s(8) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub budget: f64,
    pub initial_points: usize,
    /// Weights per iteration for the averaged acquisitions.
    pub q: usize,
    /// Points per axis of the inner grid the knowledge gradient maximizes over.
    pub grid_per_axis: usize,
    /// Spacing of regret checkpoints in cost units.
    pub checkpoint_step: f64,
    pub optimizer: OptimizerConfig,
    pub fit: FitConfig,
    pub nsga: Nsga2Config,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            budget: 400.0,
            initial_points: 6,
            q: 16,
            grid_per_axis: 11,
            checkpoint_step: 25.0,
            optimizer: OptimizerConfig::default(),
            fit: FitConfig::default(),
            nsga: Nsga2Config::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0) || !self.budget.is_finite() {
            return Err(Error::Config(format!("budget must be positive, got {}", self.budget)));
        }
        if self.initial_points == 0 {
            return Err(Error::Config("initial_points must be >= 1".into()));
        }
        if self.q == 0 {
            return Err(Error::Config("q must be >= 1".into()));
        }
        if self.grid_per_axis < 2 {
            return Err(Error::Config("grid_per_axis must be >= 2".into()));
        }
        if !(self.checkpoint_step > 0.0) {
            return Err(Error::Config("checkpoint_step must be positive".into()));
        }
        self.optimizer.validate()?;
        self.nsga.validate()
    }

    /// Regret thresholds: the design cost, every multiple of the step above
    /// it, and the budget.
    pub fn checkpoints(&self, design_cost: f64) -> Vec<f64> {
        let mut out = vec![design_cost];
        let mut k = (design_cost / self.checkpoint_step).floor() + 1.0;
        while k * self.checkpoint_step < self.budget {
            out.push(k * self.checkpoint_step);
            k += 1.0;
        }
        if self.budget > design_cost {
            out.push(self.budget);
        }
        out
    }
}

/// Running account of evaluation costs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub total: f64,
    pub spent: f64,
}

impl BudgetLedger {
    pub fn new(total: f64) -> Self {
        Self { total, spent: 0.0 }
    }

    pub fn remaining(&self) -> f64 {
        self.total - self.spent
    }

    pub fn can_afford(&self, cost: f64) -> bool {
        cost <= self.remaining() + 1e-9
    }

    pub fn charge(&mut self, cost: f64) -> Result<()> {
        if !self.can_afford(cost) {
            return Err(Error::Budget { needed: cost, remaining: self.remaining() });
        }
        self.spent += cost;
        Ok(())
    }
}

/// Model hyperparameters at one iteration, model space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperSnapshot {
    pub length_scale: Vec<f64>,
    pub output_scale: Vec<f64>,
    pub noise_variance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based; the initial design is iteration 0.
    pub iter: usize,
    pub x: Point,
    pub choice: Choice,
    /// Observed values in objective order (one entry unless `choice` is `All`).
    pub y: Vec<f64>,
    pub cost: f64,
    pub cum_cost: f64,
    pub acquisition_value: f64,
    pub fell_back: bool,
    pub hypers: HyperSnapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub cost: f64,
    /// Iterations completed when the state used here was formed.
    pub iteration: usize,
    pub report: RegretReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub mode: Mode,
    pub seeds: RunSeeds,
    pub design: Vec<ObservationRecord>,
    pub iterations: Vec<IterationRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_cost: f64,
}

impl RunTrace {
    pub fn final_regret(&self) -> Option<&RegretReport> {
        self.checkpoints.last().map(|c| &c.report)
    }

    pub fn regret_at(&self, cost: f64) -> Option<&RegretReport> {
        self.checkpoints.iter().find(|c| (c.cost - cost).abs() < 1e-9).map(|c| &c.report)
    }
}

/// `n` scrambled-Sobol locations, each evaluated on every objective.
pub fn initial_design(problem: &SyntheticProblem, n: usize, seed: u64, noise: &mut ChaCha8Rng) -> Result<Vec<ObservationRecord>> {
    if n == 0 {
        return Err(Error::InvalidParameter("initial design needs at least one point".into()));
    }
    let mut stream = SobolStream::scrambled(problem.dim(), seed)?;
    let mut out = Vec::with_capacity(n * problem.num_objectives());
    for x in stream.next_points(n) {
        for m in 0..problem.num_objectives() {
            let y = problem.evaluate(&x, m, noise)?;
            out.push(ObservationRecord::new(x.clone(), m, y, problem.costs().get(m)));
        }
    }
    Ok(out)
}

fn initial_kernel(m: usize) -> Result<KernelSpec> {
    KernelSpec::matern52(vec![0.5; m], vec![1.0; m], vec![0.0; m])
}

fn snapshot(fit: &FitOutcome) -> HyperSnapshot {
    HyperSnapshot {
        length_scale: fit.kernel.length_scale.clone(),
        output_scale: fit.kernel.output_scale.clone(),
        noise_variance: fit.noise.noise_variance.clone(),
    }
}

fn build_state(dim: usize, fit: &FitOutcome, data: &[ObservationRecord]) -> Result<PosteriorState> {
    PosteriorState::prior(dim, fit.kernel.clone(), fit.noise.clone())?.with_transforms(fit.transforms.clone())?.condition(data)
}

/// Runs one optimization. `regret` must be built for `problem`.
pub fn run_bo(problem: &SyntheticProblem, mode: Mode, config: &RunConfig, seeds: &RunSeeds, regret: &RegretEvaluator) -> Result<RunTrace> {
    config.validate()?;
    let m_count = problem.num_objectives();
    let costs = problem.costs().clone();
    let mut ledger = BudgetLedger::new(config.budget);
    let mut noise = ChaCha8Rng::seed_from_u64(seeds.noise);
    let design = initial_design(problem, config.initial_points, seeds.design, &mut noise)?;
    let design_cost = config.initial_points as f64 * costs.total();
    ledger.charge(design_cost)?;
    let mut data = design.clone();

    let priors = PriorSet::for_family(problem.family())?;
    let mut fit_cfg = FitConfig { seed: seeds.hyperfit, ..config.fit.clone() };
    let mut fit = fit_map_selected(
        &data,
        &priors,
        (&initial_kernel(m_count)?, &priors.noise_model(0.1)),
        &MeanPolicy::Fit,
        &fit_cfg,
        &vec![true; m_count],
    )?;
    let frozen_mean = MeanPolicy::Frozen(fit.raw_mean.clone());
    let mut state = build_state(problem.dim(), &fit, &data)?;

    let grid = unit_grid_2d(config.grid_per_axis);
    let mut lambda_stream = SobolStream::scrambled(m_count - 1, seeds.lambda)?;
    let optimizer = OptimizerConfig { fantasy_seed: seeds.optimizer, ..config.optimizer.clone() };
    let thresholds = config.checkpoints(design_cost);
    let mut next_threshold = 0;
    let mut checkpoints = Vec::with_capacity(thresholds.len());
    let mut iterations = Vec::new();

    loop {
        let allowed: Vec<bool> = (0..m_count).map(|m| ledger.can_afford(costs.get(m))).collect();
        let affordable = match mode {
            Mode::BenchmarkBoth => ledger.can_afford(costs.total()),
            _ => allowed.iter().any(|a| *a),
        };
        let cheapest = if affordable {
            match mode {
                Mode::BenchmarkBoth => costs.total(),
                _ => costs.min(),
            }
        } else {
            f64::INFINITY
        };
        // Thresholds the next action would step past are scored on the current state.
        let mut report: Option<RegretReport> = None;
        while next_threshold < thresholds.len() && thresholds[next_threshold] < ledger.spent + cheapest - 1e-9 {
            if report.is_none() {
                report = Some(regret.regret(&state)?);
            }
            checkpoints.push(Checkpoint {
                cost: thresholds[next_threshold],
                iteration: iterations.len(),
                report: report.clone().expect("set above"),
            });
            next_threshold += 1;
        }
        if !affordable {
            break;
        }

        let iter = iterations.len() + 1;
        let draws = if mode == Mode::CmokgRandom { 1 } else { config.q };
        let lambdas = simplex_weights(&mut lambda_stream, draws);
        let choice = maximize_acquisition(&state, mode.acquisition(), &lambdas, &grid, &costs, &optimizer, Some(&allowed))?;

        let (objectives, cost): (Vec<usize>, f64) = match choice.choice {
            Choice::All => ((0..m_count).collect(), costs.total()),
            Choice::Objective(m) => (vec![m], costs.get(m)),
        };
        ledger.charge(cost)?;
        let mut ys = Vec::with_capacity(objectives.len());
        let mut touched = vec![false; m_count];
        for &m in &objectives {
            let y = problem.evaluate(&choice.x, m, &mut noise)?;
            ys.push(y);
            touched[m] = true;
            data.push(ObservationRecord::new(choice.x.clone(), m, y, costs.get(m)));
        }

        fit_cfg.seed = seeds.hyperfit.wrapping_add(iter as u64);
        fit = fit_map_selected(&data, &priors, (&fit.kernel, &fit.noise), &frozen_mean, &fit_cfg, &touched)?;
        state = build_state(problem.dim(), &fit, &data)?;
        iterations.push(IterationRecord {
            iter,
            x: choice.x,
            choice: choice.choice,
            y: ys,
            cost,
            cum_cost: ledger.spent,
            acquisition_value: choice.value,
            fell_back: choice.fell_back,
            hypers: snapshot(&fit),
        });
    }
    Ok(RunTrace { mode, seeds: *seeds, design, iterations, checkpoints, final_cost: ledger.spent })
}

/// One cell of an experiment.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub repeat: usize,
    pub mode: Mode,
    pub seeds: RunSeeds,
    pub outcome: std::result::Result<RunTrace, String>,
}

/// Per-mode, per-checkpoint summary over successful runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub mode: Mode,
    pub checkpoint_cost: f64,
    pub mean_regret: f64,
    /// Normal-approximation 95% halfwidth; `None` with fewer than two runs.
    pub ci95_halfwidth: Option<f64>,
    pub n_runs: usize,
}

/// Where an experiment's problems come from.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum ProblemSource {
    #[default]
    Generate,
    /// Archive files named by [`crate::problems::problem_file_name`].
    Directory(std::path::PathBuf),
}

impl ProblemSource {
    pub fn problem(&self, family: u8, seed: u64) -> Result<SyntheticProblem> {
        match self {
            ProblemSource::Generate => SyntheticProblem::generate(family, seed),
            ProblemSource::Directory(dir) => {
                let p = SyntheticProblem::load(&dir.join(crate::problems::problem_file_name(family, seed)))?;
                if p.family() != family || p.seed() != seed {
                    return Err(Error::Config(format!("problem file for family {family} seed {seed} describes family {} seed {}", p.family(), p.seed())));
                }
                Ok(p)
            }
        }
    }
}

/// Runs every mode on every repeat of `family` with paired seeds.
///
/// Repeat `i` uses `RunSeeds::derive(master_seed, i)` for all modes, so
/// the modes share the problem, initial design, noise and weight streams.
pub fn run_experiment(
    family: u8,
    modes: &[Mode],
    repeats: usize,
    master_seed: u64,
    config: &RunConfig,
    threads: Option<usize>,
) -> Result<Vec<RunResult>> {
    run_experiment_from(&ProblemSource::Generate, family, modes, repeats, master_seed, config, threads)
}

/// [`run_experiment`] with an explicit problem source.
pub fn run_experiment_from(
    source: &ProblemSource,
    family: u8,
    modes: &[Mode],
    repeats: usize,
    master_seed: u64,
    config: &RunConfig,
    threads: Option<usize>,
) -> Result<Vec<RunResult>> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    if modes.is_empty() {
        return Err(Error::Config("at least one mode is required".into()));
    }
    config.validate()?;
    let work = || -> Result<Vec<RunResult>> {
        let setups: Vec<(RunSeeds, SyntheticProblem)> = (0..repeats)
            .into_par_iter()
            .map(|i| {
                let seeds = RunSeeds::derive(master_seed, i as u64);
                source.problem(family, seeds.problem).map(|p| (seeds, p))
            })
            .collect::<Result<_>>()?;
        let evaluators: Vec<RegretEvaluator> = setups
            .par_iter()
            .map(|(seeds, p)| {
                let lambdas = regret_weights(p.num_objectives(), seeds.regret)?;
                RegretEvaluator::new(p, lambdas, Nsga2Config { seed: seeds.nsga, ..config.nsga.clone() })
            })
            .collect::<Result<_>>()?;
        let cells: Vec<(usize, Mode)> = (0..repeats).flat_map(|i| modes.iter().map(move |&m| (i, m))).collect();
        Ok(cells
            .into_par_iter()
            .map(|(i, mode)| {
                let (seeds, problem) = &setups[i];
                let outcome = run_bo(problem, mode, config, seeds, &evaluators[i]).map_err(|e| e.to_string());
                RunResult { repeat: i, mode, seeds: *seeds, outcome }
            })
            .collect())
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// One run's regret at one checkpoint, the unit of aggregation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegretSample {
    pub mode: Mode,
    pub problem_seed: u64,
    pub checkpoint_cost: f64,
    pub regret: f64,
}

/// Run-level samples of every successful run.
pub fn regret_samples(results: &[RunResult]) -> Vec<RegretSample> {
    results
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok())
        .flat_map(|t| {
            t.checkpoints.iter().map(move |c| RegretSample {
                mode: t.mode,
                problem_seed: t.seeds.problem,
                checkpoint_cost: c.cost,
                regret: c.report.regret,
            })
        })
        .collect()
}

/// Mean regret and 95% halfwidth per mode and checkpoint.
///
/// Rows follow the order of `modes`, then increasing checkpoint cost.
/// Samples are summed in problem-seed order so the input order does not
/// matter.
pub fn aggregate_samples(samples: &[RegretSample], modes: &[Mode]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &mode in modes {
        let mut mine: Vec<&RegretSample> = samples.iter().filter(|s| s.mode == mode).collect();
        mine.sort_by(|a, b| a.checkpoint_cost.total_cmp(&b.checkpoint_cost).then(a.problem_seed.cmp(&b.problem_seed)));
        for group in mine.chunk_by(|a, b| a.checkpoint_cost == b.checkpoint_cost) {
            let n = group.len();
            let mean = group.iter().map(|s| s.regret).sum::<f64>() / n as f64;
            let ci = (n >= 2).then(|| {
                let var = group.iter().map(|s| (s.regret - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                1.96 * (var / n as f64).sqrt()
            });
            rows.push(AggregateRow { mode, checkpoint_cost: group[0].checkpoint_cost, mean_regret: mean, ci95_halfwidth: ci, n_runs: n });
        }
    }
    rows
}

/// [`aggregate_samples`] over the successful runs; failed runs are excluded.
pub fn aggregate(results: &[RunResult], modes: &[Mode]) -> Vec<AggregateRow> {
    aggregate_samples(&regret_samples(results), modes)
}
