//! Maximizing acquisitions over the unit box and choosing `(x, m)`.

use serde::{Deserialize, Serialize};

use crate::gp::{unit_grid_2d, PosteriorState};
use crate::kg::{normal_draws, CostVector, KgEvaluator, DEFAULT_FANTASY_COUNT};
use crate::optim::{minimize_bounded_fd, LocalSearchConfig};
use crate::qmc::{SimplexWeight, SobolStream};
use crate::{Error, Point, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Local searches per objective, started from the best seed points.
    pub restarts: usize,
    pub max_iterations: usize,
    /// Points per axis of the coarse seeding grid.
    pub seed_grid: usize,
    pub finite_difference_step: f64,
    /// qMC fantasy draws for the joint-observation benchmark.
    pub fantasy_count: usize,
    pub fantasy_seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 50,
            seed_grid: 21,
            finite_difference_step: 1e-4,
            fantasy_count: DEFAULT_FANTASY_COUNT,
            fantasy_seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.seed_grid == 0 || self.fantasy_count == 0 {
            return Err(Error::InvalidParameter("restarts, seed_grid and fantasy_count must be >= 1".into()));
        }
        if !(self.finite_difference_step > 0.0) {
            return Err(Error::InvalidParameter("finite_difference_step must be positive".into()));
        }
        Ok(())
    }

    fn local(&self) -> LocalSearchConfig {
        LocalSearchConfig { max_iterations: self.max_iterations, gradient_tolerance: 1e-8, value_tolerance: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcquisitionMode {
    /// C-MOKG averaged over the supplied weights.
    Expectation,
    /// C-MOKG for a single weight.
    Random,
    /// Joint-observation KG averaged over the weights; always evaluates every objective.
    Benchmark,
}

/// Which objectives to evaluate next.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    Objective(usize),
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionChoice {
    pub x: Point,
    pub choice: Choice,
    /// Cost-weighted acquisition value at `x`.
    pub value: f64,
    /// The local search diverged and the best seed point was used.
    pub fell_back: bool,
}

/// Seed points for a box search, in lexicographic order.
pub fn seed_points(dim: usize, per_axis: usize) -> Vec<Point> {
    if dim == 2 {
        return unit_grid_2d(per_axis);
    }
    if dim == 1 {
        return unit_grid_2d(per_axis).into_iter().filter(|p| p[1] == 0.0).map(|p| vec![p[0]]).collect();
    }
    let mut s = SobolStream::unscrambled(dim).expect("supported dimension");
    let mut pts = s.next_points(per_axis * per_axis);
    pts.sort_by(|a, b| lex_cmp(a, b));
    pts
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// `true` when `(va, xa)` beats `(vb, xb)`: larger value, then smaller point.
fn better(va: f64, xa: &[f64], vb: f64, xb: &[f64]) -> bool {
    va > vb || (va == vb && lex_cmp(xa, xb) == std::cmp::Ordering::Less)
}

/// Multistart maximization of `f` over `[0,1]^dim`.
///
/// Returns the best point, its value and whether every local search
/// diverged.
pub fn maximize_on_box<F>(f: F, dim: usize, cfg: &OptimizerConfig) -> (Point, f64, bool)
where
    F: Fn(&[f64]) -> f64,
{
    let seeds = seed_points(dim, cfg.seed_grid);
    let mut scored: Vec<(f64, usize)> = seeds
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let v = f(s);
            (if v.is_finite() { v } else { f64::NEG_INFINITY }, i)
        })
        .collect();
    // Stable: equal values keep lexicographic seed order.
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let (seed_value, seed_index) = scored[0];
    let mut best = (seeds[seed_index].clone(), seed_value);
    let lower = vec![0.0; dim];
    let upper = vec![1.0; dim];
    let local = cfg.local();
    let mut any_finite = false;
    for &(v, i) in scored.iter().take(cfg.restarts) {
        if !v.is_finite() {
            continue;
        }
        let r = minimize_bounded_fd(|x| -f(x), &seeds[i], &lower, &upper, cfg.finite_difference_step, &local);
        let value = -r.value;
        if !value.is_finite() {
            continue;
        }
        any_finite = true;
        if better(value, &r.x, best.1, &best.0) {
            best = (r.x, value);
        }
    }
    (best.0, best.1, !any_finite)
}

/// Maximizes the mode's acquisition and picks the objective to evaluate.
///
/// `allowed[m]` marks objectives that may be chosen (all when `None`).
pub fn maximize_acquisition(
    state: &PosteriorState,
    mode: AcquisitionMode,
    lambdas: &[SimplexWeight],
    grid: &[Point],
    costs: &CostVector,
    config: &OptimizerConfig,
    allowed: Option<&[bool]>,
) -> Result<AcquisitionChoice> {
    config.validate()?;
    if lambdas.is_empty() {
        return Err(Error::Empty("scalarization weights"));
    }
    if mode == AcquisitionMode::Random && lambdas.len() != 1 {
        return Err(Error::InvalidParameter(format!("random mode takes exactly one weight, got {}", lambdas.len())));
    }
    let m_count = state.num_objectives();
    if costs.len() != m_count {
        return Err(Error::DimensionMismatch { expected: m_count, got: costs.len() });
    }
    let eval = KgEvaluator::new(state, grid, lambdas)?;
    let dim = state.dim();

    if mode == AcquisitionMode::Benchmark {
        let draws = normal_draws(m_count - 1, config.fantasy_count, config.fantasy_seed)?;
        let (x, v, fell_back) = maximize_on_box(|x| eval.joint_average(x, &draws).value, dim, config);
        return Ok(AcquisitionChoice { x, choice: Choice::All, value: v / costs.total(), fell_back });
    }

    let mut best: Option<AcquisitionChoice> = None;
    for m in 0..m_count {
        if let Some(mask) = allowed {
            if !mask.get(m).copied().unwrap_or(false) {
                continue;
            }
        }
        let (x, v, fell_back) = maximize_on_box(|x| eval.mokg_average(x, m), dim, config);
        let value = v / costs.get(m);
        let replace = match &best {
            None => true,
            // Lower objective index wins ties because it was visited first.
            Some(b) => value > b.value,
        };
        if replace {
            best = Some(AcquisitionChoice { x, choice: Choice::Objective(m), value, fell_back });
        }
    }
    best.ok_or(Error::Empty("allowed objectives"))
}

/// The maximizer of the scalarized posterior mean `λ · μ(x)`.
pub fn maximize_posterior_mean(state: &PosteriorState, lambda: &SimplexWeight, config: &OptimizerConfig) -> Point {
    maximize_on_box(|x| lambda.dot(&state.mean_vector(x)), state.dim(), config).0
}
