//! R2 indicator and Bayesian regret.
//!
//! Regret compares the best expected scalarized utility attainable on the
//! true function with the true utility of what the posterior mean would
//! recommend, both averaged over a fixed set of simplex weights. Both
//! maximizations are restricted to NSGA-II archives.

use serde::{Deserialize, Serialize};

use crate::pareto::{nsga2_maximize, Nsga2Config, ParetoArchive};
use crate::problems::SyntheticProblem;
use crate::qmc::simplex_weights;
use crate::{Error, Point, PosteriorState, Result, SimplexWeight, SobolStream};

/// Weight-set size used for every regret evaluation.
pub const REGRET_WEIGHT_COUNT: usize = 1024;
/// Archive size cap for both Pareto-set estimates.
pub const ARCHIVE_TARGET: usize = 1000;

/// `REGRET_WEIGHT_COUNT` scrambled-Sobol weights on the `M`-simplex.
pub fn regret_weights(num_objectives: usize, seed: u64) -> Result<Vec<SimplexWeight>> {
    if num_objectives < 2 {
        return Err(Error::InvalidParameter("regret needs at least two objectives".into()));
    }
    let mut stream = SobolStream::scrambled(num_objectives - 1, seed)?;
    Ok(simplex_weights(&mut stream, REGRET_WEIGHT_COUNT))
}

fn best_utility(lambda: &SimplexWeight, values: &[Vec<f64>]) -> f64 {
    values.iter().map(|v| lambda.dot(v)).fold(f64::NEG_INFINITY, f64::max)
}

/// Mean over `lambdas` of the best scalarized value in `values`.
///
/// `values` holds the true objective vectors of the solution set.
pub fn r2_indicator(values: &[Vec<f64>], lambdas: &[SimplexWeight]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("solution set"));
    }
    if lambdas.is_empty() {
        return Err(Error::Empty("weight set"));
    }
    Ok(lambdas.iter().map(|l| best_utility(l, values)).sum::<f64>() / lambdas.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub optimal_expected_utility: f64,
    pub expected_utility: f64,
    pub regret: f64,
    /// `regret / utility_range`.
    pub normalized_regret: f64,
    /// Standard error of the weight-set average.
    pub std_error: f64,
    /// Mean over weights of the spread of true utilities on the true archive.
    pub utility_range: f64,
    pub lambda_count: usize,
    pub true_archive_size: usize,
    pub model_archive_size: usize,
}

impl RegretReport {
    /// Tolerance below zero that regret may reach without indicating a bug.
    pub fn slack(&self) -> f64 {
        3.0 * self.std_error + 0.02 * self.utility_range
    }
}

/// Regret from explicit archives.
///
/// `true_values` are the true objective vectors of the true-function
/// archive. For the recommendation archive, `model_values` drive the
/// per-weight choice and `scored_values` (the true vectors at the same
/// points) score it. Ties pick the first archive entry.
pub fn regret_from_archives(
    true_values: &[Vec<f64>],
    model_values: &[Vec<f64>],
    scored_values: &[Vec<f64>],
    lambdas: &[SimplexWeight],
) -> Result<RegretReport> {
    if true_values.is_empty() || model_values.is_empty() {
        return Err(Error::Empty("archive"));
    }
    if lambdas.is_empty() {
        return Err(Error::Empty("weight set"));
    }
    if model_values.len() != scored_values.len() {
        return Err(Error::DimensionMismatch { expected: model_values.len(), got: scored_values.len() });
    }
    let n = lambdas.len() as f64;
    let mut opt_sum = 0.0;
    let mut got_sum = 0.0;
    let mut gaps = Vec::with_capacity(lambdas.len());
    let mut range_sum = 0.0;
    for l in lambdas {
        let mut best = f64::NEG_INFINITY;
        let mut worst = f64::INFINITY;
        for v in true_values {
            let u = l.dot(v);
            best = best.max(u);
            worst = worst.min(u);
        }
        let mut pick = 0;
        let mut pick_value = f64::NEG_INFINITY;
        for (i, v) in model_values.iter().enumerate() {
            let u = l.dot(v);
            if u > pick_value {
                pick_value = u;
                pick = i;
            }
        }
        let got = l.dot(&scored_values[pick]);
        opt_sum += best;
        got_sum += got;
        range_sum += best - worst;
        gaps.push(best - got);
    }
    let optimal = opt_sum / n;
    let expected = got_sum / n;
    // Mean of per-weight gaps rather than `optimal - expected`, so the
    // result equals a direct enumeration bit for bit.
    let regret = gaps.iter().sum::<f64>() / n;
    let var = if gaps.len() > 1 {
        gaps.iter().map(|g| (g - regret).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let utility_range = range_sum / n;
    Ok(RegretReport {
        optimal_expected_utility: optimal,
        expected_utility: expected,
        regret,
        normalized_regret: if utility_range > 0.0 { regret / utility_range } else { regret },
        std_error: (var / n).sqrt(),
        utility_range,
        lambda_count: lambdas.len(),
        true_archive_size: true_values.len(),
        model_archive_size: model_values.len(),
    })
}

/// Regret evaluation for one problem with its true archive computed once.
#[derive(Clone, Debug)]
pub struct RegretEvaluator<'a> {
    problem: &'a SyntheticProblem,
    lambdas: Vec<SimplexWeight>,
    nsga: Nsga2Config,
    true_archive: ParetoArchive,
}

impl<'a> RegretEvaluator<'a> {
    pub fn new(problem: &'a SyntheticProblem, lambdas: Vec<SimplexWeight>, nsga: Nsga2Config) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::Empty("weight set"));
        }
        let true_archive = nsga2_maximize(|x| problem.true_values(x), problem.dim(), &nsga, ARCHIVE_TARGET)?;
        Ok(Self { problem, lambdas, nsga, true_archive })
    }

    pub fn lambdas(&self) -> &[SimplexWeight] {
        &self.lambdas
    }

    pub fn true_archive(&self) -> &ParetoArchive {
        &self.true_archive
    }

    /// Archive of the posterior mean's Pareto set.
    pub fn model_archive(&self, state: &PosteriorState) -> Result<ParetoArchive> {
        nsga2_maximize(|x| state.mean_vector(x), self.problem.dim(), &self.nsga, ARCHIVE_TARGET)
    }

    /// Regret of recommending from `candidates`, chosen by `state`'s mean.
    pub fn regret_of_points(&self, state: &PosteriorState, candidates: &[Point]) -> Result<RegretReport> {
        let model: Vec<Vec<f64>> = candidates.iter().map(|x| state.mean_vector(x)).collect();
        let scored: Vec<Vec<f64>> = candidates.iter().map(|x| self.problem.true_values(x)).collect();
        regret_from_archives(&self.true_archive.values, &model, &scored, &self.lambdas)
    }

    pub fn regret(&self, state: &PosteriorState) -> Result<RegretReport> {
        let archive = self.model_archive(state)?;
        let scored: Vec<Vec<f64>> = archive.points.iter().map(|x| self.problem.true_values(x)).collect();
        regret_from_archives(&self.true_archive.values, &archive.values, &scored, &self.lambdas)
    }
}

/// One-shot regret; builds the true archive every call.
pub fn bayesian_regret(
    state: &PosteriorState,
    problem: &SyntheticProblem,
    lambdas: &[SimplexWeight],
    nsga: &Nsga2Config,
) -> Result<RegretReport> {
    RegretEvaluator::new(problem, lambdas.to_vec(), nsga.clone())?.regret(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::ObservationRecord;
    use crate::{KernelSpec, NoiseModel};
    use proptest::prelude::*;

    #[test]
    fn r2_singleton_symmetric_weights() {
        let lambdas: Vec<SimplexWeight> =
            [0.1, 0.9, 0.3, 0.7].iter().map(|&u| SimplexWeight::new(vec![u, 1.0 - u]).unwrap()).collect();
        let r = r2_indicator(&[vec![2.0, 5.0]], &lambdas).unwrap();
        assert!((r - 3.5).abs() < 1e-12);
        assert!(r2_indicator(&[], &lambdas).is_err());
    }

    #[test]
    fn r2_matches_enumeration() {
        let lambdas = regret_weights(2, 3).unwrap();
        let s = vec![vec![1.0, 0.0], vec![0.6, 0.6], vec![0.0, 1.0]];
        let mut expected = 0.0;
        for l in &lambdas {
            let (a, b) = (l[0], l[1]);
            let mut best = f64::NEG_INFINITY;
            for p in &s {
                best = best.max(a * p[0] + b * p[1]);
            }
            expected += best;
        }
        expected /= lambdas.len() as f64;
        assert_eq!(r2_indicator(&s, &lambdas).unwrap(), expected);
    }

    #[test]
    fn weights_are_on_simplex() {
        let w = regret_weights(2, 1).unwrap();
        assert_eq!(w.len(), REGRET_WEIGHT_COUNT);
        let mean: f64 = w.iter().map(|l| l[0]).sum::<f64>() / w.len() as f64;
        assert!((mean - 0.5).abs() < 1e-3);
        assert_eq!(regret_weights(3, 1).unwrap()[5].len(), 3);
    }

    #[test]
    fn single_weight_reduces_to_single_objective() {
        let lambdas = vec![SimplexWeight::vertex(0, 2)];
        let truth = vec![vec![3.0, 0.0], vec![1.0, 9.0]];
        let model = vec![vec![0.0, 5.0], vec![2.0, 1.0], vec![1.0, 7.0]];
        let scored = vec![vec![2.5, 0.0], vec![1.5, 0.0], vec![3.0, 0.0]];
        let r = regret_from_archives(&truth, &model, &scored, &lambdas).unwrap();
        assert_eq!(r.regret, 3.0 - 1.5);
    }

    #[test]
    fn exact_model_gives_small_regret() {
        let problem = SyntheticProblem::generate(1, 11).unwrap();
        let kernel = KernelSpec::matern52(vec![0.2, 1.8], vec![1.0, 50.0], vec![0.0, 0.0]).unwrap();
        let mut obs = Vec::new();
        for (x, v) in problem.archive().locations.iter().zip(&problem.archive().values) {
            for m in 0..2 {
                obs.push(ObservationRecord::new(x.clone(), m, v[m], 0.0));
            }
        }
        let state = PosteriorState::prior(2, kernel, NoiseModel::fixed(0.0, 2).unwrap()).unwrap().condition(&obs).unwrap();
        let lambdas = regret_weights(2, 8).unwrap();
        let eval = RegretEvaluator::new(&problem, lambdas, Nsga2Config::default()).unwrap();
        let r = eval.regret(&state).unwrap();
        assert!(r.regret.abs() <= 0.02 * r.utility_range, "{r:?}");
        let self_regret = eval.regret_of_points(&state, &eval.true_archive().points).unwrap();
        assert!(self_regret.regret.abs() <= 1e-9 * (1.0 + r.utility_range));
    }

    proptest! {
        #[test]
        fn permuting_weights_keeps_regret(seed in 0u64..50, rot in 1usize..100) {
            let lambdas: Vec<SimplexWeight> = regret_weights(2, seed).unwrap().into_iter().take(128).collect();
            let truth = vec![vec![1.0, 0.0], vec![0.7, 0.7], vec![0.0, 1.0]];
            let model = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.5, 0.5]];
            let scored = vec![vec![0.8, 0.0], vec![0.1, 0.9], vec![0.6, 0.6]];
            let a = regret_from_archives(&truth, &model, &scored, &lambdas).unwrap();
            let mut rotated = lambdas.clone();
            rotated.rotate_left(rot % lambdas.len());
            let b = regret_from_archives(&truth, &model, &scored, &rotated).unwrap();
            prop_assert!((a.regret - b.regret).abs() < 1e-12);
            prop_assert!(a.regret >= -1e-12);
        }
    }
}
