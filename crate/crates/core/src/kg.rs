//! Discrete knowledge gradient of a scalarized posterior.
//!
//! For a candidate `(x, m)` the scalarized posterior mean over a finite
//! grid after observing `f_m(x)` is affine in a standard normal variable,
//! `a(x') + b(x') Z`. The expected grid maximum of such an ensemble is
//! computed exactly from its upper envelope.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::gp::{GridCache, PosteriorState};
use crate::normal;
use crate::qmc::{SimplexWeight, SobolStream};
use crate::{Error, Result};

/// Slopes closer than this are treated as parallel.
pub const PARALLEL_TOLERANCE: f64 = 1e-12;

/// Known, constant evaluation cost of each objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::Empty("cost vector"));
        }
        if costs.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("costs must be positive: {costs:?}")));
        }
        Ok(Self(costs))
    }

    pub fn get(&self, m: usize) -> f64 {
        self.0[m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Intercepts and slopes of the fantasy lines, one per grid point, plus
/// the current grid maximum of the scalarized posterior mean.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineEnsemble {
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub baseline: f64,
}

/// Upper envelope of a set of lines `a_j + b_j z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Epigraph {
    /// Indices of the lines on the envelope, by increasing slope.
    pub lines: Vec<usize>,
    /// `lines[k]` is maximal on `[breakpoints[k-1], breakpoints[k]]`.
    pub breakpoints: Vec<f64>,
}

fn slope_order(a: &[f64], b: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| b[i].total_cmp(&b[j]).then(a[j].total_cmp(&a[i])).then(i.cmp(&j)));
    order
}

/// Envelope sweep over lines already sorted by slope (ties: larger intercept first).
/// `starts[k]` is the left end of the interval where `kept[k]` is maximal.
fn envelope_sorted(a: &[f64], b: &[f64], order: &[usize], kept: &mut Vec<usize>, starts: &mut Vec<f64>) {
    kept.clear();
    starts.clear();
    'lines: for &i in order {
        while let Some(&top) = kept.last() {
            if b[i] - b[top] <= PARALLEL_TOLERANCE {
                if a[i] > a[top] {
                    kept.pop();
                    starts.pop();
                    continue;
                }
                continue 'lines;
            }
            let z = (a[top] - a[i]) / (b[i] - b[top]);
            if z <= *starts.last().expect("starts tracks kept") {
                kept.pop();
                starts.pop();
            } else {
                kept.push(i);
                starts.push(z);
                continue 'lines;
            }
        }
        kept.push(i);
        starts.push(f64::NEG_INFINITY);
    }
}

/// The upper envelope of `{a_j + b_j z}`.
pub fn epigraph(a: &[f64], b: &[f64]) -> Result<Epigraph> {
    check_lines(a, b)?;
    let order = slope_order(a, b);
    let (mut lines, mut starts) = (Vec::new(), Vec::new());
    envelope_sorted(a, b, &order, &mut lines, &mut starts);
    Ok(Epigraph { lines, breakpoints: starts[1..].to_vec() })
}

fn check_lines(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Empty("affine lines"));
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(())
}

/// `E[max_j (a_j + b_j Z)]` for standard normal `Z`, integrated piece by
/// piece over the envelope.
pub fn expected_max_affine(a: &[f64], b: &[f64]) -> Result<f64> {
    let epi = epigraph(a, b)?;
    let mut total = 0.0;
    let mut lo = f64::NEG_INFINITY;
    for (k, &j) in epi.lines.iter().enumerate() {
        let hi = epi.breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
        total += a[j] * (normal::cdf(hi) - normal::cdf(lo)) + b[j] * (pdf_ext(lo) - pdf_ext(hi));
        lo = hi;
    }
    Ok(total)
}

fn pdf_ext(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        normal::pdf(z)
    }
}

/// `E[max_j (a_j + b_j Z)] - max_j a_j`, summed over the envelope's
/// breakpoints as non-negative terms.
pub fn expected_gain(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lines(a, b)?;
    let order = slope_order(a, b);
    let mut scratch = EnvelopeScratch::default();
    Ok(scratch.gain(a, b, &order))
}

#[derive(Default)]
struct EnvelopeScratch {
    kept: Vec<usize>,
    starts: Vec<f64>,
}

impl EnvelopeScratch {
    fn gain(&mut self, a: &[f64], b: &[f64], order: &[usize]) -> f64 {
        envelope_sorted(a, b, order, &mut self.kept, &mut self.starts);
        self.kept
            .windows(2)
            .zip(&self.starts[1..])
            .map(|(w, &z)| (b[w[1]] - b[w[0]]) * normal::expected_positive_part(-z.abs()))
            .sum()
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl McEstimate {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { value: mean, std_error: (var / n).sqrt() }
    }
}

/// Per-grid-point fantasy sensitivity of objective `m` at a candidate.
///
/// `sensitivity[g] = cov(f_m(g), f_m(x)) / sqrt(var f_m(x) + σ_m²)`; the
/// fantasy slope for weight λ is `λ_m * sensitivity`.
#[derive(Clone, Debug)]
struct Fantasy {
    sensitivity: Vec<f64>,
    order: Vec<usize>,
}

/// Knowledge-gradient evaluator for one posterior, grid and weight set.
///
/// Holds everything that does not depend on the candidate location so the
/// acquisition optimizer can evaluate many candidates cheaply.
pub struct KgEvaluator<'a> {
    state: &'a PosteriorState,
    cache: GridCache,
    lambdas: Vec<SimplexWeight>,
    intercepts: Vec<Vec<f64>>,
    baselines: Vec<f64>,
}

impl<'a> KgEvaluator<'a> {
    pub fn new(state: &'a PosteriorState, grid: &[Vec<f64>], lambdas: &[SimplexWeight]) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Empty("inner grid"));
        }
        let m = state.num_objectives();
        for l in lambdas {
            if l.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: l.len() });
            }
        }
        let cache = state.grid_cache(grid);
        let intercepts: Vec<Vec<f64>> = lambdas
            .iter()
            .map(|l| (0..grid.len()).map(|g| (0..m).map(|j| l[j] * cache.mean(j)[g]).sum()).collect())
            .collect();
        let baselines = intercepts.iter().map(|a| max_of(a)).collect();
        Ok(Self { state, cache, lambdas: lambdas.to_vec(), intercepts, baselines })
    }

    pub fn state(&self) -> &PosteriorState {
        self.state
    }

    pub fn lambdas(&self) -> &[SimplexWeight] {
        &self.lambdas
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        self.cache.points()
    }

    /// Scalarized current posterior mean on the grid for weight `k`.
    pub fn intercepts(&self, k: usize) -> &[f64] {
        &self.intercepts[k]
    }

    pub fn baseline(&self, k: usize) -> f64 {
        self.baselines[k]
    }

    fn fantasy(&self, x: &[f64], m: usize) -> Fantasy {
        let (var, cov) = self.state.cross_covariance(m, x, &self.cache);
        let total = var.max(0.0) + self.state.observation_variance(m);
        let sensitivity: Vec<f64> = if total > 0.0 && total.is_finite() {
            let inv = 1.0 / total.sqrt();
            cov.iter().map(|c| c * inv).collect()
        } else {
            vec![0.0; cov.len()]
        };
        let mut order: Vec<usize> = (0..sensitivity.len()).collect();
        order.sort_by(|&i, &j| sensitivity[i].total_cmp(&sensitivity[j]).then(i.cmp(&j)));
        Fantasy { sensitivity, order }
    }

    /// The affine fantasy ensemble for weight `k`.
    pub fn affine(&self, x: &[f64], m: usize, k: usize) -> AffineEnsemble {
        let f = self.fantasy(x, m);
        let w = self.lambdas[k][m];
        AffineEnsemble {
            intercepts: self.intercepts[k].clone(),
            slopes: f.sensitivity.iter().map(|s| w * s).collect(),
            baseline: self.baselines[k],
        }
    }

    fn gain_for(&self, f: &Fantasy, m: usize, k: usize, scratch: &mut EnvelopeScratch, slopes: &mut Vec<f64>) -> f64 {
        let w = self.lambdas[k][m];
        if w == 0.0 {
            return 0.0;
        }
        slopes.clear();
        slopes.extend(f.sensitivity.iter().map(|s| w * s));
        let a = &self.intercepts[k];
        // Ties in slope must list the larger intercept first.
        let order = tie_sorted(&f.order, slopes, a);
        scratch.gain(a, slopes, &order)
    }

    /// Discrete MOKG for weight `k` (no cost weighting).
    pub fn mokg(&self, x: &[f64], m: usize, k: usize) -> f64 {
        let f = self.fantasy(x, m);
        self.gain_for(&f, m, k, &mut EnvelopeScratch::default(), &mut Vec::new())
    }

    /// Discrete MOKG averaged over every weight (no cost weighting).
    pub fn mokg_average(&self, x: &[f64], m: usize) -> f64 {
        if self.lambdas.is_empty() {
            return 0.0;
        }
        let f = self.fantasy(x, m);
        let mut scratch = EnvelopeScratch::default();
        let mut slopes = Vec::with_capacity(f.sensitivity.len());
        let total: f64 = (0..self.lambdas.len()).map(|k| self.gain_for(&f, m, k, &mut scratch, &mut slopes)).sum();
        total / self.lambdas.len() as f64
    }

    /// Knowledge gradient for observing every objective at `x` jointly,
    /// averaged over the weights.
    ///
    /// The expectation over the first objective's fantasy is exact; the
    /// remaining objectives are integrated with the supplied standard-normal
    /// draws (each of length `M - 1`).
    pub fn joint_average(&self, x: &[f64], draws: &[Vec<f64>]) -> McEstimate {
        let fantasies = self.fantasies(x);
        let mut scratch = JointScratch::default();
        let per_weight: Vec<McEstimate> =
            (0..self.lambdas.len()).map(|k| self.joint_with(&fantasies, k, draws, &mut scratch)).collect();
        let n = per_weight.len().max(1) as f64;
        McEstimate {
            value: per_weight.iter().map(|e| e.value).sum::<f64>() / n,
            std_error: per_weight.iter().map(|e| e.std_error).sum::<f64>() / n,
        }
    }

    /// Joint-observation knowledge gradient for weight `k`.
    pub fn joint(&self, x: &[f64], k: usize, draws: &[Vec<f64>]) -> McEstimate {
        self.joint_with(&self.fantasies(x), k, draws, &mut JointScratch::default())
    }

    fn fantasies(&self, x: &[f64]) -> Vec<Fantasy> {
        (0..self.state.num_objectives()).map(|m| self.fantasy(x, m)).collect()
    }

    fn joint_with(&self, fantasies: &[Fantasy], k: usize, draws: &[Vec<f64>], scratch: &mut JointScratch) -> McEstimate {
        let m_count = fantasies.len();
        let lambda = &self.lambdas[k];
        let base = &self.intercepts[k];
        let n = base.len();
        scratch.slopes.clear();
        scratch.slopes.extend(fantasies[0].sensitivity.iter().map(|s| lambda[0] * s));
        let single = [Vec::new()];
        let draws: &[Vec<f64>] = if m_count == 1 { &single } else { draws };
        let mut samples = Vec::with_capacity(draws.len());
        scratch.shifted.resize(n, 0.0);
        for w in draws {
            for (g, s) in scratch.shifted.iter_mut().enumerate() {
                *s = base[g];
                for m in 1..m_count {
                    *s += lambda[m] * fantasies[m].sensitivity[g] * w[m - 1];
                }
            }
            // Scaling by λ_0 >= 0 keeps the sensitivity order; only ties need
            // the intercept tie-break.
            let order = tie_sorted(&fantasies[0].order, &scratch.slopes, &scratch.shifted);
            let gain = scratch.envelope.gain(&scratch.shifted, &scratch.slopes, &order);
            samples.push(gain + max_of(&scratch.shifted) - self.baselines[k]);
        }
        McEstimate::from_samples(&samples)
    }
}

#[derive(Default)]
struct JointScratch {
    envelope: EnvelopeScratch,
    slopes: Vec<f64>,
    shifted: Vec<f64>,
}

/// Reorders a slope-sorted index list so equal slopes list larger intercepts first.
fn tie_sorted(order: &[usize], slopes: &[f64], a: &[f64]) -> Vec<usize> {
    let mut out = order.to_vec();
    let mut start = 0;
    while start < out.len() {
        let mut end = start + 1;
        while end < out.len() && slopes[out[end]] == slopes[out[start]] {
            end += 1;
        }
        if end - start > 1 {
            out[start..end].sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));
        }
        start = end;
    }
    out
}

/// Standard-normal qMC draws of dimension `dim` for joint fantasies.
pub fn normal_draws(dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Ok(vec![Vec::new(); count.max(1)]);
    }
    let mut stream = SobolStream::scrambled(dim, seed)?;
    Ok(stream
        .next_points(count)
        .into_iter()
        .map(|u| u.into_iter().map(normal::quantile).collect())
        .collect())
}

/// The affine fantasy ensemble for observing objective `m` at `x`.
pub fn fantasy_affine(
    state: &PosteriorState,
    x: &[f64],
    m: usize,
    lambda: &SimplexWeight,
    grid: &[Vec<f64>],
) -> Result<AffineEnsemble> {
    check_objective(state, m)?;
    let eval = KgEvaluator::new(state, grid, std::slice::from_ref(lambda))?;
    Ok(eval.affine(x, m, 0))
}

fn check_objective(state: &PosteriorState, m: usize) -> Result<()> {
    if m >= state.num_objectives() {
        return Err(Error::ObjectiveIndex { index: m, count: state.num_objectives() });
    }
    Ok(())
}

/// Discrete multi-objective knowledge gradient for one weight.
pub fn mokg_discrete(
    state: &PosteriorState,
    x: &[f64],
    m: usize,
    lambda: &SimplexWeight,
    grid: &[Vec<f64>],
) -> Result<f64> {
    check_objective(state, m)?;
    let eval = KgEvaluator::new(state, grid, std::slice::from_ref(lambda))?;
    Ok(eval.mokg(x, m, 0))
}

/// Cost-weighted MOKG: `mokg_discrete / c_m`.
pub fn cmokg(
    state: &PosteriorState,
    x: &[f64],
    m: usize,
    lambda: &SimplexWeight,
    grid: &[Vec<f64>],
    costs: &CostVector,
) -> Result<f64> {
    Ok(mokg_discrete(state, x, m, lambda, grid)? / costs.get(m))
}

/// Cost-weighted MOKG averaged over a weight sample.
pub fn cmokg_expectation(
    state: &PosteriorState,
    x: &[f64],
    m: usize,
    lambdas: &[SimplexWeight],
    grid: &[Vec<f64>],
    costs: &CostVector,
) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(Error::Empty("scalarization weights"));
    }
    check_objective(state, m)?;
    let eval = KgEvaluator::new(state, grid, lambdas)?;
    Ok(eval.mokg_average(x, m) / costs.get(m))
}

/// Default number of qMC fantasy draws for the joint-observation benchmark.
pub const DEFAULT_FANTASY_COUNT: usize = 64;

/// Knowledge gradient when every objective is observed at `x`.
pub fn mokg_joint_benchmark(
    state: &PosteriorState,
    x: &[f64],
    lambda: &SimplexWeight,
    grid: &[Vec<f64>],
    fantasy_count: usize,
    seed: u64,
) -> Result<McEstimate> {
    if fantasy_count == 0 {
        return Err(Error::InvalidParameter("fantasy_count must be >= 1".into()));
    }
    let eval = KgEvaluator::new(state, grid, std::slice::from_ref(lambda))?;
    let draws = normal_draws(state.num_objectives() - 1, fantasy_count, seed)?;
    Ok(eval.joint(x, 0, &draws))
}

/// Residual uncertainty `E[max λ·f] - max λ·μ` over `grid`, estimated
/// from joint posterior samples.
pub fn residual_uncertainty_mc(
    state: &PosteriorState,
    lambda: &SimplexWeight,
    grid: &[Vec<f64>],
    sample_count: usize,
    seed: u64,
) -> Result<McEstimate> {
    if sample_count == 0 {
        return Err(Error::InvalidParameter("sample_count must be >= 1".into()));
    }
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    let m_count = state.num_objectives();
    if lambda.len() != m_count {
        return Err(Error::DimensionMismatch { expected: m_count, got: lambda.len() });
    }
    let g = grid.len();
    let means: Vec<Vec<f64>> = (0..m_count).map(|m| grid.iter().map(|x| state.mean(m, x)).collect()).collect();
    let scalar_mean: Vec<f64> = (0..g).map(|i| (0..m_count).map(|m| lambda[m] * means[m][i]).sum()).collect();
    let baseline = max_of(&scalar_mean);
    let factors: Vec<Option<nalgebra::DMatrix<f64>>> = (0..m_count)
        .map(|m| {
            if lambda[m] == 0.0 {
                return None;
            }
            psd_factor(state.covariance_matrix(m, grid))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(sample_count);
    let mut z = nalgebra::DVector::<f64>::zeros(g);
    for _ in 0..sample_count {
        let mut scalar = scalar_mean.clone();
        for (m, f) in factors.iter().enumerate() {
            if let Some(l) = f {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let draw = l * &z;
                for (s, d) in scalar.iter_mut().zip(draw.iter()) {
                    *s += lambda[m] * d;
                }
            }
        }
        samples.push(max_of(&scalar) - baseline);
    }
    Ok(McEstimate::from_samples(&samples))
}

/// Cholesky factor of a covariance matrix with escalating jitter, or
/// `None` when the matrix is numerically zero.
fn psd_factor(cov: nalgebra::DMatrix<f64>) -> Option<nalgebra::DMatrix<f64>> {
    let scale = cov.diagonal().iter().copied().fold(0.0, f64::max);
    if scale <= 1e-12 {
        return None;
    }
    let mut jitter = 1e-12 * scale;
    loop {
        let mut c = cov.clone();
        for i in 0..c.nrows() {
            c[(i, i)] += jitter;
        }
        if let Some(ch) = c.cholesky() {
            return Some(ch.unpack());
        }
        jitter *= 10.0;
        if jitter > 1e-3 * scale {
            // Fall back to the symmetric eigendecomposition.
            let eig = nalgebra::SymmetricEigen::new(cov);
            let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            return Some(&eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&sqrt_vals));
        }
    }
}
