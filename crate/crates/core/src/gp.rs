//! Independent multi-output Gaussian process with per-objective noise.
//!
//! Each objective has its own Matérn-5/2 kernel, constant prior mean and
//! observation-noise variance. Hyperparameters live in a standardized
//! "model space"; a per-objective [`Standardization`] maps raw objective
//! values into that space on conditioning and back out on prediction, so
//! every public prediction is in raw objective units.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Diagonal jitter relative to the output scale.
pub const JITTER: f64 = 1e-6;

/// Noise variance used for objectives treated as noiseless.
pub const FIXED_NOISE_VARIANCE: f64 = 1e-4;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Matérn-5/2 covariance between two points.
pub fn matern52(x: &[f64], x2: &[f64], length_scale: f64, output_scale: f64) -> Result<f64> {
    if !(length_scale > 0.0) || !(output_scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "matern52 needs positive scales, got length {length_scale}, output {output_scale}"
        )));
    }
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: x2.len() });
    }
    Ok(matern52_sq(sq_dist(x, x2), length_scale, output_scale))
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], x2: &[f64]) -> f64 {
    x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn matern52_sq(sq_dist: f64, length_scale: f64, output_scale: f64) -> f64 {
    let u = SQRT5 * sq_dist.sqrt() / length_scale;
    output_scale * (1.0 + u + u * u / 3.0) * (-u).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    Matern52,
}

/// Per-objective kernel hyperparameters in model space.
///
/// `output_scale` is a variance; `constant_mean` is in standardized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub length_scale: Vec<f64>,
    pub output_scale: Vec<f64>,
    pub constant_mean: Vec<f64>,
}

impl KernelSpec {
    pub fn matern52(length_scale: Vec<f64>, output_scale: Vec<f64>, constant_mean: Vec<f64>) -> Result<Self> {
        let spec = Self { family: KernelFamily::Matern52, length_scale, output_scale, constant_mean };
        spec.validate()?;
        Ok(spec)
    }

    pub fn num_objectives(&self) -> usize {
        self.length_scale.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.length_scale.len();
        if m == 0 {
            return Err(Error::Empty("kernel objectives"));
        }
        for len in [self.output_scale.len(), self.constant_mean.len()] {
            if len != m {
                return Err(Error::DimensionMismatch { expected: m, got: len });
            }
        }
        for (i, (&ls, &os)) in self.length_scale.iter().zip(&self.output_scale).enumerate() {
            if !(ls > 0.0 && ls.is_finite()) || !(os > 0.0 && os.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "objective {i}: length scale {ls} and output scale {os} must be positive"
                )));
            }
        }
        if self.constant_mean.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite constant mean".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn covariance(&self, m: usize, x: &[f64], x2: &[f64]) -> f64 {
        matern52_sq(sq_dist(x, x2), self.length_scale[m], self.output_scale[m])
    }
}

/// Per-objective observation-noise variances in model space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub noise_variance: Vec<f64>,
    pub learnable: Vec<bool>,
}

impl NoiseModel {
    pub fn new(noise_variance: Vec<f64>, learnable: Vec<bool>) -> Result<Self> {
        if noise_variance.len() != learnable.len() {
            return Err(Error::DimensionMismatch { expected: noise_variance.len(), got: learnable.len() });
        }
        if noise_variance.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise variances must be >= 0: {noise_variance:?}")));
        }
        Ok(Self { noise_variance, learnable })
    }

    /// Every objective fixed at the same variance.
    pub fn fixed(variance: f64, count: usize) -> Result<Self> {
        Self::new(vec![variance; count], vec![false; count])
    }
}

/// Affine map `z = (y - shift) / scale` between raw and standardized values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub shift: f64,
    pub scale: f64,
}

impl Default for Standardization {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Standardization {
    pub const IDENTITY: Self = Self { shift: 0.0, scale: 1.0 };

    /// Mean and population standard deviation of `values`; a zero spread
    /// (or a single value) clamps the scale to 1.
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::IDENTITY;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        Self { shift: mean, scale }
    }

    #[inline]
    pub fn apply(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        self.shift + self.scale * z
    }
}

/// Standardizes values to zero mean and unit (population) variance.
pub fn standardize(values: &[f64]) -> (Vec<f64>, Standardization) {
    let t = Standardization::fit(values);
    (values.iter().map(|&v| t.apply(v)).collect(), t)
}

pub fn destandardize(values: &[f64], t: &Standardization) -> Vec<f64> {
    values.iter().map(|&z| t.invert(z)).collect()
}

/// One evaluation of one objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub location: Vec<f64>,
    /// Zero-based objective index.
    pub objective: usize,
    pub value: f64,
    pub cost: f64,
}

impl ObservationRecord {
    pub fn new(location: Vec<f64>, objective: usize, value: f64, cost: f64) -> Self {
        Self { location, objective, value, cost }
    }
}

pub(crate) fn check_in_box(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::OutOfBounds { point: x.to_vec() })
    }
}

#[derive(Clone, Debug)]
struct ObjectiveFactor {
    locations: Vec<Vec<f64>>,
    /// Lower Cholesky factor of `K + diag(noise + jitter)`.
    chol: DMatrix<f64>,
    /// `(K + Σ)^{-1} (y - c)` in model space.
    alpha: DVector<f64>,
}

impl ObjectiveFactor {
    fn empty() -> Self {
        Self { locations: Vec::new(), chol: DMatrix::zeros(0, 0), alpha: DVector::zeros(0) }
    }

    fn len(&self) -> usize {
        self.locations.len()
    }
}

/// A Gaussian process conditioned on every observation so far.
///
/// Immutable: conditioning returns a new state.
#[derive(Clone, Debug)]
pub struct PosteriorState {
    dim: usize,
    kernel: KernelSpec,
    noise: NoiseModel,
    transforms: Vec<Standardization>,
    observations: Vec<ObservationRecord>,
    factors: Vec<ObjectiveFactor>,
}

impl PosteriorState {
    /// The prior over `[0,1]^dim` with identity standardization.
    pub fn prior(dim: usize, kernel: KernelSpec, noise: NoiseModel) -> Result<Self> {
        kernel.validate()?;
        let m = kernel.num_objectives();
        if noise.noise_variance.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: noise.noise_variance.len() });
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("input dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            kernel,
            noise,
            transforms: vec![Standardization::IDENTITY; m],
            observations: Vec::new(),
            factors: (0..m).map(|_| ObjectiveFactor::empty()).collect(),
        })
    }

    /// Replaces the raw/model-space transforms and refactorizes.
    pub fn with_transforms(&self, transforms: Vec<Standardization>) -> Result<Self> {
        if transforms.len() != self.num_objectives() {
            return Err(Error::DimensionMismatch { expected: self.num_objectives(), got: transforms.len() });
        }
        let mut state = Self::prior(self.dim, self.kernel.clone(), self.noise.clone())?;
        state.transforms = transforms;
        state.condition(&self.observations)
    }

    /// Same data, different hyperparameters.
    pub fn with_hyperparameters(&self, kernel: KernelSpec, noise: NoiseModel) -> Result<Self> {
        let mut state = Self::prior(self.dim, kernel, noise)?;
        if state.num_objectives() != self.num_objectives() {
            return Err(Error::DimensionMismatch { expected: self.num_objectives(), got: state.num_objectives() });
        }
        state.transforms = self.transforms.clone();
        state.condition(&self.observations)
    }

    /// Conditions on additional observations.
    ///
    /// Conditioning refactorizes each touched objective from scratch, so
    /// one-at-a-time and batch conditioning give the same state.
    pub fn condition(&self, obs: &[ObservationRecord]) -> Result<Self> {
        let m = self.num_objectives();
        let mut touched = vec![false; m];
        for o in obs {
            if o.objective >= m {
                return Err(Error::ObjectiveIndex { index: o.objective, count: m });
            }
            if o.location.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: o.location.len() });
            }
            check_in_box(&o.location)?;
            if !o.value.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite observation {}", o.value)));
            }
            touched[o.objective] = true;
        }
        let mut next = self.clone();
        next.observations.extend_from_slice(obs);
        for (j, t) in touched.iter().enumerate() {
            if *t {
                next.factors[j] = next.factorize(j)?;
            }
        }
        Ok(next)
    }

    fn factorize(&self, m: usize) -> Result<ObjectiveFactor> {
        let (locations, values): (Vec<Vec<f64>>, Vec<f64>) = self
            .observations
            .iter()
            .filter(|o| o.objective == m)
            .map(|o| (o.location.clone(), self.transforms[m].apply(o.value)))
            .unzip();
        if locations.is_empty() {
            return Ok(ObjectiveFactor::empty());
        }
        let n = locations.len();
        let os = self.kernel.output_scale[m];
        let diag = self.noise.noise_variance[m] + JITTER * os;
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = os + diag;
            for j in 0..i {
                let v = self.kernel.covariance(m, &locations[i], &locations[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let chol = k.cholesky().ok_or(Error::Factorization { objective: m })?;
        let c = self.kernel.constant_mean[m];
        let resid = DVector::from_iterator(n, values.iter().map(|y| y - c));
        let alpha = chol.solve(&resid);
        Ok(ObjectiveFactor { locations, chol: chol.unpack(), alpha })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_objectives(&self) -> usize {
        self.kernel.num_objectives()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn transforms(&self) -> &[Standardization] {
        &self.transforms
    }

    pub fn observations(&self) -> &[ObservationRecord] {
        &self.observations
    }

    pub fn observation_count(&self, m: usize) -> usize {
        self.factors[m].len()
    }

    /// Observation-noise variance of objective `m` in raw units.
    pub fn raw_noise_variance(&self, m: usize) -> f64 {
        let s = self.transforms[m].scale;
        s * s * self.noise.noise_variance[m]
    }

    /// Noise variance a new observation of `m` carries in the factorization
    /// (observation noise plus jitter), raw units.
    pub fn observation_variance(&self, m: usize) -> f64 {
        let s = self.transforms[m].scale;
        s * s * (self.noise.noise_variance[m] + JITTER * self.kernel.output_scale[m])
    }

    fn kernel_column(&self, m: usize, x: &[f64]) -> DVector<f64> {
        let f = &self.factors[m];
        DVector::from_iterator(f.len(), f.locations.iter().map(|xi| self.kernel.covariance(m, xi, x)))
    }

    /// Posterior mean of objective `m` at `x`, raw units.
    pub fn mean(&self, m: usize, x: &[f64]) -> f64 {
        let f = &self.factors[m];
        let mut z = self.kernel.constant_mean[m];
        for (xi, a) in f.locations.iter().zip(f.alpha.iter()) {
            z += self.kernel.covariance(m, xi, x) * a;
        }
        self.transforms[m].invert(z)
    }

    /// Posterior means of every objective at `x`.
    pub fn mean_vector(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_objectives()).map(|m| self.mean(m, x)).collect()
    }

    /// Posterior variance of objective `m` at `x`, raw units.
    pub fn variance(&self, m: usize, x: &[f64]) -> f64 {
        let prior = self.kernel.output_scale[m];
        let v = self.whitened(m, x);
        let s = self.transforms[m].scale;
        s * s * (prior - v.dot(&v))
    }

    /// `L^{-1} k(X_m, x)` for objective `m`.
    fn whitened(&self, m: usize, x: &[f64]) -> DVector<f64> {
        let f = &self.factors[m];
        let kx = self.kernel_column(m, x);
        if f.len() == 0 {
            return kx;
        }
        f.chol.solve_lower_triangular(&kx).expect("triangular factor is non-singular")
    }

    /// Precomputes what repeated cross-covariance queries against a fixed
    /// set of points need.
    pub fn grid_cache(&self, grid: &[Vec<f64>]) -> GridCache {
        let objectives = (0..self.num_objectives())
            .map(|m| {
                let f = &self.factors[m];
                let mut kg = DMatrix::<f64>::zeros(f.len(), grid.len());
                for (c, g) in grid.iter().enumerate() {
                    for (r, xi) in f.locations.iter().enumerate() {
                        kg[(r, c)] = self.kernel.covariance(m, xi, g);
                    }
                }
                let whitened = if f.len() == 0 {
                    kg
                } else {
                    f.chol.solve_lower_triangular(&kg).expect("triangular factor is non-singular")
                };
                let mean = grid.iter().map(|g| self.mean(m, g)).collect();
                GridObjective { whitened, mean }
            })
            .collect();
        GridCache { points: grid.to_vec(), objectives }
    }

    /// Posterior variance of `f_m(x)` and covariances `cov(f_m(g), f_m(x))`
    /// for each cached grid point `g`, raw units.
    pub fn cross_covariance(&self, m: usize, x: &[f64], cache: &GridCache) -> (f64, Vec<f64>) {
        let v = self.whitened(m, x);
        let s2 = self.transforms[m].scale.powi(2);
        let var = s2 * (self.kernel.output_scale[m] - v.dot(&v));
        let w = &cache.objectives[m].whitened;
        let cov = cache
            .points
            .iter()
            .enumerate()
            .map(|(c, g)| {
                let reduction = if v.is_empty() { 0.0 } else { w.column(c).dot(&v) };
                s2 * (self.kernel.covariance(m, g, x) - reduction)
            })
            .collect();
        (var, cov)
    }

    /// Posterior covariance matrix of objective `m` over `xs`, raw units.
    pub fn covariance_matrix(&self, m: usize, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let n = xs.len();
        let whitened: Vec<DVector<f64>> = xs.iter().map(|x| self.whitened(m, x)).collect();
        let s2 = self.transforms[m].scale.powi(2);
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let prior = self.kernel.covariance(m, &xs[i], &xs[j]);
                let v = s2 * (prior - whitened[i].dot(&whitened[j]));
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        cov
    }
}

/// Grid-side quantities reused across many candidate locations.
#[derive(Clone, Debug)]
pub struct GridCache {
    points: Vec<Vec<f64>>,
    objectives: Vec<GridObjective>,
}

#[derive(Clone, Debug)]
struct GridObjective {
    whitened: DMatrix<f64>,
    mean: Vec<f64>,
}

impl GridCache {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Posterior mean of objective `m` at each grid point, raw units.
    pub fn mean(&self, m: usize) -> &[f64] {
        &self.objectives[m].mean
    }
}

/// Free-function form of [`PosteriorState::condition`].
pub fn condition(prior: &PosteriorState, obs: &[ObservationRecord]) -> Result<PosteriorState> {
    prior.condition(obs)
}

/// Posterior means (one row per point) and per-objective covariance blocks.
#[derive(Clone, Debug)]
pub struct PosteriorMoments {
    pub mean: Vec<Vec<f64>>,
    pub covariance: Vec<DMatrix<f64>>,
}

pub fn posterior_mean_cov(state: &PosteriorState, xs: &[Vec<f64>]) -> PosteriorMoments {
    let mean = xs.iter().map(|x| state.mean_vector(x)).collect();
    let covariance = (0..state.num_objectives()).map(|m| state.covariance_matrix(m, xs)).collect();
    PosteriorMoments { mean, covariance }
}

/// Regular `n × n` grid over `[0,1]^2`, row-major in the first coordinate.
pub fn unit_grid_2d(n: usize) -> Vec<Vec<f64>> {
    let step = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pts.push(vec![i as f64 * step, j as f64 * step]);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_objective_prior() -> PosteriorState {
        let kernel = KernelSpec::matern52(vec![0.3, 0.7], vec![1.5, 0.4], vec![0.2, -1.0]).unwrap();
        PosteriorState::prior(2, kernel, NoiseModel::new(vec![0.01, 0.2], vec![false, true]).unwrap()).unwrap()
    }

    fn random_obs(rng: &mut ChaCha8Rng, n: usize) -> Vec<ObservationRecord> {
        (0..n)
            .map(|_| {
                ObservationRecord::new(vec![rng.gen(), rng.gen()], rng.gen_range(0..2), rng.gen_range(-2.0..2.0), 1.0)
            })
            .collect()
    }

    #[test]
    fn matern_examples() {
        assert_eq!(matern52(&[0.3, 0.1], &[0.3, 0.1], 0.5, 2.5).unwrap(), 2.5);
        // High-precision evaluation of (1 + √5 + 5/3) e^{-√5}.
        let k = matern52(&[0.0, 0.0], &[0.6, 0.8], 1.0, 1.0).unwrap();
        assert!((k - 0.523_994_108_831_820_3).abs() < 1e-14);
        assert!(matches!(matern52(&[0.0], &[1.0], 0.0, 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(matern52(&[0.0], &[1.0], 1.0, -1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn standardize_examples() {
        let (z, t) = standardize(&[2.0, 4.0]);
        assert_eq!(z, vec![-1.0, 1.0]);
        assert_eq!(t, Standardization { shift: 3.0, scale: 1.0 });
        let (z, t) = standardize(&[7.0]);
        assert_eq!((z, t), (vec![0.0], Standardization { shift: 7.0, scale: 1.0 }));
        let (_, t) = standardize(&[3.0, 3.0, 3.0]);
        assert_eq!(t.scale, 1.0);
    }

    #[test]
    fn empty_state_is_prior() {
        let s = two_objective_prior();
        let x = vec![0.2, 0.9];
        assert_eq!(s.mean_vector(&x), vec![0.2, -1.0]);
        assert_eq!(s.variance(0, &x), 1.5);
        let c = s.condition(&[]).unwrap();
        assert_eq!(c.mean_vector(&x), vec![0.2, -1.0]);
    }

    #[test]
    fn noiseless_observation_interpolates() {
        let kernel = KernelSpec::matern52(vec![0.3], vec![1.0], vec![0.0]).unwrap();
        let prior = PosteriorState::prior(2, kernel, NoiseModel::fixed(0.0, 1).unwrap()).unwrap();
        let x = vec![0.4, 0.6];
        let post = prior.condition(&[ObservationRecord::new(x.clone(), 0, 1.7, 1.0)]).unwrap();
        // Only the jitter separates the mean from the observation.
        assert!((post.mean(0, &x) - 1.7).abs() < 1e-5);
        assert!(post.variance(0, &x) <= 1e-6);
    }

    #[test]
    fn rejects_bad_observations() {
        let s = two_objective_prior();
        let out = ObservationRecord::new(vec![1.2, 0.0], 0, 1.0, 1.0);
        assert!(matches!(s.condition(&[out]), Err(Error::OutOfBounds { .. })));
        let bad_m = ObservationRecord::new(vec![0.2, 0.0], 2, 1.0, 1.0);
        assert!(matches!(s.condition(&[bad_m]), Err(Error::ObjectiveIndex { .. })));
    }

    #[test]
    fn incremental_equals_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prior = two_objective_prior()
            .with_transforms(vec![Standardization { shift: 0.5, scale: 2.0 }, Standardization::IDENTITY])
            .unwrap();
        for _ in 0..10 {
            let obs = random_obs(&mut rng, 8);
            let batch = prior.condition(&obs).unwrap();
            let mut inc = prior.clone();
            for o in &obs {
                inc = inc.condition(std::slice::from_ref(o)).unwrap();
            }
            let xs: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen(), rng.gen()]).collect();
            let a = posterior_mean_cov(&batch, &xs);
            let b = posterior_mean_cov(&inc, &xs);
            for (ra, rb) in a.mean.iter().zip(&b.mean) {
                for (u, v) in ra.iter().zip(rb) {
                    assert!((u - v).abs() < 1e-8);
                }
            }
            for (ca, cb) in a.covariance.iter().zip(&b.covariance) {
                assert!((ca - cb).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn cross_covariance_matches_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let state = two_objective_prior().condition(&random_obs(&mut rng, 6)).unwrap();
        let grid = unit_grid_2d(3);
        let cache = state.grid_cache(&grid);
        let x = vec![0.35, 0.8];
        for m in 0..2 {
            let (var, cov) = state.cross_covariance(m, &x, &cache);
            assert!((var - state.variance(m, &x)).abs() < 1e-12);
            let mut pts = grid.clone();
            pts.push(x.clone());
            let full = state.covariance_matrix(m, &pts);
            for (i, c) in cov.iter().enumerate() {
                assert!((c - full[(i, grid.len())]).abs() < 1e-12);
            }
            for (i, g) in grid.iter().enumerate() {
                assert!((cache.mean(m)[i] - state.mean(m, g)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_grid_layout() {
        let g = unit_grid_2d(11);
        assert_eq!(g.len(), 121);
        assert_eq!(g[0], vec![0.0, 0.0]);
        assert_eq!(g[120], vec![1.0, 1.0]);
        assert_eq!(g[1], vec![0.0, 0.1]);
    }

    proptest! {
        #[test]
        fn standardize_round_trip(values in proptest::collection::vec(-1e3f64..1e3, 1..30)) {
            let (z, t) = standardize(&values);
            let back = destandardize(&z, &t);
            for (a, b) in values.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() <= 1e-12);
            let var = z.iter().map(|v| v * v).sum::<f64>() / n;
            if values.len() >= 2 && t.scale != 1.0 {
                prop_assert!((var - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn matern_is_symmetric(a in proptest::collection::vec(0.0f64..1.0, 3),
                               b in proptest::collection::vec(0.0f64..1.0, 3),
                               ls in 0.05f64..3.0, os in 0.1f64..10.0) {
            prop_assert_eq!(matern52(&a, &b, ls, os).unwrap(), matern52(&b, &a, ls, os).unwrap());
        }

        #[test]
        fn posterior_covariance_is_psd_and_monotone(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let obs = random_obs(&mut rng, 6);
            let state = two_objective_prior().condition(&obs).unwrap();
            let xs: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.gen(), rng.gen()]).collect();
            for m in 0..2 {
                let cov = state.covariance_matrix(m, &xs);
                prop_assert!((&cov - cov.transpose()).amax() == 0.0);
                let eig = nalgebra::SymmetricEigen::new(cov.clone()).eigenvalues;
                prop_assert!(eig.min() >= -1e-8);
                for x in &xs {
                    prop_assert!(state.variance(m, x) >= -1e-10);
                }
            }
            let extra = random_obs(&mut rng, 1);
            let more = state.condition(&extra).unwrap();
            let m = extra[0].objective;
            for x in &xs {
                prop_assert!(more.variance(m, x) <= state.variance(m, x) + 1e-8);
                prop_assert!((more.variance(1 - m, x) - state.variance(1 - m, x)).abs() < 1e-12);
            }
        }
    }
}
