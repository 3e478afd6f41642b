//! MAP estimation of kernel and noise hyperparameters under Gamma priors.
//!
//! Each objective is fitted separately on its standardized observations.
//! The search runs in log-parameter space over a fixed box; the constant
//! mean is either fitted (improper flat prior) or held at a frozen raw
//! value.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::gp::{KernelSpec, NoiseModel, ObservationRecord, Standardization, FIXED_NOISE_VARIANCE, JITTER};
use crate::optim::{minimize_bounded, LocalSearchConfig};
use crate::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `Gamma(shape α, rate β)` prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0) || !(rate > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma prior needs positive shape/rate, got {shape}, {rate}")));
        }
        Ok(Self { shape, rate })
    }

    fn log_pdf_unchecked(&self, z: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * z.ln() - self.rate * z
    }

    /// Derivative of the log density with respect to `ln z`.
    fn dlog_pdf_dlog(&self, z: f64) -> f64 {
        (self.shape - 1.0) - self.rate * z
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate).expect("validated gamma prior").sample(rng)
    }
}

pub fn gamma_log_pdf(z: f64, prior: &GammaPrior) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("gamma density needs z > 0, got {z}")));
    }
    Ok(prior.log_pdf_unchecked(z))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoisePrior {
    Gamma(GammaPrior),
    Fixed(f64),
}

/// Priors for one objective. The constant mean has an improper flat prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePriors {
    pub length_scale: GammaPrior,
    pub output_scale: GammaPrior,
    pub noise: NoisePrior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    pub objectives: Vec<ObjectivePriors>,
}

impl PriorSet {
    /// The surrogate priors used for the two synthetic problem families.
    pub fn for_family(family: u8) -> Result<Self> {
        let output = GammaPrior { shape: 2.0, rate: 0.15 };
        let fixed = NoisePrior::Fixed(FIXED_NOISE_VARIANCE);
        let objectives = match family {
            1 => vec![
                ObjectivePriors { length_scale: GammaPrior { shape: 3.0, rate: 10.0 }, output_scale: output, noise: fixed },
                ObjectivePriors { length_scale: GammaPrior { shape: 3.0, rate: 1.1 }, output_scale: output, noise: fixed },
            ],
            2 => vec![
                ObjectivePriors {
                    length_scale: GammaPrior { shape: 3.0, rate: 10.0 },
                    output_scale: output,
                    noise: NoisePrior::Gamma(GammaPrior { shape: 1.1, rate: 0.05 }),
                },
                ObjectivePriors { length_scale: GammaPrior { shape: 3.0, rate: 10.0 }, output_scale: output, noise: fixed },
            ],
            other => return Err(Error::InvalidParameter(format!("unknown problem family {other}"))),
        };
        Ok(Self { objectives })
    }

    /// The noise model implied by the priors, at the given starting variances.
    pub fn noise_model(&self, initial_learnable: f64) -> NoiseModel {
        let (variance, learnable) = self
            .objectives
            .iter()
            .map(|p| match p.noise {
                NoisePrior::Fixed(v) => (v, false),
                NoisePrior::Gamma(_) => (initial_learnable, true),
            })
            .unzip();
        NoiseModel { noise_variance: variance, learnable }
    }
}

/// Hyperparameters of one objective in model space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveHypers {
    pub length_scale: f64,
    pub output_scale: f64,
    pub noise_variance: f64,
    pub constant_mean: f64,
}

/// Pairwise distances of one objective's locations plus its standardized values.
struct ObjectiveData {
    dist: DMatrix<f64>,
    y: DVector<f64>,
}

impl ObjectiveData {
    fn new(locations: &[Vec<f64>], y: &[f64]) -> Self {
        let n = locations.len();
        let dist = DMatrix::from_fn(n, n, |i, j| crate::gp::sq_dist(&locations[i], &locations[j]).sqrt());
        Self { dist, y: DVector::from_column_slice(y) }
    }

    fn len(&self) -> usize {
        self.y.len()
    }
}

/// What is optimized for one objective, in order: ln ℓ, ln s², then
/// ln σ² when the noise is learnable, then the mean when it is free.
#[derive(Clone, Copy, Debug)]
struct Layout {
    noise: Option<GammaPrior>,
    fixed_noise: f64,
    fit_mean: bool,
    fixed_mean: f64,
}

impl Layout {
    fn decode(&self, p: &[f64]) -> ObjectiveHypers {
        let mut i = 2;
        let noise_variance = if self.noise.is_some() {
            i += 1;
            p[2].exp()
        } else {
            self.fixed_noise
        };
        let constant_mean = if self.fit_mean { p[i] } else { self.fixed_mean };
        ObjectiveHypers { length_scale: p[0].exp(), output_scale: p[1].exp(), noise_variance, constant_mean }
    }

    fn encode(&self, h: &ObjectiveHypers) -> Vec<f64> {
        let mut p = vec![h.length_scale.ln(), h.output_scale.ln()];
        if self.noise.is_some() {
            p.push(h.noise_variance.ln());
        }
        if self.fit_mean {
            p.push(h.constant_mean);
        }
        p
    }

    fn bounds(&self, cfg: &FitConfig) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![cfg.length_scale_bounds.0.ln(), cfg.output_scale_bounds.0.ln()];
        let mut hi = vec![cfg.length_scale_bounds.1.ln(), cfg.output_scale_bounds.1.ln()];
        if self.noise.is_some() {
            lo.push(cfg.noise_bounds.0.ln());
            hi.push(cfg.noise_bounds.1.ln());
        }
        if self.fit_mean {
            lo.push(-cfg.mean_bound);
            hi.push(cfg.mean_bound);
        }
        (lo, hi)
    }
}

/// Log evidence and its gradient with respect to the layout's parameters.
fn evidence(data: &ObjectiveData, h: &ObjectiveHypers, layout: &Layout, want_grad: bool) -> Option<(f64, Vec<f64>)> {
    let n = data.len();
    let (ls, os) = (h.length_scale, h.output_scale);
    let diag = h.noise_variance + JITTER * os;
    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut dk_dls = if want_grad { DMatrix::<f64>::zeros(n, n) } else { DMatrix::zeros(0, 0) };
    for j in 0..n {
        for i in j..n {
            let u = SQRT5 * data.dist[(i, j)] / ls;
            let e = (-u).exp();
            let v = os * (1.0 + u + u * u / 3.0) * e;
            k[(i, j)] = v;
            k[(j, i)] = v;
            if want_grad {
                let d = os * u * u * (1.0 + u) * e / 3.0;
                dk_dls[(i, j)] = d;
                dk_dls[(j, i)] = d;
            }
        }
    }
    let kernel_part = if want_grad { Some(k.clone()) } else { None };
    for i in 0..n {
        k[(i, i)] += diag;
    }
    let chol = k.cholesky()?;
    let resid = data.y.add_scalar(-h.constant_mean);
    let alpha = chol.solve(&resid);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let value = -0.5 * resid.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
    if !want_grad {
        return Some((value, Vec::new()));
    }
    let kinv = chol.inverse();
    // dL/dθ = ½ tr((ααᵀ - K⁻¹) dK/dθ)
    let trace_w = |dk: &DMatrix<f64>| -> f64 {
        let mut t = 0.0;
        for j in 0..n {
            for i in 0..n {
                t += (alpha[i] * alpha[j] - kinv[(i, j)]) * dk[(i, j)];
            }
        }
        0.5 * t
    };
    let mut grad = vec![trace_w(&dk_dls)];
    let mut dk_dos = kernel_part.expect("computed when gradient requested");
    for i in 0..n {
        dk_dos[(i, i)] += JITTER * os;
    }
    grad.push(trace_w(&dk_dos));
    if layout.noise.is_some() {
        let t: f64 = (0..n).map(|i| alpha[i] * alpha[i] - kinv[(i, i)]).sum();
        grad.push(0.5 * t * h.noise_variance);
    }
    if layout.fit_mean {
        grad.push(alpha.sum());
    }
    Some((value, grad))
}

/// GP log marginal likelihood of standardized values `y` observed at `locations`.
pub fn log_marginal_likelihood(locations: &[Vec<f64>], y: &[f64], hypers: &ObjectiveHypers) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Empty("observations"));
    }
    if locations.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: locations.len() });
    }
    let layout = Layout { noise: None, fixed_noise: hypers.noise_variance, fit_mean: false, fixed_mean: hypers.constant_mean };
    let data = ObjectiveData::new(locations, y);
    evidence(&data, hypers, &layout, false).map(|(v, _)| v).ok_or(Error::Factorization { objective: 0 })
}

fn log_prior(h: &ObjectiveHypers, priors: &ObjectivePriors, layout: &Layout) -> (f64, Vec<f64>) {
    let mut value = priors.length_scale.log_pdf_unchecked(h.length_scale) + priors.output_scale.log_pdf_unchecked(h.output_scale);
    let mut grad = vec![priors.length_scale.dlog_pdf_dlog(h.length_scale), priors.output_scale.dlog_pdf_dlog(h.output_scale)];
    if let Some(p) = layout.noise {
        value += p.log_pdf_unchecked(h.noise_variance);
        grad.push(p.dlog_pdf_dlog(h.noise_variance));
    }
    if layout.fit_mean {
        grad.push(0.0);
    }
    (value, grad)
}

fn log_posterior(data: &ObjectiveData, p: &[f64], priors: &ObjectivePriors, layout: &Layout, want_grad: bool) -> Option<(f64, Vec<f64>)> {
    let h = layout.decode(p);
    let (ll, gl) = evidence(data, &h, layout, want_grad)?;
    let (lp, gp) = log_prior(&h, priors, layout);
    let grad = if want_grad { gl.iter().zip(&gp).map(|(a, b)| a + b).collect() } else { Vec::new() };
    Some((ll + lp, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Initializations: the current values plus `restarts - 1` prior draws.
    pub restarts: usize,
    /// Local searches run from the best-scoring initializations.
    pub local_searches: usize,
    pub max_iterations: usize,
    pub length_scale_bounds: (f64, f64),
    pub output_scale_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
    /// Symmetric bound on the standardized constant mean.
    pub mean_bound: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            local_searches: 2,
            max_iterations: 60,
            length_scale_bounds: (0.01, 10.0),
            output_scale_bounds: (1e-4, 1e3),
            noise_bounds: (1e-6, 1e2),
            mean_bound: 10.0,
            seed: 0,
        }
    }
}

/// How the constant prior mean is treated.
#[derive(Clone, Debug, PartialEq)]
pub enum MeanPolicy {
    Fit,
    /// Hold the mean at these raw-unit values.
    Frozen(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub kernel: KernelSpec,
    pub noise: NoiseModel,
    pub transforms: Vec<Standardization>,
    /// Fitted constant means in raw units, for freezing later.
    pub raw_mean: Vec<f64>,
    pub log_posterior: Vec<f64>,
    /// Per objective: the local searches failed to improve on the best initialization.
    pub no_improvement: Vec<bool>,
}

/// Fits every objective's hyperparameters by maximum a posteriori.
///
/// `current` supplies the first initialization (model-space values).
pub fn fit_map(
    data: &[ObservationRecord],
    priors: &PriorSet,
    current: (&KernelSpec, &NoiseModel),
    mean: &MeanPolicy,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    fit_map_selected(data, priors, current, mean, cfg, &vec![true; priors.objectives.len()])
}

/// Like [`fit_map`], but objectives with `refit[m] == false` keep their
/// current hyperparameters (their log posterior is reported as NaN).
pub fn fit_map_selected(
    data: &[ObservationRecord],
    priors: &PriorSet,
    current: (&KernelSpec, &NoiseModel),
    mean: &MeanPolicy,
    cfg: &FitConfig,
    refit: &[bool],
) -> Result<FitOutcome> {
    let m_count = priors.objectives.len();
    if refit.len() != m_count {
        return Err(Error::DimensionMismatch { expected: m_count, got: refit.len() });
    }
    let (cur_kernel, cur_noise) = current;
    if cur_kernel.num_objectives() != m_count {
        return Err(Error::DimensionMismatch { expected: m_count, got: cur_kernel.num_objectives() });
    }
    if let MeanPolicy::Frozen(v) = mean {
        if v.len() != m_count {
            return Err(Error::DimensionMismatch { expected: m_count, got: v.len() });
        }
    }
    let mut kernel = cur_kernel.clone();
    let mut noise = cur_noise.clone();
    let mut transforms = Vec::with_capacity(m_count);
    let mut raw_mean = Vec::with_capacity(m_count);
    let mut log_post = Vec::with_capacity(m_count);
    let mut no_improvement = Vec::with_capacity(m_count);

    for m in 0..m_count {
        let (locations, raw): (Vec<Vec<f64>>, Vec<f64>) =
            data.iter().filter(|o| o.objective == m).map(|o| (o.location.clone(), o.value)).unzip();
        if raw.is_empty() {
            return Err(Error::Empty("observations for an objective"));
        }
        let t = Standardization::fit(&raw);
        if !refit[m] {
            raw_mean.push(match mean {
                MeanPolicy::Frozen(v) => v[m],
                MeanPolicy::Fit => t.invert(cur_kernel.constant_mean[m]),
            });
            transforms.push(t);
            log_post.push(f64::NAN);
            no_improvement.push(false);
            continue;
        }
        let y: Vec<f64> = raw.iter().map(|v| t.apply(*v)).collect();
        let p = &priors.objectives[m];
        let layout = Layout {
            noise: match p.noise {
                NoisePrior::Gamma(g) => Some(g),
                NoisePrior::Fixed(_) => None,
            },
            fixed_noise: match p.noise {
                NoisePrior::Fixed(v) => v,
                NoisePrior::Gamma(_) => cur_noise.noise_variance[m],
            },
            fit_mean: matches!(mean, MeanPolicy::Fit),
            fixed_mean: match mean {
                MeanPolicy::Frozen(v) => t.apply(v[m]),
                MeanPolicy::Fit => 0.0,
            },
        };
        let current_h = ObjectiveHypers {
            length_scale: cur_kernel.length_scale[m],
            output_scale: cur_kernel.output_scale[m],
            noise_variance: cur_noise.noise_variance[m].max(cfg.noise_bounds.0),
            constant_mean: cur_kernel.constant_mean[m],
        };
        let fitted = fit_objective(&ObjectiveData::new(&locations, &y), p, &layout, &current_h, cfg, cfg.seed.wrapping_add(m as u64))
            .ok_or(Error::Factorization { objective: m })?;
        kernel.length_scale[m] = fitted.hypers.length_scale;
        kernel.output_scale[m] = fitted.hypers.output_scale;
        kernel.constant_mean[m] = fitted.hypers.constant_mean;
        noise.noise_variance[m] = fitted.hypers.noise_variance;
        noise.learnable[m] = layout.noise.is_some();
        raw_mean.push(t.invert(fitted.hypers.constant_mean));
        transforms.push(t);
        log_post.push(fitted.log_posterior);
        no_improvement.push(!fitted.improved);
    }
    Ok(FitOutcome { kernel, noise, transforms, raw_mean, log_posterior: log_post, no_improvement })
}

struct ObjectiveFit {
    hypers: ObjectiveHypers,
    log_posterior: f64,
    improved: bool,
}

fn fit_objective(
    data: &ObjectiveData,
    priors: &ObjectivePriors,
    layout: &Layout,
    current: &ObjectiveHypers,
    cfg: &FitConfig,
    seed: u64,
) -> Option<ObjectiveFit> {
    let (lo, hi) = layout.bounds(cfg);
    let clamp = |mut p: Vec<f64>| {
        for (v, (l, h)) in p.iter_mut().zip(lo.iter().zip(&hi)) {
            *v = v.clamp(*l, *h);
        }
        p
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inits = vec![clamp(layout.encode(current))];
    for _ in 1..cfg.restarts.max(1) {
        let h = ObjectiveHypers {
            length_scale: priors.length_scale.sample(&mut rng),
            output_scale: priors.output_scale.sample(&mut rng),
            noise_variance: layout.noise.map_or(layout.fixed_noise, |g| g.sample(&mut rng)),
            constant_mean: current.constant_mean,
        };
        inits.push(clamp(layout.encode(&h)));
    }

    let score = |p: &[f64]| log_posterior(data, p, priors, layout, false).map_or(f64::NEG_INFINITY, |v| v.0);
    let mut scored: Vec<(usize, f64)> = inits.iter().enumerate().map(|(i, p)| (i, score(p))).collect();
    // Best first; ties broken by restart index.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let (best_init, best_init_value) = scored[0];
    if !best_init_value.is_finite() {
        return None;
    }

    let search = LocalSearchConfig { max_iterations: cfg.max_iterations, gradient_tolerance: 1e-6, value_tolerance: 1e-10 };
    let mut best = (inits[best_init].clone(), best_init_value);
    for &(i, v) in scored.iter().take(cfg.local_searches.max(1)) {
        if !v.is_finite() {
            continue;
        }
        let r = minimize_bounded(
            |p| match log_posterior(data, p, priors, layout, true) {
                Some((v, g)) => (-v, g.iter().map(|x| -x).collect()),
                None => (f64::INFINITY, vec![0.0; p.len()]),
            },
            &inits[i],
            &lo,
            &hi,
            &search,
        );
        if -r.value > best.1 {
            best = (r.x, -r.value);
        }
    }
    let improved = best.1 > best_init_value;
    Some(ObjectiveFit { hypers: layout.decode(&best.0), log_posterior: best.1, improved })
}
