//! Synthetic test problems built from Gaussian-process samples.
//!
//! A problem samples a generator GP jointly at 100 scrambled-Sobol
//! locations and uses the posterior mean given those samples as the true
//! objective. Problems are immutable once built; noisy evaluation takes an
//! explicit RNG.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::gp::{check_in_box, ObservationRecord, JITTER};
use crate::kg::CostVector;
use crate::{Error, KernelSpec, NoiseModel, PosteriorState, Result, SobolStream};

pub const PROBLEM_FORMAT: &str = "cmokg-problem";
pub const PROBLEM_VERSION: u32 = 1;
pub const CONDITIONING_POINTS: usize = 100;
pub const DIMENSION: usize = 2;

/// Generator settings for one objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorObjective {
    pub length_scale: f64,
    /// Prior variance of the generator GP.
    pub output_scale: f64,
    pub constant_mean: f64,
    /// Standard deviation of the observation noise added by `evaluate`.
    pub noise_sd: f64,
}

/// Generator settings of a problem family.
pub fn family_generator(family: u8) -> Result<Vec<GeneratorObjective>> {
    let g = |length_scale, output_scale, noise_sd| GeneratorObjective { length_scale, output_scale, constant_mean: 0.0, noise_sd };
    match family {
        1 => Ok(vec![g(0.2, 1.0, 0.0), g(1.8, 50.0, 0.0)]),
        2 => Ok(vec![g(0.4, 1.0, 1.0), g(0.4, 1.0, 0.0)]),
        _ => Err(Error::InvalidParameter(format!("problem family must be 1 or 2, got {family}"))),
    }
}

/// Evaluation costs shared by both families.
pub fn family_costs() -> CostVector {
    CostVector::new(vec![1.0, 10.0]).expect("constant costs are positive")
}

/// Serialized form of a problem; `values[i][m]` is objective `m` at `locations[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemArchive {
    pub format: String,
    pub version: u32,
    pub family: u8,
    pub seed: u64,
    pub dimension: usize,
    pub costs: Vec<f64>,
    pub objectives: Vec<GeneratorObjective>,
    pub locations: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct SyntheticProblem {
    archive: ProblemArchive,
    costs: CostVector,
    interpolant: PosteriorState,
}

fn stream_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt)
}

/// Draws one joint sample of a zero-noise GP at `locations`.
fn joint_prior_sample(locations: &[Vec<f64>], obj: &GeneratorObjective, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = locations.len();
    let kernel = KernelSpec::matern52(vec![obj.length_scale], vec![obj.output_scale], vec![obj.constant_mean])?;
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.covariance(0, &locations[i], &locations[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += JITTER * obj.output_scale;
    }
    let l = k.cholesky().ok_or(Error::Factorization { objective: 0 })?.unpack();
    let z = nalgebra::DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
    Ok((l * z).iter().map(|v| v + obj.constant_mean).collect())
}

impl SyntheticProblem {
    /// Builds problem `seed` of `family`.
    pub fn generate(family: u8, seed: u64) -> Result<Self> {
        let objectives = family_generator(family)?;
        let mut stream = SobolStream::scrambled(DIMENSION, stream_seed(seed, 1))?;
        let locations = stream.next_points(CONDITIONING_POINTS);
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 2));
        let columns = objectives
            .iter()
            .map(|o| joint_prior_sample(&locations, o, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let values = (0..locations.len()).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
        Self::from_archive(ProblemArchive {
            format: PROBLEM_FORMAT.into(),
            version: PROBLEM_VERSION,
            family,
            seed,
            dimension: DIMENSION,
            costs: family_costs().as_slice().to_vec(),
            objectives,
            locations,
            values,
        })
    }

    /// Rebuilds the interpolant from a stored archive.
    pub fn from_archive(archive: ProblemArchive) -> Result<Self> {
        if archive.format != PROBLEM_FORMAT {
            return Err(Error::Config(format!("not a problem archive: format {:?}", archive.format)));
        }
        if archive.version != PROBLEM_VERSION {
            return Err(Error::Config(format!("unsupported problem archive version {}", archive.version)));
        }
        let m = archive.objectives.len();
        if m == 0 || archive.costs.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: archive.costs.len() });
        }
        if archive.locations.len() != archive.values.len() {
            return Err(Error::DimensionMismatch { expected: archive.locations.len(), got: archive.values.len() });
        }
        let costs = CostVector::new(archive.costs.clone())?;
        let kernel = KernelSpec::matern52(
            archive.objectives.iter().map(|o| o.length_scale).collect(),
            archive.objectives.iter().map(|o| o.output_scale).collect(),
            archive.objectives.iter().map(|o| o.constant_mean).collect(),
        )?;
        let prior = PosteriorState::prior(archive.dimension, kernel, NoiseModel::fixed(0.0, m)?)?;
        let mut obs = Vec::with_capacity(archive.locations.len() * m);
        for (x, v) in archive.locations.iter().zip(&archive.values) {
            if v.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: v.len() });
            }
            for (j, y) in v.iter().enumerate() {
                obs.push(ObservationRecord::new(x.clone(), j, *y, 0.0));
            }
        }
        let interpolant = prior.condition(&obs)?;
        Ok(Self { archive, costs, interpolant })
    }

    pub fn family(&self) -> u8 {
        self.archive.family
    }

    pub fn seed(&self) -> u64 {
        self.archive.seed
    }

    pub fn dim(&self) -> usize {
        self.archive.dimension
    }

    pub fn num_objectives(&self) -> usize {
        self.archive.objectives.len()
    }

    pub fn costs(&self) -> &CostVector {
        &self.costs
    }

    pub fn noise_sd(&self, m: usize) -> f64 {
        self.archive.objectives[m].noise_sd
    }

    pub fn archive(&self) -> &ProblemArchive {
        &self.archive
    }

    /// Noise-free value of objective `m` at `x`.
    pub fn true_value(&self, m: usize, x: &[f64]) -> f64 {
        self.interpolant.mean(m, x)
    }

    /// Noise-free values of every objective at `x`.
    pub fn true_values(&self, x: &[f64]) -> Vec<f64> {
        self.interpolant.mean_vector(x)
    }

    /// A possibly noisy observation of objective `m` at `x`.
    pub fn evaluate<R: Rng + ?Sized>(&self, x: &[f64], m: usize, rng: &mut R) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        check_in_box(x)?;
        if m >= self.num_objectives() {
            return Err(Error::ObjectiveIndex { index: m, count: self.num_objectives() });
        }
        let sd = self.noise_sd(m);
        let f = self.true_value(m, x);
        if sd > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            Ok(f + sd * z)
        } else {
            Ok(f)
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.archive).expect("archive serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let archive: ProblemArchive = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::from_archive(archive).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|message| Error::Format { path: path.to_path_buf(), message })
    }

    /// Canonical file name of the problem.
    pub fn file_name(&self) -> String {
        problem_file_name(self.family(), self.seed())
    }
}

pub fn problem_file_name(family: u8, seed: u64) -> String {
    format!("family{family}_seed{seed}.problem")
}
