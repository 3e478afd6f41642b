//! Linear scalarization, simplex weights and scrambled Sobol' streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A weight vector on the standard simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeight(Vec<f64>);

impl SimplexWeight {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("simplex weight"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(format!("negative or non-finite weight in {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// All weight on objective `m` of `count`.
    pub fn vertex(m: usize, count: usize) -> Self {
        let mut w = vec![0.0; count];
        w[m] = 1.0;
        Self(w)
    }

    pub fn uniform(count: usize) -> Self {
        Self(vec![1.0 / count as f64; count])
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

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(w, x)| w * x).sum()
    }
}

impl std::ops::Index<usize> for SimplexWeight {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `λ · v`.
pub fn linear_scalarize(lambda: &SimplexWeight, v: &[f64]) -> Result<f64> {
    if lambda.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: lambda.len(), got: v.len() });
    }
    Ok(lambda.dot(v))
}

/// Maps a point of the unit cube `[0,1]^(M-1)` to the simplex in `R^M`.
///
/// For `M = 2` this is `(u, 1 - u)`. Higher dimensions use the spacings of
/// the sorted coordinates, which is uniform on the simplex when `u` is
/// uniform on the cube.
pub fn simplex_from_cube(u: &[f64]) -> SimplexWeight {
    let mut sorted: Vec<f64> = u.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut weights = Vec::with_capacity(u.len() + 1);
    let mut prev = 0.0;
    for &s in &sorted {
        weights.push(s - prev);
        prev = s;
    }
    weights.push(1.0 - prev);
    if u.len() == 1 {
        // Keep the exact (u, 1 - u) form for two objectives.
        weights = vec![sorted[0], 1.0 - sorted[0]];
    }
    SimplexWeight(weights)
}

// Primitive polynomial data (degree s, coefficients a, initial m_k) for
// dimensions 2.. from the Joe-Kuo new-joe-kuo-6.21201 table. Dimension 1
// is the van der Corput sequence.
const DIRECTION_TABLE: &[(u32, u32, &[u32])] = &[
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
];

pub const MAX_SOBOL_DIMENSION: usize = DIRECTION_TABLE.len() + 1;

const BITS: usize = 32;

fn direction_numbers(dim: usize) -> Vec<[u32; BITS]> {
    let mut out = Vec::with_capacity(dim);
    let mut first = [0u32; BITS];
    for (j, v) in first.iter_mut().enumerate() {
        *v = 1 << (BITS - 1 - j);
    }
    out.push(first);
    for &(s, a, m_init) in DIRECTION_TABLE.iter().take(dim.saturating_sub(1)) {
        let s = s as usize;
        let mut m = [0u32; BITS];
        m[..s].copy_from_slice(m_init);
        for k in s..BITS {
            let mut value = m[k - s] ^ (m[k - s] << s);
            for i in 1..s {
                if (a >> (s - 1 - i)) & 1 == 1 {
                    value ^= m[k - i] << i;
                }
            }
            m[k] = value;
        }
        let mut v = [0u32; BITS];
        for k in 0..BITS {
            v[k] = m[k] << (BITS - 1 - k);
        }
        out.push(v);
    }
    out
}

/// A (optionally scrambled) Sobol' point stream.
///
/// Points are emitted in Gray-code order and the all-zero point at index 0
/// is skipped. Scrambling is a digital random shift: each coordinate's
/// 32-bit integer is XORed with a per-dimension word drawn from the seed.
#[derive(Clone, Debug)]
pub struct SobolStream {
    dimension: usize,
    scramble_seed: Option<u64>,
    cursor: u64,
    directions: Vec<[u32; BITS]>,
    shift: Vec<u32>,
}

impl SobolStream {
    pub fn new(dimension: usize, scramble_seed: Option<u64>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter("sobol dimension must be positive".into()));
        }
        if dimension > MAX_SOBOL_DIMENSION {
            return Err(Error::UnsupportedDimension(dimension));
        }
        let shift = match scramble_seed {
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..dimension).map(|_| rng.gen::<u32>()).collect()
            }
            None => vec![0; dimension],
        };
        Ok(Self { dimension, scramble_seed, cursor: 0, directions: direction_numbers(dimension), shift })
    }

    pub fn scrambled(dimension: usize, seed: u64) -> Result<Self> {
        Self::new(dimension, Some(seed))
    }

    pub fn unscrambled(dimension: usize) -> Result<Self> {
        Self::new(dimension, None)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn scramble_seed(&self) -> Option<u64> {
        self.scramble_seed
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Repositions the stream; `cursor` counts emitted points.
    pub fn seek(&mut self, cursor: u64) {
        self.cursor = cursor;
    }

    /// The point at sequence index `index` (index 0 is the origin).
    pub fn point_at(&self, index: u64) -> Vec<f64> {
        let gray = index ^ (index >> 1);
        (0..self.dimension)
            .map(|d| {
                let mut x = 0u32;
                let mut bits = gray;
                let mut j = 0;
                while bits != 0 && j < BITS {
                    if bits & 1 == 1 {
                        x ^= self.directions[d][j];
                    }
                    bits >>= 1;
                    j += 1;
                }
                f64::from(x ^ self.shift[d]) / 4_294_967_296.0
            })
            .collect()
    }

    pub fn next_points(&mut self, n: usize) -> Vec<Vec<f64>> {
        let points = (0..n as u64).map(|i| self.point_at(self.cursor + i + 1)).collect();
        self.cursor += n as u64;
        points
    }
}

/// `n` simplex weights from the next points of a stream of dimension `M - 1`.
pub fn simplex_weights(stream: &mut SobolStream, n: usize) -> Vec<SimplexWeight> {
    stream.next_points(n).iter().map(|u| simplex_from_cube(u)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn unscrambled_first_points() {
        let mut s = SobolStream::unscrambled(2).unwrap();
        let pts = s.next_points(3);
        assert_eq!(pts, vec![vec![0.5, 0.5], vec![0.75, 0.25], vec![0.25, 0.75]]);
        assert_eq!(s.cursor(), 3);
    }

    #[test]
    fn matches_reference_points_in_all_dimensions() {
        // Reference values from an independent Joe-Kuo implementation.
        let s = SobolStream::unscrambled(21).unwrap();
        let p1000 = [
            0.2197265625, 0.0966796875, 0.5185546875, 0.6767578125, 0.2802734375, 0.9072265625,
            0.0458984375, 0.8994140625, 0.5009765625, 0.0693359375, 0.0849609375, 0.2548828125,
            0.1611328125, 0.3837890625, 0.1435546875, 0.3701171875, 0.7197265625, 0.3447265625,
            0.9912109375, 0.7255859375, 0.5224609375,
        ];
        let p12345 = [
            0.64093017578125, 0.81341552734375, 0.16033935546875, 0.52679443359375,
            0.88848876953125, 0.05889892578125, 0.12725830078125, 0.11334228515625,
            0.80181884765625, 0.42962646484375, 0.07427978515625, 0.59881591796875,
            0.93096923828125, 0.94183349609375, 0.03448486328125, 0.64080810546875,
            0.06256103515625, 0.05096435546875, 0.31939697265625, 0.34344482421875,
            0.19927978515625,
        ];
        assert_eq!(s.point_at(1000), p1000);
        assert_eq!(s.point_at(12345), p12345);
    }

    #[test]
    fn dimension_limits() {
        assert!(matches!(SobolStream::unscrambled(22), Err(Error::UnsupportedDimension(22))));
        assert!(SobolStream::unscrambled(0).is_err());
    }

    #[test]
    fn scrambled_streams_differ_but_reproduce() {
        let a = SobolStream::scrambled(2, 1).unwrap().next_points(8);
        let b = SobolStream::scrambled(2, 1).unwrap().next_points(8);
        let c = SobolStream::scrambled(2, 2).unwrap().next_points(8);
        assert_eq!(a, b);
        assert_ne!(a, c);

        let mut s = SobolStream::scrambled(3, 9).unwrap();
        let first = s.next_points(5);
        let rest = s.next_points(5);
        let mut t = SobolStream::scrambled(3, 9).unwrap();
        t.seek(5);
        assert_eq!(t.next_points(5), rest);
        assert_ne!(first, rest);
    }

    fn box_deviation(points: &[Vec<f64>]) -> f64 {
        let mut counts = [0usize; 16];
        for p in points {
            let i = ((p[0] * 4.0) as usize).min(3);
            let j = ((p[1] * 4.0) as usize).min(3);
            counts[i * 4 + j] += 1;
        }
        counts
            .iter()
            .map(|&c| (c as f64 / points.len() as f64 - 1.0 / 16.0).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn lower_box_deviation_than_iid() {
        let sobol = SobolStream::scrambled(2, 17).unwrap().next_points(256);
        let sobol_dev = box_deviation(&sobol);
        let iid_dev: f64 = (0..20)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pts: Vec<Vec<f64>> = (0..256).map(|_| vec![rng.gen(), rng.gen()]).collect();
                box_deviation(&pts)
            })
            .sum::<f64>()
            / 20.0;
        assert!(sobol_dev < iid_dev, "{sobol_dev} vs {iid_dev}");
    }

    #[test]
    fn scalarization_examples() {
        let l = SimplexWeight::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(linear_scalarize(&l, &[3.5, -2.0]).unwrap(), 3.5);
        let h = SimplexWeight::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(linear_scalarize(&h, &[2.0, 4.0]).unwrap(), 3.0);
        assert!(matches!(linear_scalarize(&h, &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(SimplexWeight::new(vec![0.6, 0.6]).is_err());
        assert!(SimplexWeight::new(vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn two_objective_cube_map() {
        assert_eq!(simplex_from_cube(&[0.3]).as_slice(), &[0.3, 0.7]);
    }

    #[test]
    fn first_weight_component_is_uniform() {
        // Kolmogorov-Smirnov against Uniform(0, 1); critical value at 0.01 is 1.628 / sqrt(n).
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut first: Vec<f64> = (0..n).map(|_| simplex_from_cube(&[rng.gen()])[0]).collect();
        first.sort_by(|a, b| a.total_cmp(b));
        let d = first
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
            .fold(0.0, f64::max);
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    }

    proptest! {
        #[test]
        fn cube_map_lands_on_simplex(u in proptest::collection::vec(0.0f64..=1.0, 1..5)) {
            let w = simplex_from_cube(&u);
            prop_assert_eq!(w.len(), u.len() + 1);
            prop_assert!(w.as_slice().iter().all(|&x| x >= 0.0));
            prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn scalarization_is_linear(
            w in 0.0f64..=1.0,
            u in proptest::collection::vec(-10.0f64..10.0, 2),
            v in proptest::collection::vec(-10.0f64..10.0, 2),
        ) {
            let l = simplex_from_cube(&[w]);
            let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let lhs = linear_scalarize(&l, &sum).unwrap();
            let rhs = linear_scalarize(&l, &u).unwrap() + linear_scalarize(&l, &v).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn points_in_unit_cube(seed in any::<u64>(), dim in 1usize..=21) {
            let mut s = SobolStream::scrambled(dim, seed).unwrap();
            for p in s.next_points(16) {
                prop_assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
            }
        }
    }
}
