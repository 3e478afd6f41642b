//! Quick oracle checks runnable from the command line.

use crate::gp::ObservationRecord;
use crate::kg::expected_max_affine;
use crate::pareto::hypervolume_2d;
use crate::{normal, KernelSpec, NoiseModel, PosteriorState, SobolStream};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, got: f64, want: f64, tol: f64) -> Check {
    let err = (got - want).abs();
    Check { name, passed: err <= tol, detail: format!("got {got:.12e}, want {want:.12e}, |err| {err:.2e} (tol {tol:.0e})") }
}

// Simpson's rule on [-12, 12]; the tails are negligible for small slopes.
fn quadrature_max(a: &[f64], b: &[f64]) -> f64 {
    let n = 20_000;
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / n as f64;
    let f = |z: f64| a.iter().zip(b).map(|(a, b)| a + b * z).fold(f64::NEG_INFINITY, f64::max) * normal::pdf(z);
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn run_all() -> Vec<Check> {
    let mut out = vec![check("normal cdf(1)", normal::cdf(1.0), 0.841_344_746_068_542_9, 1e-15)];
    out.push(check("normal quantile(0.975)", normal::quantile(0.975), 1.959_963_984_540_054, 1e-13));

    let (a, b) = ([0.0, 0.3, -0.2, 0.1], [1.0, -0.5, 2.0, 0.0]);
    let got = expected_max_affine(&a, &b).unwrap_or(f64::NAN);
    out.push(check("expected max of lines vs quadrature", got, quadrature_max(&a, &b), 1e-9));

    // One observation: posterior mean is k(x, x0) / (k(x0, x0) + noise) * y.
    let posterior = KernelSpec::matern52(vec![0.3], vec![2.0], vec![0.0])
        .and_then(|k| PosteriorState::prior(1, k, NoiseModel::fixed(0.5, 1)?))
        .and_then(|p| p.condition(&[ObservationRecord::new(vec![0.4], 0, 1.5, 1.0)]));
    let want = {
        let r = 5f64.sqrt() * 0.2 / 0.3;
        let k = 2.0 * (1.0 + r + r * r / 3.0) * (-r).exp();
        k / (2.0 * (1.0 + 1e-6) + 0.5) * 1.5
    };
    let got = posterior.map(|p| p.mean(0, &[0.6])).unwrap_or(f64::NAN);
    out.push(check("single-observation posterior mean", got, want, 1e-9));

    let mean = SobolStream::scrambled(2, 7)
        .map(|mut s| s.next_points(4096).iter().map(|p| p[0] * p[1]).sum::<f64>() / 4096.0)
        .unwrap_or(f64::NAN);
    out.push(check("sobol integral of x*y", mean, 0.25, 1e-3));

    let front: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]];
    out.push(check("hypervolume of three points", hypervolume_2d(&front, [-1.0, -1.0]), 2.0 + 0.75 + 0.5, 1e-12));
    out
}
