//! Box-constrained quasi-Newton minimization.
//!
//! A projected BFGS iteration: the inverse-Hessian approximation acts on
//! the variables that are not pinned at an active bound, and an Armijo
//! backtracking search runs along the projected path.

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSearchConfig {
    pub max_iterations: usize,
    /// Stop when the projected gradient's largest component falls below this.
    pub gradient_tolerance: f64,
    /// Stop when a step changes the objective by less than this (relative).
    pub value_tolerance: f64,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        Self { max_iterations: 100, gradient_tolerance: 1e-9, value_tolerance: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(lo, hi);
    }
}

fn pinned(x: f64, g: f64, lo: f64, hi: f64) -> bool {
    (x <= lo && g > 0.0) || (x >= hi && g < 0.0)
}

/// Minimizes `f` over the box `[lower, upper]` from `x0`.
///
/// `f` returns the value and gradient at a point.
pub fn minimize_bounded<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], cfg: &LocalSearchConfig) -> LocalResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return LocalResult { x, value: fx, iterations: 0, converged: false };
    }
    let mut h = identity(n);
    let mut converged = false;
    let mut iterations = 0;
    let mut first = true;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let free: Vec<bool> = (0..n).map(|i| !pinned(x[i], g[i], lower[i], upper[i])).collect();
        let pg_norm = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_norm < cfg.gradient_tolerance {
            converged = true;
            break;
        }

        let mut d = vec![0.0; n];
        for i in (0..n).filter(|&i| free[i]) {
            d[i] = -(0..n).filter(|&j| free[j]).map(|j| h[i][j] * g[j]).sum::<f64>();
        }
        if dot(&d, &g) >= 0.0 {
            h = identity(n);
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
        }

        let d_max = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let span = lower.iter().zip(upper).map(|(l, u)| u - l).fold(f64::INFINITY, f64::min);
        let mut t = if first && d_max > 0.0 { (0.1 * span / d_max).min(1.0) } else { 1.0 };
        first = false;

        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            project(&mut trial, lower, upper);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|s| *s == 0.0) {
                break;
            }
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * dot(&g, &step) {
                accepted = Some((trial, ft, gt, step));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new, g_new, s)) = accepted else {
            converged = true;
            break;
        };

        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            bfgs_update(&mut h, &s, &y, sy);
        }
        let decrease = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        if decrease.abs() <= cfg.value_tolerance * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
    }
    LocalResult { x, value: fx, iterations, converged }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Central finite-difference gradient, one-sided where a bound is too close.
pub fn fd_gradient<F>(f: &mut F, x: &[f64], fx: f64, lower: &[f64], upper: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let up = (x[i] + step).min(upper[i]);
            let down = (x[i] - step).max(lower[i]);
            let g = if up > x[i] && down < x[i] {
                probe[i] = up;
                let fu = f(&probe);
                probe[i] = down;
                let fd = f(&probe);
                (fu - fd) / (up - down)
            } else if up > x[i] {
                probe[i] = up;
                (f(&probe) - fx) / (up - x[i])
            } else if down < x[i] {
                probe[i] = down;
                (fx - f(&probe)) / (x[i] - down)
            } else {
                0.0
            };
            probe[i] = x[i];
            g
        })
        .collect()
}

/// Minimizes a value-only function using finite-difference gradients.
pub fn minimize_bounded_fd<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    step: f64,
    cfg: &LocalSearchConfig,
) -> LocalResult
where
    F: FnMut(&[f64]) -> f64,
{
    minimize_bounded(
        |x| {
            let fx = f(x);
            let g = fd_gradient(&mut f, x, fx, lower, upper, step);
            (fx, g)
        },
        x0,
        lower,
        upper,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_interior_minimum() {
        let f = |x: &[f64]| {
            let v = (x[0] - 0.3).powi(2) + 10.0 * (x[1] - 0.7).powi(2) + 0.5 * (x[0] - 0.3) * (x[1] - 0.7);
            let g = vec![2.0 * (x[0] - 0.3) + 0.5 * (x[1] - 0.7), 20.0 * (x[1] - 0.7) + 0.5 * (x[0] - 0.3)];
            (v, g)
        };
        let r = minimize_bounded(f, &[0.9, 0.1], &[0.0, 0.0], &[1.0, 1.0], &LocalSearchConfig::default());
        assert!(r.converged);
        assert!((r.x[0] - 0.3).abs() < 1e-6 && (r.x[1] - 0.7).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn active_bound() {
        let f = |x: &[f64]| ((x[0] + 1.0).powi(2) + (x[1] - 0.5).powi(2), vec![2.0 * (x[0] + 1.0), 2.0 * (x[1] - 0.5)]);
        let r = minimize_bounded(f, &[0.5, 0.9], &[0.0, 0.0], &[1.0, 1.0], &LocalSearchConfig::default());
        assert_eq!(r.x[0], 0.0);
        assert!((r.x[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn finite_difference_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let cfg = LocalSearchConfig { max_iterations: 500, ..Default::default() };
        let r = minimize_bounded_fd(f, &[-1.0, 1.5], &[-2.0, -2.0], &[2.0, 2.0], 1e-6, &cfg);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn one_sided_differences_at_bounds() {
        let mut f = |x: &[f64]| 3.0 * x[0];
        let g = fd_gradient(&mut f, &[1.0], 3.0, &[0.0], &[1.0], 1e-4);
        assert!((g[0] - 3.0).abs() < 1e-9);
    }
}
