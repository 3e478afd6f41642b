//! C ABI over the `cmokg` library.
//!
//! Every fallible function returns a [`CmokgStatus`]. On failure the
//! message is available from [`cmokg_last_error_message`] on the same
//! thread until the next failing call. Handles are opaque; each `*_new`,
//! `*_generate` or `*_load` must be paired with the matching `*_free`.
//! Arrays are passed as pointer plus length, and point sets as row-major
//! `count x dim` blocks. Panics are caught at the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cmokg::kg::{cmokg, expected_max_affine};
use cmokg::problems::SyntheticProblem;
use cmokg::{CostVector, Error, KernelSpec, NoiseModel, ObservationRecord, PosteriorState, SimplexWeight};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmokgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

/// A synthetic benchmark problem.
pub struct CmokgProblem {
    inner: SyntheticProblem,
}

/// A multi-output GP posterior.
pub struct CmokgPosterior {
    inner: PosteriorState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

type Failure = (CmokgStatus, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn classify(e: Error) -> Failure {
    let status = match &e {
        Error::DimensionMismatch { .. } | Error::ObjectiveIndex { .. } => CmokgStatus::DimensionMismatch,
        Error::Factorization { .. } | Error::Domain(_) => CmokgStatus::Numerical,
        Error::Io { .. } | Error::Format { .. } => CmokgStatus::Io,
        _ => CmokgStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CmokgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CmokgStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CmokgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (CmokgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| (CmokgStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

fn rows(flat: &[f64], dim: usize) -> Vec<Vec<f64>> {
    flat.chunks(dim).map(<[f64]>::to_vec).collect()
}

fn check_point(x: &[f64], dim: usize) -> Result<(), Failure> {
    if x.len() != dim {
        return Err(classify(Error::DimensionMismatch { expected: dim, got: x.len() }));
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(classify(Error::OutOfBounds { point: x.to_vec() }));
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cmokg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn cmokg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Generates a problem of `family` (1 or 2) from `seed`.
#[no_mangle]
pub unsafe extern "C" fn cmokg_problem_generate(family: u8, seed: u64, out: *mut *mut CmokgProblem) -> CmokgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let inner = SyntheticProblem::generate(family, seed).map_err(classify)?;
        *out = Box::into_raw(Box::new(CmokgProblem { inner }));
        Ok(())
    })
}

/// Loads a problem archive written by `cmokg_problem_save` or the CLI.
#[no_mangle]
pub unsafe extern "C" fn cmokg_problem_load(path: *const c_char, out: *mut *mut CmokgProblem) -> CmokgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let inner = SyntheticProblem::load(path_arg(path)?).map_err(classify)?;
        *out = Box::into_raw(Box::new(CmokgProblem { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cmokg_problem_save(problem: *const CmokgProblem, path: *const c_char) -> CmokgStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        p.inner.save(path_arg(path)?).map_err(classify)
    })
}

#[no_mangle]
pub unsafe extern "C" fn cmokg_problem_dim(problem: *const CmokgProblem, out: *mut usize) -> CmokgStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        *out_ref(out, "out")? = p.inner.dim();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cmokg_problem_num_objectives(problem: *const CmokgProblem, out: *mut usize) -> CmokgStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        *out_ref(out, "out")? = p.inner.num_objectives();
        Ok(())
    })
}

/// Noise-free objective values at `x`; `out` holds `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn cmokg_problem_true_values(
    problem: *const CmokgProblem,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> CmokgStatus {
    guard(|| {
        let p = &problem.as_ref().ok_or_else(|| null("problem"))?.inner;
        let x = slice(x, x_len, "x")?;
        check_point(x, p.dim())?;
        if out_len != p.num_objectives() {
            return Err(classify(Error::DimensionMismatch { expected: p.num_objectives(), got: out_len }));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(&p.true_values(x));
        Ok(())
    })
}

/// One noisy evaluation of objective `objective`; the noise draw is a
/// function of `rng_seed` only.
#[no_mangle]
pub unsafe extern "C" fn cmokg_problem_evaluate(
    problem: *const CmokgProblem,
    x: *const f64,
    x_len: usize,
    objective: usize,
    rng_seed: u64,
    out: *mut f64,
) -> CmokgStatus {
    guard(|| {
        let p = &problem.as_ref().ok_or_else(|| null("problem"))?.inner;
        let x = slice(x, x_len, "x")?;
        let out = out_ref(out, "out")?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        *out = p.evaluate(x, objective, &mut rng).map_err(classify)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cmokg_problem_free(problem: *mut CmokgProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// A GP prior over `[0,1]^dim` with one Matern-5/2 kernel per objective.
/// Each array holds `num_objectives` entries.
#[no_mangle]
pub unsafe extern "C" fn cmokg_posterior_new(
    dim: usize,
    num_objectives: usize,
    length_scale: *const f64,
    output_scale: *const f64,
    constant_mean: *const f64,
    noise_variance: *const f64,
    out: *mut *mut CmokgPosterior,
) -> CmokgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if num_objectives == 0 {
            return Err((CmokgStatus::InvalidArgument, "num_objectives must be positive".into()));
        }
        let kernel = KernelSpec::matern52(
            slice(length_scale, num_objectives, "length_scale")?.to_vec(),
            slice(output_scale, num_objectives, "output_scale")?.to_vec(),
            slice(constant_mean, num_objectives, "constant_mean")?.to_vec(),
        )
        .map_err(classify)?;
        let noise =
            NoiseModel::new(slice(noise_variance, num_objectives, "noise_variance")?.to_vec(), vec![false; num_objectives]).map_err(classify)?;
        let inner = PosteriorState::prior(dim, kernel, noise).map_err(classify)?;
        *out = Box::into_raw(Box::new(CmokgPosterior { inner }));
        Ok(())
    })
}

/// Adds `count` observations in place. `locations` is `count x dim`.
/// On failure the posterior is unchanged.
#[no_mangle]
pub unsafe extern "C" fn cmokg_posterior_condition(
    posterior: *mut CmokgPosterior,
    locations: *const f64,
    objectives: *const usize,
    values: *const f64,
    count: usize,
) -> CmokgStatus {
    guard(|| {
        let post = posterior.as_mut().ok_or_else(|| null("posterior"))?;
        let dim = post.inner.dim();
        let xs = slice(locations, count * dim, "locations")?;
        let ys = slice(values, count, "values")?;
        if count > 0 && objectives.is_null() {
            return Err(null("objectives"));
        }
        let ms: &[usize] = if count == 0 { &[] } else { std::slice::from_raw_parts(objectives, count) };
        let obs: Vec<ObservationRecord> =
            rows(xs, dim).into_iter().zip(ms).zip(ys).map(|((x, &m), &y)| ObservationRecord::new(x, m, y, 1.0)).collect();
        post.inner = post.inner.condition(&obs).map_err(classify)?;
        Ok(())
    })
}

/// Posterior mean of `objective` at `x`.
#[no_mangle]
pub unsafe extern "C" fn cmokg_posterior_mean(
    posterior: *const CmokgPosterior,
    objective: usize,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
) -> CmokgStatus {
    posterior_query(posterior, objective, x, x_len, out, |s, m, x| s.mean(m, x))
}

/// Posterior variance of `objective` at `x`.
#[no_mangle]
pub unsafe extern "C" fn cmokg_posterior_variance(
    posterior: *const CmokgPosterior,
    objective: usize,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
) -> CmokgStatus {
    posterior_query(posterior, objective, x, x_len, out, |s, m, x| s.variance(m, x))
}

unsafe fn posterior_query(
    posterior: *const CmokgPosterior,
    objective: usize,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    f: impl FnOnce(&PosteriorState, usize, &[f64]) -> f64,
) -> CmokgStatus {
    guard(|| {
        let s = &posterior.as_ref().ok_or_else(|| null("posterior"))?.inner;
        let x = slice(x, x_len, "x")?;
        check_point(x, s.dim())?;
        if objective >= s.num_objectives() {
            return Err(classify(Error::ObjectiveIndex { index: objective, count: s.num_objectives() }));
        }
        *out_ref(out, "out")? = f(s, objective, x);
        Ok(())
    })
}

/// Cost-weighted knowledge gradient of observing `objective` at `x` for
/// weight `lambda`, maximizing over the `grid_count x dim` grid.
#[no_mangle]
pub unsafe extern "C" fn cmokg_posterior_cmokg(
    posterior: *const CmokgPosterior,
    x: *const f64,
    x_len: usize,
    objective: usize,
    lambda: *const f64,
    lambda_len: usize,
    grid: *const f64,
    grid_count: usize,
    costs: *const f64,
    costs_len: usize,
    out: *mut f64,
) -> CmokgStatus {
    guard(|| {
        let s = &posterior.as_ref().ok_or_else(|| null("posterior"))?.inner;
        let x = slice(x, x_len, "x")?;
        check_point(x, s.dim())?;
        let lambda = SimplexWeight::new(slice(lambda, lambda_len, "lambda")?.to_vec()).map_err(classify)?;
        let grid = rows(slice(grid, grid_count * s.dim(), "grid")?, s.dim());
        let costs = CostVector::new(slice(costs, costs_len, "costs")?.to_vec()).map_err(classify)?;
        if costs.len() != s.num_objectives() {
            return Err(classify(Error::DimensionMismatch { expected: s.num_objectives(), got: costs.len() }));
        }
        *out_ref(out, "out")? = cmokg(s, x, objective, &lambda, &grid, &costs).map_err(classify)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cmokg_posterior_free(posterior: *mut CmokgPosterior) {
    if !posterior.is_null() {
        drop(Box::from_raw(posterior));
    }
}

/// `E[max_j (a_j + b_j Z)]` for standard normal `Z` over `count` lines.
#[no_mangle]
pub unsafe extern "C" fn cmokg_expected_max_affine(a: *const f64, b: *const f64, count: usize, out: *mut f64) -> CmokgStatus {
    guard(|| {
        let a = slice(a, count, "a")?;
        let b = slice(b, count, "b")?;
        *out_ref(out, "out")? = expected_max_affine(a, b).map_err(classify)?;
        Ok(())
    })
}
