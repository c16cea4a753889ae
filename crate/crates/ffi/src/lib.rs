//! C ABI for the scaled subgradient recovery library.
//!
//! Everything crosses the boundary through opaque handles plus plain C
//! scalars. Handles are created and destroyed by this library only; passing a
//! handle after freeing it is undefined behavior, as usual for C APIs. All
//! functions return [`SsmStatus`] unless they are trivial accessors, and a
//! thread-local message slot carries the last error detail.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use scaledsm::bench;
use scaledsm::error::Error;
use scaledsm::init::{self, InitOptions};
use scaledsm::losses::{Loss, LossKind};
use scaledsm::metrics;
use scaledsm::operators::{SensingOperator, StorageMode};
use scaledsm::problem::{self, GroundTruth, Observations};
use scaledsm::solvers::{self, Algorithm, SolverConfig, StepSchedule};
use scaledsm::stream::SeedStream;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericalFailure = 3,
    IoFailure = 4,
    Panic = 5,
}

/// Measurement ensembles exposed through the C API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmOperatorKind {
    MatrixSensing = 0,
    QuadraticSampling = 1,
}

/// Iterative methods exposed through the C API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmAlgorithm {
    ScaledSm = 0,
    VanillaSm = 1,
    ScaledGd = 2,
    Gd = 3,
}

/// Stepsize schedules exposed through the C API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmSchedule {
    /// `param1` is the optimal loss value (pass the planted noise norm, or a
    /// negative value to use the oracle value on corrupted data).
    Polyak = 0,
    /// `param1` is lambda, `param2` is q.
    Geometric = 1,
    /// `param1` is the constant stepsize.
    Constant = 2,
}

/// One solver trace row.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SsmTraceRow {
    pub iter: usize,
    pub fval: f64,
    pub eta: f64,
    pub rel_err: f64,
    /// NaN when the distance was not recorded.
    pub dist: f64,
    pub elapsed_ns: u64,
}

/// Terminal solver status.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmRunStatus {
    Converged = 0,
    MaxIters = 1,
    Stalled = 2,
    Diverged = 3,
}

/// Opaque problem instance: planted truth, operator, observations.
pub struct SsmProblem {
    gt: GroundTruth,
    op: SensingOperator,
    obs: Observations,
    rank: usize,
}

/// Opaque finished run: the trace plus its terminal status.
pub struct SsmRun {
    trace: solvers::SolverTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> SsmStatus {
    match err {
        Error::InvalidInput(_) | Error::Config(_) => SsmStatus::InvalidArgument,
        Error::Numerical(_) => SsmStatus::NumericalFailure,
        Error::Io(_) => SsmStatus::IoFailure,
    }
}

fn guard<F: FnOnce() -> SsmStatus>(f: F) -> SsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic crossed the FFI boundary");
            SsmStatus::Panic
        }
    }
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ssm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn ssm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a synthetic recovery problem: planted rank-`r` ground truth with
/// condition number `kappa`, `m` measurements of the requested ensemble,
/// bounded noise of l1 budget `sigma_w`, and a `p_s` fraction of outliers.
///
/// `use_dense_storage != 0` materializes the measurement data; otherwise rows
/// are regenerated from the seed on every pass.
#[no_mangle]
pub extern "C" fn ssm_problem_create(
    kind: SsmOperatorKind,
    n: usize,
    r: usize,
    kappa: f64,
    m: usize,
    sigma_w: f64,
    p_s: f64,
    seed: u64,
    use_dense_storage: i32,
    out: *mut *mut SsmProblem,
) -> SsmStatus {
    guard(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return SsmStatus::NullPointer;
        }
        let storage = if use_dense_storage != 0 {
            StorageMode::Dense
        } else {
            StorageMode::Seeded
        };
        let stream = SeedStream::new(seed);
        let psd = kind == SsmOperatorKind::QuadraticSampling;
        let build = || -> Result<SsmProblem, Error> {
            let gt = problem::make_ground_truth(n, n, r, kappa, psd, &stream.child("truth"))?;
            let op_seed = stream.child("operator").seed();
            let op = match kind {
                SsmOperatorKind::MatrixSensing => {
                    SensingOperator::matrix_sensing(n, n, m, op_seed, storage)?
                }
                SsmOperatorKind::QuadraticSampling => {
                    SensingOperator::quadratic_sampling(n, m, op_seed, storage)?
                }
            };
            let obs = problem::observe(&op, &gt, sigma_w, p_s, &stream)?;
            Ok(SsmProblem { gt, op, obs, rank: r })
        };
        match build() {
            Ok(problem) => {
                unsafe { *out = Box::into_raw(Box::new(problem)) };
                SsmStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

#[no_mangle]
pub extern "C" fn ssm_problem_free(problem: *mut SsmProblem) {
    if !problem.is_null() {
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Number of measurements in the problem.
#[no_mangle]
pub extern "C" fn ssm_problem_m(problem: *const SsmProblem) -> usize {
    if problem.is_null() {
        return 0;
    }
    unsafe { &*problem }.op.m()
}

/// Loss value at the planted matrix (`||w + s||_1`), the oracle Polyak target.
#[no_mangle]
pub extern "C" fn ssm_problem_oracle_fstar(problem: *const SsmProblem) -> f64 {
    if problem.is_null() {
        return f64::NAN;
    }
    unsafe { &*problem }.obs.l1_noise_norm()
}

/// Runs a solver from the truncated spectral initialization.
///
/// For `SsmSchedule::Polyak`, a negative `param1` requests the oracle optimal
/// value `||w + s||_1`; otherwise `param1` is used as `fstar`. For
/// `SsmSchedule::Geometric`, `param1` is lambda and `param2` is q. For
/// `SsmSchedule::Constant`, `param1` is the stepsize.
#[no_mangle]
pub extern "C" fn ssm_solve(
    problem: *const SsmProblem,
    algorithm: SsmAlgorithm,
    schedule: SsmSchedule,
    param1: f64,
    param2: f64,
    max_iters: usize,
    tol_rel_err: f64,
    record_dist: i32,
    out: *mut *mut SsmRun,
) -> SsmStatus {
    guard(|| {
        if problem.is_null() || out.is_null() {
            set_error("null pointer");
            return SsmStatus::NullPointer;
        }
        let p = unsafe { &*problem };
        let algorithm = match algorithm {
            SsmAlgorithm::ScaledSm => Algorithm::ScaledSm,
            SsmAlgorithm::VanillaSm => Algorithm::VanillaSm,
            SsmAlgorithm::ScaledGd => Algorithm::ScaledGd,
            SsmAlgorithm::Gd => Algorithm::Gd,
        };
        let schedule = match schedule {
            SsmSchedule::Polyak => StepSchedule::Polyak {
                fstar: if param1 < 0.0 {
                    p.obs.l1_noise_norm()
                } else {
                    param1
                },
            },
            SsmSchedule::Geometric => StepSchedule::Geometric {
                lambda: param1,
                q: param2,
            },
            SsmSchedule::Constant => StepSchedule::Constant { eta: param1 },
        };
        let mut config = SolverConfig::new(algorithm, schedule);
        if max_iters > 0 {
            config.max_iters = max_iters;
        }
        if tol_rel_err > 0.0 {
            config.tol_rel_err = tol_rel_err;
        }
        config.record_dist = record_dist != 0;

        let kind = if algorithm.needs_least_squares() {
            LossKind::LeastSquares
        } else {
            LossKind::L1
        };
        let run = || -> Result<SsmRun, Error> {
            let f0 = init::truncated_spectral_init(
                &p.op,
                &p.obs.y,
                p.rank,
                p.obs.p_s,
                &InitOptions::default(),
            )?;
            let loss = Loss::new(kind, &p.op, &p.obs.y);
            let trace = solvers::run(&config, &loss, f0, Some(&p.gt))?;
            Ok(SsmRun { trace })
        };
        match run() {
            Ok(r) => {
                unsafe { *out = Box::into_raw(Box::new(r)) };
                SsmStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

#[no_mangle]
pub extern "C" fn ssm_run_free(run: *mut SsmRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Number of recorded trace rows.
#[no_mangle]
pub extern "C" fn ssm_run_len(run: *const SsmRun) -> usize {
    if run.is_null() {
        return 0;
    }
    unsafe { &*run }.trace.rows.len()
}

#[no_mangle]
pub extern "C" fn ssm_run_status(run: *const SsmRun) -> SsmRunStatus {
    if run.is_null() {
        return SsmRunStatus::Diverged;
    }
    match unsafe { &*run }.trace.status {
        solvers::SolverStatus::Converged => SsmRunStatus::Converged,
        solvers::SolverStatus::MaxIters => SsmRunStatus::MaxIters,
        solvers::SolverStatus::Stalled => SsmRunStatus::Stalled,
        solvers::SolverStatus::Diverged => SsmRunStatus::Diverged,
    }
}

/// Copies row `index` into `out`. Returns `InvalidArgument` when out of range.
#[no_mangle]
pub extern "C" fn ssm_run_row(
    run: *const SsmRun,
    index: usize,
    out: *mut SsmTraceRow,
) -> SsmStatus {
    if run.is_null() || out.is_null() {
        set_error("null pointer");
        return SsmStatus::NullPointer;
    }
    let trace = &unsafe { &*run }.trace;
    let Some(row) = trace.rows.get(index) else {
        set_error("row index out of range");
        return SsmStatus::InvalidArgument;
    };
    unsafe {
        *out = SsmTraceRow {
            iter: row.iter,
            fval: row.fval,
            eta: row.eta,
            rel_err: row.rel_err,
            dist: row.dist.unwrap_or(f64::NAN),
            elapsed_ns: row.elapsed_ns,
        };
    }
    SsmStatus::Ok
}

/// Final relative reconstruction error of the run.
#[no_mangle]
pub extern "C" fn ssm_run_final_rel_err(run: *const SsmRun) -> f64 {
    if run.is_null() {
        return f64::NAN;
    }
    unsafe { &*run }.trace.final_rel_err()
}

/// First iteration at which the relative error reached `tol`, or -1.
#[no_mangle]
pub extern "C" fn ssm_run_iters_to_tol(run: *const SsmRun, tol: f64) -> i64 {
    if run.is_null() {
        return -1;
    }
    metrics::iters_to_tol(&unsafe { &*run }.trace, tol)
        .map(|i| i as i64)
        .unwrap_or(-1)
}

/// Writes the trace as CSV (`iter,fval,eta,rel_err,dist,elapsed_ns`).
///
/// `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub extern "C" fn ssm_run_write_csv(run: *const SsmRun, path: *const c_char) -> SsmStatus {
    guard(|| {
        if run.is_null() || path.is_null() {
            set_error("null pointer");
            return SsmStatus::NullPointer;
        }
        let path_str = match unsafe { std::ffi::CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("path is not valid UTF-8");
                return SsmStatus::InvalidArgument;
            }
        };
        let trace = &unsafe { &*run }.trace;
        let write = || -> Result<(), Error> {
            let mut file = std::fs::File::create(Path::new(path_str))?;
            trace.write_csv(&mut file)
        };
        match write() {
            Ok(()) => SsmStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Estimates the operator's mixed-norm RIP constants by randomized probing;
/// writes `delta1_hat <= delta2_hat` and (when outliers are planted) the
/// S-outlier bound into the out parameters. `delta3_out` may be null.
#[no_mangle]
pub extern "C" fn ssm_problem_estimate_rip(
    problem: *const SsmProblem,
    trials: usize,
    delta1_out: *mut f64,
    delta2_out: *mut f64,
    delta3_out: *mut f64,
) -> SsmStatus {
    guard(|| {
        if problem.is_null() || delta1_out.is_null() || delta2_out.is_null() {
            set_error("null pointer");
            return SsmStatus::NullPointer;
        }
        let p = unsafe { &*problem };
        let stream = SeedStream::new(p.op.seed()).child("probes");
        match p.op.estimate_mixed_rip(p.rank, trials, &stream) {
            Ok(est) => {
                unsafe {
                    *delta1_out = est.delta1_hat;
                    *delta2_out = est.delta2_hat;
                }
                if !delta3_out.is_null() {
                    let d3 = if p.obs.outlier_support.is_empty() {
                        f64::NAN
                    } else {
                        match p.op.estimate_outlier_bound(
                            &p.obs.outlier_support,
                            p.rank,
                            trials,
                            &stream,
                        ) {
                            Ok(d3) => d3,
                            Err(e) => {
                                set_error(&e.to_string());
                                return status_of(&e);
                            }
                        }
                    };
                    unsafe { *delta3_out = d3 };
                }
                SsmStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Runs a full experiment config (TOML text) as the CLI `run` subcommand
/// would, writing traces and reports under `out_dir`.
#[no_mangle]
pub extern "C" fn ssm_run_experiment(
    config_toml: *const c_char,
    out_dir: *const c_char,
) -> SsmStatus {
    guard(|| {
        if config_toml.is_null() || out_dir.is_null() {
            set_error("null pointer");
            return SsmStatus::NullPointer;
        }
        let parse = |p: *const c_char| -> Result<&str, SsmStatus> {
            unsafe { std::ffi::CStr::from_ptr(p) }.to_str().map_err(|_| {
                set_error("argument is not valid UTF-8");
                SsmStatus::InvalidArgument
            })
        };
        let (config_text, dir) = match (parse(config_toml), parse(out_dir)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let run = || -> Result<(), Error> {
            let config = bench::ExperimentConfig::from_toml(config_text)?;
            bench::cmd_run(&config, Path::new(dir))?;
            Ok(())
        };
        match run() {
            Ok(()) => SsmStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}
