//! Exercises the C ABI exactly as a foreign caller would: through the
//! `extern "C"` entry points, opaque pointers, and status codes.

use std::ffi::{CStr, CString};
use std::ptr;

use scaledsm_ffi::*;

fn create_problem(kind: SsmOperatorKind, n: usize, r: usize, m: usize, p_s: f64) -> *mut SsmProblem {
    let mut handle: *mut SsmProblem = ptr::null_mut();
    let status = ssm_problem_create(kind, n, r, 4.0, m, 0.0, p_s, 7, 1, &mut handle);
    assert_eq!(status, SsmStatus::Ok);
    assert!(!handle.is_null());
    handle
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(ssm_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn solve_matrix_sensing_through_the_abi() {
    let problem = create_problem(SsmOperatorKind::MatrixSensing, 20, 2, 320, 0.0);
    assert_eq!(ssm_problem_m(problem), 320);

    let mut run: *mut SsmRun = ptr::null_mut();
    let status = ssm_solve(
        problem,
        SsmAlgorithm::ScaledSm,
        SsmSchedule::Polyak,
        0.0,
        0.0,
        300,
        1e-12,
        0,
        &mut run,
    );
    assert_eq!(status, SsmStatus::Ok);
    assert_eq!(ssm_run_status(run), SsmRunStatus::Converged);
    assert!(ssm_run_final_rel_err(run) <= 1e-12);

    let hit = ssm_run_iters_to_tol(run, 1e-10);
    assert!(hit >= 0, "never reached 1e-10");

    let len = ssm_run_len(run);
    assert!(len > 1);
    let mut row = SsmTraceRow {
        iter: 0,
        fval: 0.0,
        eta: 0.0,
        rel_err: 0.0,
        dist: 0.0,
        elapsed_ns: 0,
    };
    assert_eq!(ssm_run_row(run, 0, &mut row), SsmStatus::Ok);
    assert_eq!(row.iter, 0);
    assert!(row.fval > 0.0);
    assert!(row.dist.is_nan());
    assert_eq!(ssm_run_row(run, len, &mut row), SsmStatus::InvalidArgument);

    ssm_run_free(run);
    ssm_problem_free(problem);
}

#[test]
fn oracle_polyak_handles_outliers() {
    let problem = create_problem(SsmOperatorKind::MatrixSensing, 16, 2, 256, 0.2);
    let fstar = ssm_problem_oracle_fstar(problem);
    assert!(fstar > 0.0);

    let mut run: *mut SsmRun = ptr::null_mut();
    // Negative param1 requests the oracle optimal value.
    let status = ssm_solve(
        problem,
        SsmAlgorithm::ScaledSm,
        SsmSchedule::Polyak,
        -1.0,
        0.0,
        500,
        1e-12,
        0,
        &mut run,
    );
    assert_eq!(status, SsmStatus::Ok);
    assert!(ssm_run_final_rel_err(run) < 1e-8);
    ssm_run_free(run);
    ssm_problem_free(problem);
}

#[test]
fn quadratic_sampling_and_csv_export() {
    let problem = create_problem(SsmOperatorKind::QuadraticSampling, 18, 2, 288, 0.0);
    let mut run: *mut SsmRun = ptr::null_mut();
    let status = ssm_solve(
        problem,
        SsmAlgorithm::ScaledSm,
        SsmSchedule::Polyak,
        0.0,
        0.0,
        800,
        1e-12,
        0,
        &mut run,
    );
    assert_eq!(status, SsmStatus::Ok);
    assert!(ssm_run_final_rel_err(run) < 1e-10);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("trace.csv").to_str().unwrap()).unwrap();
    assert_eq!(ssm_run_write_csv(run, path.as_ptr()), SsmStatus::Ok);
    let text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(text.starts_with("iter,fval,eta,rel_err,dist,elapsed_ns"));
    assert!(text.lines().count() > 2);

    ssm_run_free(run);
    ssm_problem_free(problem);
}

#[test]
fn rip_estimates_cross_the_boundary() {
    let problem = create_problem(SsmOperatorKind::MatrixSensing, 16, 2, 256, 0.2);
    let (mut d1, mut d2, mut d3) = (0.0, 0.0, 0.0);
    let status = ssm_problem_estimate_rip(problem, 25, &mut d1, &mut d2, &mut d3);
    assert_eq!(status, SsmStatus::Ok);
    assert!(d1 > 0.0 && d1 <= d2);
    assert!(d3.is_finite(), "outliers were planted, delta3 expected");
    ssm_problem_free(problem);
}

#[test]
fn null_and_invalid_arguments_return_error_codes() {
    let mut handle: *mut SsmProblem = ptr::null_mut();
    assert_eq!(
        ssm_problem_create(
            SsmOperatorKind::MatrixSensing,
            8,
            2,
            4.0,
            64,
            0.0,
            0.0,
            1,
            1,
            ptr::null_mut()
        ),
        SsmStatus::NullPointer
    );
    // kappa below one is invalid.
    let status = ssm_problem_create(
        SsmOperatorKind::MatrixSensing,
        8,
        2,
        0.5,
        64,
        0.0,
        0.0,
        1,
        1,
        &mut handle,
    );
    assert_eq!(status, SsmStatus::InvalidArgument);
    let msg = unsafe { CStr::from_ptr(ssm_last_error_message()) };
    assert!(msg.to_str().unwrap().contains("kappa"));

    assert_eq!(ssm_run_len(ptr::null()), 0);
    assert!(ssm_run_final_rel_err(ptr::null()).is_nan());
    assert_eq!(ssm_run_iters_to_tol(ptr::null(), 1e-6), -1);
    ssm_problem_free(ptr::null_mut());
    ssm_run_free(ptr::null_mut());
}

#[test]
fn experiment_runner_via_toml_text() {
    let dir = tempfile::tempdir().unwrap();
    let config = CString::new(
        r#"
[problem]
kind = "matrix_sensing"
n = 12
r = 2
kappa = 2.0
seed = 3
storage = "dense"

[solver_defaults]
max_iters = 150

[[solver]]
algorithm = "scaled_sm"
schedule = "polyak"
"#,
    )
    .unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(ssm_run_experiment(config.as_ptr(), out.as_ptr()), SsmStatus::Ok);
    assert!(dir.path().join("summary.csv").exists());
    assert!(dir.path().join("report.json").exists());

    let bad = CString::new("[problem]\nkind = \"matrix_sensing\"\nn = 0\nr = 1\n").unwrap();
    assert_eq!(
        ssm_run_experiment(bad.as_ptr(), out.as_ptr()),
        SsmStatus::InvalidArgument
    );
}

#[test]
fn header_is_generated_with_the_expected_symbols() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("scaledsm.h");
    let text = std::fs::read_to_string(&header).expect("cbindgen header exists");
    for symbol in [
        "ssm_problem_create",
        "ssm_solve",
        "ssm_run_row",
        "ssm_run_iters_to_tol",
        "SsmStatus",
        "SsmTraceRow",
    ] {
        assert!(text.contains(symbol), "header is missing {symbol}");
    }
}
