//! The four iterative methods and the two stepsize schedules: single-step
//! primitives plus a run loop producing traces.
//!
//! The scaled methods right-multiply each search direction by the inverse
//! Gram of the *other* factor, both taken at the pre-update iterate, which
//! makes the trajectory covariant under invertible reparameterizations
//! `(L, R) -> (L Q, R Q^-T)`. Positive semidefinite problems factor as
//! `X = L L^T` and store the left factor once; the right factor is an alias.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::losses::Loss;
use crate::metrics;
use crate::problem::GroundTruth;

/// Factored iterate `X = L R^T` (or `L L^T` in PSD mode).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    l: Mat,
    /// `None` in PSD mode; the right factor aliases the left one.
    r: Option<Mat>,
}

impl FactorPair {
    pub fn new(l: Mat, r: Mat) -> Self {
        assert_eq!(l.ncols(), r.ncols(), "factor column counts must agree");
        FactorPair { l, r: Some(r) }
    }

    pub fn new_psd(l: Mat) -> Self {
        FactorPair { l, r: None }
    }

    pub fn from_truth(gt: &GroundTruth) -> Self {
        if gt.psd {
            FactorPair::new_psd(gt.lstar.clone())
        } else {
            FactorPair::new(gt.lstar.clone(), gt.rstar.clone())
        }
    }

    pub fn is_psd(&self) -> bool {
        self.r.is_none()
    }

    pub fn left(&self) -> &Mat {
        &self.l
    }

    pub fn right(&self) -> &Mat {
        self.r.as_ref().unwrap_or(&self.l)
    }

    pub fn rank(&self) -> usize {
        self.l.ncols()
    }

    /// The matrix iterate `L R^T`.
    pub fn product(&self) -> Mat {
        &self.l * self.right().transpose()
    }

    pub fn is_finite(&self) -> bool {
        self.l.iter().all(|x| x.is_finite())
            && self.r.as_ref().map_or(true, |r| r.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Subgradient step preconditioned by the factor Grams.
    ScaledSm,
    /// Plain factored subgradient step.
    VanillaSm,
    /// Preconditioned gradient step on the least-squares loss.
    ScaledGd,
    /// Plain factored gradient step on the least-squares loss.
    Gd,
}

impl Algorithm {
    pub fn is_scaled(self) -> bool {
        matches!(self, Algorithm::ScaledSm | Algorithm::ScaledGd)
    }

    pub fn needs_least_squares(self) -> bool {
        matches!(self, Algorithm::ScaledGd | Algorithm::Gd)
    }
}

/// Stepsize schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `eta_t = (f - fstar) / ||subgradient||^2` in the matching metric.
    Polyak { fstar: f64 },
    /// `eta_t = lambda q^t / ||subgradient||` in the matching metric.
    Geometric { lambda: f64, q: f64 },
    Constant { eta: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Polyak { fstar } => {
                if !fstar.is_finite() {
                    return Err(Error::invalid("polyak fstar must be finite"));
                }
            }
            StepSchedule::Geometric { lambda, q } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::invalid(format!("geometric lambda must be > 0, got {lambda}")));
                }
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::invalid(format!("geometric q must lie in (0, 1), got {q}")));
                }
            }
            StepSchedule::Constant { eta } => {
                if !eta.is_finite() {
                    return Err(Error::invalid("constant eta must be finite"));
                }
            }
        }
        Ok(())
    }

    /// The exact-convergence theorem's geometric parameters:
    /// `lambda = sqrt((sqrt(2)-1)/2) * 0.02 sigma_r / chi^2`,
    /// `q = sqrt(1 - 0.16 / chi^2)`.
    pub fn theorem_exact(sigma_r: f64, chi_f: f64) -> StepSchedule {
        let chi = chi_f.max(1.0);
        StepSchedule::Geometric {
            lambda: ((std::f64::consts::SQRT_2 - 1.0) / 2.0).sqrt() * 0.02 * sigma_r / (chi * chi),
            q: (1.0 - 0.16 / (chi * chi)).sqrt(),
        }
    }

    /// The approximate-convergence variant (`q = sqrt(1 - 0.13 / chi^2)`).
    pub fn theorem_noisy(sigma_r: f64, chi_f: f64) -> StepSchedule {
        let chi = chi_f.max(1.0);
        StepSchedule::Geometric {
            lambda: ((std::f64::consts::SQRT_2 - 1.0) / 2.0).sqrt() * 0.02 * sigma_r / (chi * chi),
            q: (1.0 - 0.13 / (chi * chi)).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    pub max_iters: usize,
    pub tol_rel_err: f64,
    pub record_dist: bool,
    /// Optional loss-geometry estimate `L / mu`, carried for reporting and
    /// theorem-default schedules.
    pub chi_f: Option<f64>,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, schedule: StepSchedule) -> Self {
        SolverConfig {
            algorithm,
            schedule,
            max_iters: 1000,
            tol_rel_err: 1e-12,
            record_dist: false,
            chi_f: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIters,
    Stalled,
    Diverged,
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIters => "max_iters",
            SolverStatus::Stalled => "stalled",
            SolverStatus::Diverged => "diverged",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub fval: f64,
    pub eta: f64,
    /// `NaN` when no ground truth was supplied.
    pub rel_err: f64,
    pub dist: Option<f64>,
    pub elapsed_ns: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
    pub status: SolverStatus,
    /// Iteration-stamped events (Gram rank cuts, zero residuals, stalls).
    pub notes: Vec<String>,
}

impl SolverTrace {
    pub fn final_rel_err(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.rel_err)
    }

    pub fn final_fval(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.fval)
    }

    /// CSV schema: `iter,fval,eta,rel_err,dist,elapsed_ns` with floats printed
    /// to 17 significant digits; `dist` is empty when not recorded.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,fval,eta,rel_err,dist,elapsed_ns")?;
        for row in &self.rows {
            let dist = row.dist.map_or(String::new(), fmt_f64);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.iter,
                fmt_f64(row.fval),
                fmt_f64(row.eta),
                fmt_f64(row.rel_err),
                dist,
                row.elapsed_ns
            )?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Vec<TraceRow>> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::invalid(format!(
                    "trace line {lineno}: expected 6 fields, got {}",
                    fields.len()
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("trace line {lineno}: bad {what} '{s}'")))
            };
            rows.push(TraceRow {
                iter: fields[0]
                    .parse()
                    .map_err(|_| Error::invalid(format!("trace line {lineno}: bad iter")))?,
                fval: parse(fields[1], "fval")?,
                eta: parse(fields[2], "eta")?,
                rel_err: parse(fields[3], "rel_err")?,
                dist: if fields[4].is_empty() {
                    None
                } else {
                    Some(parse(fields[4], "dist")?)
                },
                elapsed_ns: fields[5]
                    .parse()
                    .map_err(|_| Error::invalid(format!("trace line {lineno}: bad elapsed_ns")))?,
            });
        }
        Ok(rows)
    }
}

/// 17 significant decimal digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Step primitives
// ---------------------------------------------------------------------------

fn scaled_step_checked(f: &FactorPair, s: &Mat, eta: f64) -> (FactorPair, bool) {
    if f.is_psd() {
        let (pinv_l, cut) = linalg::gram_pinv_checked(&f.l, linalg::GRAM_PINV_TOL);
        let dir = s * (&f.l * pinv_l);
        (FactorPair::new_psd(&f.l - dir * eta), cut)
    } else {
        let r = f.right();
        let (pinv_r, cut_r) = linalg::gram_pinv_checked(r, linalg::GRAM_PINV_TOL);
        let (pinv_l, cut_l) = linalg::gram_pinv_checked(&f.l, linalg::GRAM_PINV_TOL);
        let l_new = &f.l - s * (r * pinv_r) * eta;
        let r_new = r - s.transpose() * (&f.l * pinv_l) * eta;
        (FactorPair::new(l_new, r_new), cut_r || cut_l)
    }
}

/// One scaled subgradient step; both preconditioners come from the pre-update
/// factors.
pub fn scaled_sm_step(f: &FactorPair, s: &Mat, eta: f64) -> FactorPair {
    scaled_step_checked(f, s, eta).0
}

/// One plain factored subgradient step.
pub fn vanilla_sm_step(f: &FactorPair, s: &Mat, eta: f64) -> FactorPair {
    if f.is_psd() {
        FactorPair::new_psd(&f.l - s * &f.l * eta)
    } else {
        let l_new = &f.l - s * f.right() * eta;
        let r_new = f.right() - s.transpose() * &f.l * eta;
        FactorPair::new(l_new, r_new)
    }
}

/// Preconditioned gradient step on the least-squares loss.
pub fn scaled_gd_step(f: &FactorPair, loss: &Loss, eta: f64) -> Result<FactorPair> {
    let grad = loss.subgradient(&f.product())?;
    Ok(scaled_sm_step(f, &grad, eta))
}

/// Plain factored gradient step on the least-squares loss.
pub fn gd_step(f: &FactorPair, loss: &Loss, eta: f64) -> Result<FactorPair> {
    let grad = loss.subgradient(&f.product())?;
    Ok(vanilla_sm_step(f, &grad, eta))
}

/// Subgradient norm in the scaled metric:
/// `sqrt(||S R (R^T R)^-1/2||_F^2 + ||S^T L (L^T L)^-1/2||_F^2)`,
/// evaluated through the trace identity
/// `||S R (R^T R)^-1/2||_F^2 = <S R pinv(R^T R), S R>` to avoid matrix square
/// roots.
pub fn scaled_subgrad_norm(f: &FactorPair, s: &Mat) -> f64 {
    scaled_subgrad_norm_sq(f, s).max(0.0).sqrt()
}

fn scaled_subgrad_norm_sq(f: &FactorPair, s: &Mat) -> f64 {
    let r = f.right();
    let w1 = s * r;
    let pinv_r = linalg::gram_pinv(r, linalg::GRAM_PINV_TOL);
    let t1 = linalg::fro_inner(&(&w1 * pinv_r), &w1);
    let w2 = s.transpose() * &f.l;
    let pinv_l = linalg::gram_pinv(&f.l, linalg::GRAM_PINV_TOL);
    let t2 = linalg::fro_inner(&(&w2 * pinv_l), &w2);
    t1 + t2
}

/// Subgradient norm in the plain factored metric: `sqrt(||S R||^2 + ||S^T L||^2)`.
pub fn vanilla_subgrad_norm(f: &FactorPair, s: &Mat) -> f64 {
    vanilla_subgrad_norm_sq(f, s).sqrt()
}

fn vanilla_subgrad_norm_sq(f: &FactorPair, s: &Mat) -> f64 {
    (s * f.right()).norm_squared() + (s.transpose() * &f.l).norm_squared()
}

// ---------------------------------------------------------------------------
// Stepsize schedules
// ---------------------------------------------------------------------------

enum EtaOutcome {
    Step(f64),
    AtOptimum,
    Stalled,
}

fn polyak_eta_parts(fval: f64, fstar: f64, denom_sq: f64) -> EtaOutcome {
    let gap = fval - fstar;
    if denom_sq <= 0.0 {
        if gap <= 0.0 {
            EtaOutcome::AtOptimum
        } else {
            EtaOutcome::Stalled
        }
    } else {
        EtaOutcome::Step(gap.max(0.0) / denom_sq)
    }
}

/// Polyak stepsize `(f(L R^T) - fstar) / ||S||_scaled^2`.
///
/// Errors when the scaled norm vanishes while the objective gap is positive.
pub fn polyak_eta(f: &FactorPair, s: &Mat, loss: &Loss, fstar: f64) -> Result<f64> {
    let fval = loss.value(&f.product())?;
    match polyak_eta_parts(fval, fstar, scaled_subgrad_norm_sq(f, s)) {
        EtaOutcome::Step(eta) => Ok(eta),
        EtaOutcome::AtOptimum => Ok(0.0),
        EtaOutcome::Stalled => Err(Error::numerical(
            "polyak stepsize stalled: zero subgradient norm with positive gap",
        )),
    }
}

/// Geometrically decaying stepsize `lambda q^t / ||S||_scaled`.
pub fn geometric_eta(f: &FactorPair, s: &Mat, t: usize, lambda: f64, q: f64) -> f64 {
    geometric_eta_with_norm(t, lambda, q, scaled_subgrad_norm(f, s))
}

fn geometric_eta_with_norm(t: usize, lambda: f64, q: f64, norm: f64) -> f64 {
    if norm <= 0.0 {
        0.0
    } else {
        lambda * q.powi(t as i32) / norm
    }
}

// ---------------------------------------------------------------------------
// Run loop
// ---------------------------------------------------------------------------

const STALL_WINDOW: usize = 50;
const STALL_DELTA: f64 = 1e-15;

/// Iterate the selected method from `f0`, recording one trace row per
/// iteration. Stops on `rel_err <= tol_rel_err` (when a ground truth is
/// given), on stepsize stall, on divergence, or at `max_iters`.
pub fn run(
    config: &SolverConfig,
    loss: &Loss,
    f0: FactorPair,
    gt: Option<&GroundTruth>,
) -> Result<SolverTrace> {
    config.validate()?;
    if config.algorithm.needs_least_squares() && loss.kind != crate::losses::LossKind::LeastSquares
    {
        return Err(Error::invalid(
            "gradient-descent algorithms require the least-squares loss",
        ));
    }
    if !f0.is_finite() {
        return Err(Error::invalid("initial factors contain non-finite entries"));
    }

    let started = Instant::now();
    let xstar = gt.map(|g| g.xstar());
    let mut f = f0;
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    let mut status = SolverStatus::MaxIters;
    let mut stall_count = 0usize;
    let mut gram_cut_reported = false;

    for t in 0..=config.max_iters {
        let x = f.product();
        let eval = loss.eval(&x)?;
        if eval.zero_residual {
            notes.push(format!("iter {t}: zero residual, zero matrix used as subgradient"));
        }
        let rel_err = xstar
            .as_ref()
            .map_or(f64::NAN, |xs| metrics::relative_error(&x, xs));
        let dist = if config.record_dist {
            gt.map(|g| metrics::dist(&f, g))
        } else {
            None
        };
        let elapsed_ns = started.elapsed().as_nanos() as u64;

        let push_row =
            |eta: f64, rows: &mut Vec<TraceRow>| {
                rows.push(TraceRow {
                    iter: t,
                    fval: eval.value,
                    eta,
                    rel_err,
                    dist,
                    elapsed_ns,
                });
            };

        if !rel_err.is_nan() && rel_err <= config.tol_rel_err {
            push_row(0.0, &mut rows);
            status = SolverStatus::Converged;
            break;
        }
        if t == config.max_iters {
            push_row(0.0, &mut rows);
            status = SolverStatus::MaxIters;
            break;
        }

        let eta = match config.schedule {
            StepSchedule::Polyak { fstar } => {
                let denom_sq = if config.algorithm.is_scaled() {
                    scaled_subgrad_norm_sq(&f, &eval.subgrad)
                } else {
                    vanilla_subgrad_norm_sq(&f, &eval.subgrad)
                };
                match polyak_eta_parts(eval.value, fstar, denom_sq) {
                    EtaOutcome::Step(eta) => eta,
                    EtaOutcome::AtOptimum => {
                        push_row(0.0, &mut rows);
                        notes.push(format!("iter {t}: objective at fstar with zero subgradient"));
                        status = SolverStatus::Converged;
                        break;
                    }
                    EtaOutcome::Stalled => {
                        push_row(0.0, &mut rows);
                        notes.push(format!(
                            "iter {t}: zero subgradient norm with positive objective gap"
                        ));
                        status = SolverStatus::Stalled;
                        break;
                    }
                }
            }
            StepSchedule::Geometric { lambda, q } => {
                let norm = if config.algorithm.is_scaled() {
                    scaled_subgrad_norm(&f, &eval.subgrad)
                } else {
                    vanilla_subgrad_norm(&f, &eval.subgrad)
                };
                geometric_eta_with_norm(t, lambda, q, norm)
            }
            StepSchedule::Constant { eta } => eta,
        };

        push_row(eta, &mut rows);

        // Stall detection on the recorded relative errors.
        if rows.len() >= 2 && !rel_err.is_nan() {
            let prev = rows[rows.len() - 2].rel_err;
            if (rel_err - prev).abs() < STALL_DELTA {
                stall_count += 1;
            } else {
                stall_count = 0;
            }
            if stall_count >= STALL_WINDOW {
                notes.push(format!(
                    "iter {t}: relative error frozen for {STALL_WINDOW} iterations"
                ));
                status = SolverStatus::Stalled;
                break;
            }
        }

        let (next, gram_cut) = if config.algorithm.is_scaled() {
            scaled_step_checked(&f, &eval.subgrad, eta)
        } else {
            (vanilla_sm_step(&f, &eval.subgrad, eta), false)
        };
        if gram_cut && !gram_cut_reported {
            notes.push(format!(
                "iter {t}: rank-deficient Gram, pseudo-inverse cut applied"
            ));
            gram_cut_reported = true;
        }
        if !next.is_finite() {
            notes.push(format!("iter {}: non-finite iterate, aborting", t + 1));
            status = SolverStatus::Diverged;
            break;
        }
        f = next;
    }

    Ok(SolverTrace {
        rows,
        status,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;
    use crate::operators::{SensingOperator, StorageMode};
    use crate::problem::{make_ground_truth, observe};
    use crate::stream::SeedStream;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn randn_mat(nr: usize, nc: usize, seed: u64) -> Mat {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        Mat::from_fn(nr, nc, |_, _| rng.sample(StandardNormal))
    }

    fn random_transform(r: usize, seed: u64) -> Mat {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        loop {
            let q = Mat::from_fn(r, r, |_, _| rng.sample::<f64, _>(StandardNormal))
                + Mat::identity(r, r) * 2.0;
            let sv = q.clone().singular_values();
            if sv.min() > 0.5 && sv.max() / sv.min() < 8.0 {
                return q;
            }
        }
    }

    #[test]
    fn zero_stepsize_and_zero_subgradient_leave_factors_unchanged() {
        let f = FactorPair::new(randn_mat(6, 2, 1), randn_mat(5, 2, 2));
        let s = randn_mat(6, 5, 3);
        let same = scaled_sm_step(&f, &s, 0.0);
        assert_eq!(same.left(), f.left());
        assert_eq!(same.right(), f.right());
        let same2 = scaled_sm_step(&f, &Mat::zeros(6, 5), 0.7);
        assert_eq!(same2.left(), f.left());
        let same3 = vanilla_sm_step(&f, &Mat::zeros(6, 5), 0.7);
        assert_eq!(same3.right(), f.right());
    }

    #[test]
    fn scaled_step_is_covariant() {
        let f = FactorPair::new(randn_mat(7, 3, 4), randn_mat(6, 3, 5));
        let s = randn_mat(7, 6, 6);
        let eta = 0.3;
        let stepped = scaled_sm_step(&f, &s, eta);
        for seed in 0..10 {
            let q = random_transform(3, 100 + seed);
            let q_inv_t = q.clone().try_inverse().unwrap().transpose();
            let ft = FactorPair::new(f.left() * &q, f.right() * &q_inv_t);
            let stepped_t = scaled_sm_step(&ft, &s, eta);
            let l_expect = stepped.left() * &q;
            let r_expect = stepped.right() * &q_inv_t;
            assert!(
                (stepped_t.left() - &l_expect).norm() <= 1e-9 * l_expect.norm(),
                "left covariance violated"
            );
            assert!(
                (stepped_t.right() - &r_expect).norm() <= 1e-9 * r_expect.norm(),
                "right covariance violated"
            );
        }
    }

    #[test]
    fn vanilla_scalar_arithmetic() {
        let f = FactorPair::new(Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0));
        let s = Mat::from_element(1, 1, 1.0);
        let out = vanilla_sm_step(&f, &s, 0.5);
        assert_relative_eq!(out.left()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(out.right()[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn scaled_equals_vanilla_for_orthonormal_factors() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        let l = crate::linalg::rademacher_orthonormal(8, 3, &mut rng).unwrap();
        let r = crate::linalg::rademacher_orthonormal(7, 3, &mut rng).unwrap();
        let f = FactorPair::new(l, r);
        let s = randn_mat(8, 7, 8);
        let a = scaled_sm_step(&f, &s, 0.4);
        let b = vanilla_sm_step(&f, &s, 0.4);
        assert!((a.left() - b.left()).norm() < 1e-10);
        assert!((a.right() - b.right()).norm() < 1e-10);
        // Norms coincide as well.
        assert_relative_eq!(
            scaled_subgrad_norm(&f, &s),
            ((&s * f.right()).norm_squared() + (s.transpose() * f.left()).norm_squared()).sqrt(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn psd_step_updates_single_factor() {
        let l = randn_mat(6, 2, 9);
        let f = FactorPair::new_psd(l.clone());
        let sym = {
            let g = randn_mat(6, 6, 10);
            (&g + g.transpose()) * 0.5
        };
        let out = scaled_sm_step(&f, &sym, 0.2);
        assert!(out.is_psd());
        let pinv = linalg::gram_pinv(&l, linalg::GRAM_PINV_TOL);
        let expect = &l - &sym * (&l * pinv) * 0.2;
        assert!((out.left() - expect).norm() < 1e-12);
    }

    #[test]
    fn psd_vanilla_step_matches_aliased_pair() {
        let l = randn_mat(6, 2, 61);
        let sym = {
            let g = randn_mat(6, 6, 62);
            (&g + g.transpose()) * 0.5
        };
        let psd = vanilla_sm_step(&FactorPair::new_psd(l.clone()), &sym, 0.3);
        let pair = vanilla_sm_step(&FactorPair::new(l.clone(), l), &sym, 0.3);
        assert!((psd.left() - pair.left()).norm() < 1e-14);
        assert!((psd.right() - pair.right()).norm() < 1e-14);
    }

    #[test]
    fn scaled_gd_matches_hand_rolled_two_by_two() {
        // Rank-1 instance on 2x2 matrices with a single measurement.
        let op = SensingOperator::matrix_sensing(2, 2, 1, 99, StorageMode::Dense).unwrap();
        let y = crate::linalg::Vec64::from_vec(vec![0.5]);
        let loss = Loss::new(LossKind::LeastSquares, &op, &y);
        let l = Mat::from_column_slice(2, 1, &[1.0, 2.0]);
        let r = Mat::from_column_slice(2, 1, &[-1.0, 0.5]);
        let f = FactorPair::new(l.clone(), r.clone());
        let eta = 0.1;
        let out = scaled_gd_step(&f, &loss, eta).unwrap();
        // Oracle: gradient = A*(A(LR^T) - y); preconditioners are scalars.
        let x = &l * r.transpose();
        let resid = op.apply(&x).unwrap() - &y;
        let grad = op.adjoint_apply(&resid).unwrap();
        let l_expect = &l - &grad * &r * (eta / r.norm_squared());
        let r_expect = &r - grad.transpose() * &l * (eta / l.norm_squared());
        assert!((out.left() - l_expect).norm() < 1e-13);
        assert!((out.right() - r_expect).norm() < 1e-13);
    }

    #[test]
    fn gd_step_is_vanilla_with_gradient() {
        let op = SensingOperator::matrix_sensing(4, 3, 20, 101, StorageMode::Dense).unwrap();
        let y = op.apply(&randn_mat(4, 3, 11)).unwrap();
        let loss = Loss::new(LossKind::LeastSquares, &op, &y);
        let f = FactorPair::new(randn_mat(4, 2, 12), randn_mat(3, 2, 13));
        let grad = loss.subgradient(&f.product()).unwrap();
        let a = gd_step(&f, &loss, 0.05).unwrap();
        let b = vanilla_sm_step(&f, &grad, 0.05);
        assert_eq!(a.left(), b.left());
        assert_eq!(a.right(), b.right());
    }

    #[test]
    fn scaled_norm_zero_for_zero_subgradient() {
        let f = FactorPair::new(randn_mat(5, 2, 14), randn_mat(4, 2, 15));
        assert_eq!(scaled_subgrad_norm(&f, &Mat::zeros(5, 4)), 0.0);
    }

    #[test]
    fn scaled_norm_is_reparameterization_invariant() {
        let f = FactorPair::new(randn_mat(6, 3, 16), randn_mat(5, 3, 17));
        let s = randn_mat(6, 5, 18);
        let base = scaled_subgrad_norm(&f, &s);
        for seed in 0..10 {
            let q = random_transform(3, 200 + seed);
            let q_inv_t = q.clone().try_inverse().unwrap().transpose();
            let ft = FactorPair::new(f.left() * &q, f.right() * &q_inv_t);
            assert_relative_eq!(scaled_subgrad_norm(&ft, &s), base, max_relative = 1e-9);
        }
    }

    #[test]
    fn polyak_parts_hand_arithmetic() {
        // Scalar instance: f = 2, fstar = 0, scaled norm^2 = 8 -> eta = 0.25.
        match polyak_eta_parts(2.0, 0.0, 8.0) {
            EtaOutcome::Step(eta) => assert_relative_eq!(eta, 0.25, epsilon = 1e-15),
            _ => panic!("expected a step"),
        }
        assert!(matches!(polyak_eta_parts(1.0, 1.0, 0.0), EtaOutcome::AtOptimum));
        assert!(matches!(polyak_eta_parts(2.0, 0.0, 0.0), EtaOutcome::Stalled));
    }

    #[test]
    fn polyak_eta_is_reparameterization_invariant() {
        let op = SensingOperator::matrix_sensing(5, 4, 30, 103, StorageMode::Dense).unwrap();
        let y = op.apply(&randn_mat(5, 4, 19)).unwrap();
        let loss = Loss::new(LossKind::L1, &op, &y);
        let f = FactorPair::new(randn_mat(5, 2, 20), randn_mat(4, 2, 21));
        let s = loss.subgradient(&f.product()).unwrap();
        let base = polyak_eta(&f, &s, &loss, 0.0).unwrap();
        for seed in 0..5 {
            let q = random_transform(2, 300 + seed);
            let q_inv_t = q.clone().try_inverse().unwrap().transpose();
            let ft = FactorPair::new(f.left() * &q, f.right() * &q_inv_t);
            let eta_t = polyak_eta(&ft, &s, &loss, 0.0).unwrap();
            assert_relative_eq!(eta_t, base, max_relative = 1e-9);
        }
    }

    #[test]
    fn geometric_eta_schedule_identities() {
        let f = FactorPair::new(randn_mat(5, 2, 22), randn_mat(4, 2, 23));
        let s = randn_mat(5, 4, 24);
        let norm = scaled_subgrad_norm(&f, &s);
        let (lambda, q) = (1.85, 0.91);
        assert_relative_eq!(
            geometric_eta(&f, &s, 0, lambda, q),
            lambda / norm,
            max_relative = 1e-14
        );
        // eta_{t+1} * norm / (eta_t * norm) = q exactly.
        for t in 0..5 {
            let r = geometric_eta(&f, &s, t + 1, lambda, q) / geometric_eta(&f, &s, t, lambda, q);
            assert_relative_eq!(r, q, max_relative = 1e-12);
        }
    }

    #[test]
    fn theorem_default_schedule_values() {
        let sigma_r = 1.0;
        let chi = 2.0;
        let StepSchedule::Geometric { lambda, q } = StepSchedule::theorem_exact(sigma_r, chi)
        else {
            panic!("expected geometric schedule");
        };
        assert_relative_eq!(
            lambda,
            ((2f64.sqrt() - 1.0) / 2.0).sqrt() * 0.02 * sigma_r / 4.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(q, (1.0_f64 - 0.16 / 4.0).sqrt(), epsilon = 1e-15);
        let StepSchedule::Geometric { q: q_noisy, .. } = StepSchedule::theorem_noisy(sigma_r, chi)
        else {
            panic!("expected geometric schedule");
        };
        assert_relative_eq!(q_noisy, (1.0_f64 - 0.13 / 4.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn run_terminates_at_truth_immediately() {
        let stream = SeedStream::new(55);
        let gt = make_ground_truth(8, 8, 2, 3.0, false, &stream.child("truth")).unwrap();
        let op = SensingOperator::matrix_sensing(8, 8, 128, stream.child("operator").seed(), StorageMode::Dense)
            .unwrap();
        let obs = observe(&op, &gt, 0.0, 0.0, &stream).unwrap();
        let loss = Loss::new(LossKind::L1, &op, &obs.y);
        let config = SolverConfig::new(Algorithm::ScaledSm, StepSchedule::Polyak { fstar: 0.0 });
        let trace = run(&config, &loss, FactorPair::from_truth(&gt), Some(&gt)).unwrap();
        assert_eq!(trace.status, SolverStatus::Converged);
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].iter, 0);
        assert!(trace.rows[0].fval < 1e-12);
    }

    #[test]
    fn run_converges_on_small_noiseless_instance() {
        // Matrix sensing, n = 20, r = 2, kappa = 10, m = 8 n r.
        let stream = SeedStream::new(77);
        let gt = make_ground_truth(20, 20, 2, 10.0, false, &stream.child("truth")).unwrap();
        let op = SensingOperator::matrix_sensing(20, 20, 8 * 20 * 2, stream.child("operator").seed(), StorageMode::Dense)
            .unwrap();
        let obs = observe(&op, &gt, 0.0, 0.0, &stream).unwrap();
        let loss = Loss::new(LossKind::L1, &op, &obs.y);
        let f0 = crate::init::spectral_init(&op, &obs.y, 2, &Default::default()).unwrap();
        let mut config = SolverConfig::new(Algorithm::ScaledSm, StepSchedule::Polyak { fstar: 0.0 });
        config.max_iters = 200;
        let trace = run(&config, &loss, f0, Some(&gt)).unwrap();
        let hit = metrics::iters_to_tol(&trace, 1e-10);
        assert!(hit.is_some(), "never reached 1e-10: status {:?}", trace.status);
        assert!(hit.unwrap() <= 200);
    }

    #[test]
    fn run_rejects_gradient_algorithms_on_l1() {
        let op = SensingOperator::matrix_sensing(4, 4, 16, 105, StorageMode::Dense).unwrap();
        let y = op.apply(&randn_mat(4, 4, 31)).unwrap();
        let loss = Loss::new(LossKind::L1, &op, &y);
        let config = SolverConfig::new(Algorithm::ScaledGd, StepSchedule::Constant { eta: 0.1 });
        let f0 = FactorPair::new(randn_mat(4, 2, 32), randn_mat(4, 2, 33));
        assert!(run(&config, &loss, f0, None).is_err());
    }

    #[test]
    fn trace_csv_round_trip() {
        let trace = SolverTrace {
            rows: vec![
                TraceRow {
                    iter: 0,
                    fval: 1.5,
                    eta: 0.25,
                    rel_err: 0.5,
                    dist: Some(0.125),
                    elapsed_ns: 10,
                },
                TraceRow {
                    iter: 1,
                    fval: 0.75,
                    eta: 0.125,
                    rel_err: 0.25,
                    dist: None,
                    elapsed_ns: 20,
                },
            ],
            status: SolverStatus::MaxIters,
            notes: vec![],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,fval,eta,rel_err,dist,elapsed_ns\n"));
        let rows = SolverTrace::read_csv(&text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].fval, 1.5);
        assert_eq!(rows[0].dist, Some(0.125));
        assert_eq!(rows[1].dist, None);
        assert_eq!(rows[1].elapsed_ns, 20);
    }

    #[test]
    fn fmt_f64_has_17_significant_digits() {
        let x = std::f64::consts::PI;
        let s = fmt_f64(x);
        assert_eq!(s, "3.1415926535897931e0");
        assert_eq!(s.parse::<f64>().unwrap(), x);
    }
}
