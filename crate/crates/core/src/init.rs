//! Spectral and truncated spectral initialization.
//!
//! The spectral surrogate is the rescaled adjoint `M = (m^2/|I|) A*_I(y)`,
//! whose expectation matches the planted matrix for matrix sensing. For
//! quadratic sampling the plain surrogate has an extra trace component; an
//! optional correction `(M - tr_hat I) / 2` removes it and is exposed as a
//! config switch.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vec64};
use crate::metrics;
use crate::operators::{OperatorKind, SensingOperator};
use crate::problem::GroundTruth;
use crate::solvers::FactorPair;
use crate::stream::SeedStream;

#[derive(Debug, Clone, Copy, Default)]
pub struct InitOptions {
    /// Subtract the estimated trace component from the quadratic-sampling
    /// surrogate before factoring.
    pub qs_trace_correction: bool,
}

/// Spectral initialization from all measurements.
pub fn spectral_init(
    op: &SensingOperator,
    y: &Vec64,
    r: usize,
    opts: &InitOptions,
) -> Result<FactorPair> {
    spectral_from_subset(op, y, None, r, opts)
}

/// Truncated spectral initialization: discard the `p_s` fraction of
/// measurements with largest amplitudes, then run the spectral method on the
/// kept subset with an `m/|I|` rescale.
///
/// The kept set is `I = {i : |y_i| <= |y|_(k)}` with `k = ceil(p_s m)`; the
/// threshold for `k = 0` is infinite (keep everything), and ties at the
/// threshold amplitude are kept.
pub fn truncated_spectral_init(
    op: &SensingOperator,
    y: &Vec64,
    r: usize,
    p_s: f64,
    opts: &InitOptions,
) -> Result<FactorPair> {
    if !(0.0..0.5).contains(&p_s) {
        return Err(Error::invalid(format!("p_s must lie in [0, 0.5), got {p_s}")));
    }
    let m = y.len();
    let k = (p_s * m as f64).ceil() as usize;
    if k == 0 {
        return spectral_from_subset(op, y, None, r, opts);
    }
    let mut amps: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    amps.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let threshold = amps[k - 1];
    let mask: Vec<bool> = y.iter().map(|v| v.abs() <= threshold).collect();
    spectral_from_subset(op, y, Some(&mask), r, opts)
}

fn spectral_from_subset(
    op: &SensingOperator,
    y: &Vec64,
    mask: Option<&[bool]>,
    r: usize,
    opts: &InitOptions,
) -> Result<FactorPair> {
    let m = op.m();
    if y.len() != m {
        return Err(Error::invalid(format!(
            "observation vector has length {}, operator expects {m}",
            y.len()
        )));
    }
    if r == 0 || r > op.n1().min(op.n2()) {
        return Err(Error::invalid(format!("init rank r={r} out of range")));
    }
    let (masked, kept): (Vec64, usize) = match mask {
        None => (y.clone(), m),
        Some(mask) => {
            let mut v = y.clone();
            let mut kept = 0;
            for i in 0..m {
                if mask[i] {
                    kept += 1;
                } else {
                    v[i] = 0.0;
                }
            }
            (v, kept)
        }
    };
    if kept == 0 {
        return Err(Error::invalid("truncation removed every measurement"));
    }
    // (m^2 / |I|) A*(masked y) = (m / |I|) sum_{i in I} y_i Phi_i.
    let rescale = (m as f64) * (m as f64) / kept as f64;
    let mut surrogate = op.adjoint_apply(&masked)? * rescale;
    if op.kind() == OperatorKind::QuadraticSampling {
        surrogate = (&surrogate + surrogate.transpose()) * 0.5;
        if opts.qs_trace_correction {
            let trace_hat = masked.iter().sum::<f64>() * (m as f64) / kept as f64;
            let n = surrogate.nrows();
            for i in 0..n {
                surrogate[(i, i)] -= trace_hat;
            }
            surrogate *= 0.5;
        }
    }
    factors_from_surrogate(&surrogate, r, op.kind() == OperatorKind::QuadraticSampling)
}

/// Extract rank-`r` factors from a spectral surrogate.
pub(crate) fn factors_from_surrogate(m: &Mat, r: usize, psd: bool) -> Result<FactorPair> {
    if psd {
        let eig = nalgebra::SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let top = eig.eigenvalues[order[0]];
        let rth = eig.eigenvalues[order[r - 1]];
        if !(rth > 0.0 && rth >= 1e-12 * top.abs()) {
            return Err(Error::numerical(format!(
                "spectral surrogate is rank deficient: eigenvalue {r} is {rth:.3e}"
            )));
        }
        let mut l = Mat::zeros(m.nrows(), r);
        for (j, &idx) in order[..r].iter().enumerate() {
            let scale = eig.eigenvalues[idx].sqrt();
            l.set_column(j, &(eig.eigenvectors.column(idx) * scale));
        }
        Ok(FactorPair::new_psd(l))
    } else {
        let svd = linalg::thin_svd(m, r)?;
        let rth = svd.singular_values[r - 1];
        if rth <= 1e-12 * svd.singular_values[0] {
            return Err(Error::numerical(format!(
                "spectral surrogate is rank deficient: singular value {r} is {rth:.3e}"
            )));
        }
        let sqrt_sigma: Vec<f64> = svd.singular_values.iter().map(|s| s.sqrt()).collect();
        let l = linalg::scale_columns(&svd.u, &sqrt_sigma);
        let rm = linalg::scale_columns(&svd.v, &sqrt_sigma);
        Ok(FactorPair::new(l, rm))
    }
}

/// Perturb the planted factors along a random direction until the
/// preconditioner-aware distance hits `target_dist` (within 0.1% relative).
pub fn planted_init(gt: &GroundTruth, target_dist: f64, stream: &SeedStream) -> Result<FactorPair> {
    if target_dist < 0.0 || !target_dist.is_finite() {
        return Err(Error::invalid("planted_init target distance must be >= 0"));
    }
    let truth = FactorPair::from_truth(gt);
    if target_dist == 0.0 {
        return Ok(truth);
    }
    let mut rng = stream.child("planted").rng();
    let dir_l = Mat::from_fn(gt.n1(), gt.rank(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let dir_r = if gt.psd {
        None
    } else {
        Some(Mat::from_fn(gt.n2(), gt.rank(), |_, _| rng.sample::<f64, _>(StandardNormal)))
    };
    let joint = (dir_l.norm_squared() + dir_r.as_ref().map_or(0.0, Mat::norm_squared)).sqrt();
    let perturbed = |scale: f64| -> FactorPair {
        let l = &gt.lstar + &dir_l * (scale / joint);
        match &dir_r {
            None => FactorPair::new_psd(l),
            Some(dr) => FactorPair::new(l, &gt.rstar + dr * (scale / joint)),
        }
    };
    let dist_at = |scale: f64| metrics::dist(&perturbed(scale), gt);

    // Bracket the target, then bisect; dist grows monotonically with the
    // perturbation scale in the regime we care about.
    let mut hi = target_dist.max(1e-6);
    let mut tries = 0;
    while dist_at(hi) < target_dist {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::numerical("planted_init could not bracket the target"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let d = dist_at(mid);
        if (d - target_dist).abs() <= 1e-3 * target_dist {
            return Ok(perturbed(mid));
        }
        if d < target_dist {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(perturbed(0.5 * (lo + hi)))
}
