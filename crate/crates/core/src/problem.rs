//! Planted ground truths and noisy/corrupted observations.
//!
//! Ground truths are drawn with Rademacher-orthonormal singular factors and a
//! linearly spaced spectrum `kappa, ..., 1`, so the smallest planted singular
//! value is exactly 1 and thresholds expressed in units of `sigma_r` are
//! literal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vec64};
use crate::operators::SensingOperator;
use crate::stream::SeedStream;

/// Planted low-rank target together with its factorization data.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Left factor `Ustar * diag(sqrt(sigma))`, `n1 x r`.
    pub lstar: Mat,
    /// Right factor `Vstar * diag(sqrt(sigma))`, `n2 x r`.
    pub rstar: Mat,
    pub ustar: Mat,
    pub vstar: Mat,
    /// Singular values, non-increasing; `sigma[r-1] == 1`.
    pub sigma: Vec64,
    pub kappa: f64,
    /// Smallest planted singular value (pinned to 1 by construction).
    pub sigma_r: f64,
    pub psd: bool,
}

impl GroundTruth {
    pub fn n1(&self) -> usize {
        self.lstar.nrows()
    }

    pub fn n2(&self) -> usize {
        self.rstar.nrows()
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// The planted matrix `Lstar * Rstar^T`.
    pub fn xstar(&self) -> Mat {
        &self.lstar * self.rstar.transpose()
    }
}

/// Measurement vector with its planted noise and outlier decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observations {
    pub y: Vec64,
    /// Bounded dense noise, `||w||_1 <= sigma_w`.
    pub w: Vec64,
    /// Sparse outliers, zero off `outlier_support`.
    pub s: Vec64,
    pub outlier_support: Vec<usize>,
    pub p_s: f64,
    pub sigma_w: f64,
}

impl Observations {
    pub fn m(&self) -> usize {
        self.y.len()
    }

    /// Noiseless measurements `y - w - s`.
    pub fn clean(&self) -> Vec64 {
        &self.y - &self.w - &self.s
    }

    /// `||w + s||_1`, which is the loss value at the planted matrix and the
    /// oracle `f(Xstar)` for Polyak stepping on corrupted data.
    pub fn l1_noise_norm(&self) -> f64 {
        (&self.w + &self.s).iter().map(|x| x.abs()).sum()
    }

    pub fn has_corruption(&self) -> bool {
        self.sigma_w > 0.0 || !self.outlier_support.is_empty()
    }
}

/// Draw a planted ground truth with spectrum linearly spaced from `kappa` to 1.
///
/// `stream` should be the experiment's `truth` sub-stream.
pub fn make_ground_truth(
    n1: usize,
    n2: usize,
    r: usize,
    kappa: f64,
    psd: bool,
    stream: &SeedStream,
) -> Result<GroundTruth> {
    if r == 0 || r > n1.min(n2) {
        return Err(Error::invalid(format!(
            "rank r={r} out of range for {n1}x{n2}"
        )));
    }
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(Error::invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    if r == 1 && kappa != 1.0 {
        return Err(Error::invalid(
            "a rank-1 matrix has condition number 1; kappa must be 1 when r == 1",
        ));
    }
    if psd && n1 != n2 {
        return Err(Error::invalid("psd ground truth requires n1 == n2"));
    }

    let mut sigma = Vec64::zeros(r);
    for i in 0..r {
        sigma[i] = if r == 1 {
            1.0
        } else {
            kappa - (kappa - 1.0) * (i as f64) / ((r - 1) as f64)
        };
    }
    // Pin the endpoints exactly.
    sigma[0] = kappa;
    sigma[r - 1] = 1.0;

    let ustar = linalg::rademacher_orthonormal(n1, r, &mut stream.child("u").rng())?;
    let vstar = if psd {
        ustar.clone()
    } else {
        linalg::rademacher_orthonormal(n2, r, &mut stream.child("v").rng())?
    };
    let sqrt_sigma: Vec<f64> = sigma.iter().map(|s| s.sqrt()).collect();
    let lstar = linalg::scale_columns(&ustar, &sqrt_sigma);
    let rstar = linalg::scale_columns(&vstar, &sqrt_sigma);
    Ok(GroundTruth {
        lstar,
        rstar,
        ustar,
        vstar,
        sigma,
        kappa,
        sigma_r: 1.0,
        psd,
    })
}

/// Observe the planted matrix through `op`, adding bounded noise and sparse
/// outliers per the additive model `y = A(Xstar) + w + s`.
///
/// Noise and outlier draws use independent sub-streams of `stream`, so
/// toggling one does not perturb the other's realization.
pub fn observe(
    op: &SensingOperator,
    gt: &GroundTruth,
    sigma_w: f64,
    p_s: f64,
    stream: &SeedStream,
) -> Result<Observations> {
    if op.n1() != gt.n1() || op.n2() != gt.n2() {
        return Err(Error::invalid(format!(
            "operator is {}x{}, ground truth is {}x{}",
            op.n1(),
            op.n2(),
            gt.n1(),
            gt.n2()
        )));
    }
    if !(0.0..0.5).contains(&p_s) {
        return Err(Error::invalid(format!("p_s must lie in [0, 0.5), got {p_s}")));
    }
    if !(sigma_w.is_finite() && sigma_w >= 0.0) {
        return Err(Error::invalid(format!("sigma_w must be >= 0, got {sigma_w}")));
    }
    let clean = op.apply(&gt.xstar())?;
    let m = clean.len();

    let mut noise_rng = stream.child("noise").rng();
    let mut w = Vec64::zeros(m);
    let half_width = sigma_w / m as f64;
    for i in 0..m {
        let u: f64 = noise_rng.gen_range(-1.0..=1.0);
        w[i] = half_width * u;
    }

    // Outlier amplitudes scale with the noiseless measurement range.
    let amp = 10.0 * clean.amax();
    let mut outlier_rng = stream.child("outliers").rng();
    let mut s = Vec64::zeros(m);
    let mut support = Vec::new();
    for i in 0..m {
        if outlier_rng.gen::<f64>() < p_s {
            s[i] = outlier_rng.gen_range(-1.0..=1.0) * amp;
            support.push(i);
        }
    }

    Ok(Observations {
        y: clean + &w + &s,
        w,
        s,
        outlier_support: support,
        p_s,
        sigma_w,
    })
}

/// Signal-to-noise ratio in dB: `20 log10(||clean||_1 / sigma_w)`.
pub fn snr_db(clean: &Vec64, sigma_w: f64) -> Result<f64> {
    if sigma_w <= 0.0 {
        return Err(Error::invalid("snr_db requires sigma_w > 0"));
    }
    Ok(20.0 * (clean.iter().map(|x| x.abs()).sum::<f64>() / sigma_w).log10())
}

/// The noise budget that realizes a target SNR for the given clean measurements.
pub fn sigma_w_for_snr_db(clean: &Vec64, snr_db: f64) -> f64 {
    clean.iter().map(|x| x.abs()).sum::<f64>() * 10f64.powf(-snr_db / 20.0)
}

// ---------------------------------------------------------------------------
// Serialization bundle
// ---------------------------------------------------------------------------

/// Row-major matrix dump used in JSON bundles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    /// Entries in row-major order.
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_mat(m: &Mat) -> Self {
        MatrixData {
            rows: m.nrows(),
            cols: m.ncols(),
            data: linalg::mat_to_row_major(m),
        }
    }

    pub fn to_mat(&self) -> Result<Mat> {
        linalg::mat_from_row_major(self.rows, self.cols, &self.data)
    }
}

/// Self-contained problem instance for replay: ground truth, operator spec,
/// and drawn observations. Field order is fixed by the struct definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemBundle {
    pub ustar: MatrixData,
    pub vstar: MatrixData,
    pub sigma: Vec<f64>,
    pub kappa: f64,
    pub psd: bool,
    pub operator: crate::operators::OperatorSpec,
    pub observations: Observations,
}

impl ProblemBundle {
    pub fn new(gt: &GroundTruth, op: &SensingOperator, obs: &Observations) -> Self {
        ProblemBundle {
            ustar: MatrixData::from_mat(&gt.ustar),
            vstar: MatrixData::from_mat(&gt.vstar),
            sigma: gt.sigma.iter().cloned().collect(),
            kappa: gt.kappa,
            psd: gt.psd,
            operator: op.spec(),
            observations: obs.clone(),
        }
    }

    pub fn ground_truth(&self) -> Result<GroundTruth> {
        let ustar = self.ustar.to_mat()?;
        let vstar = self.vstar.to_mat()?;
        let r = self.sigma.len();
        if ustar.ncols() != r || vstar.ncols() != r {
            return Err(Error::invalid("bundle factor widths disagree with sigma"));
        }
        let sigma = Vec64::from_vec(self.sigma.clone());
        let sqrt_sigma: Vec<f64> = sigma.iter().map(|s| s.sqrt()).collect();
        let lstar = linalg::scale_columns(&ustar, &sqrt_sigma);
        let rstar = linalg::scale_columns(&vstar, &sqrt_sigma);
        let sigma_r = sigma[r - 1];
        Ok(GroundTruth {
            lstar,
            rstar,
            ustar,
            vstar,
            sigma,
            kappa: self.kappa,
            sigma_r,
            psd: self.psd,
        })
    }
}
