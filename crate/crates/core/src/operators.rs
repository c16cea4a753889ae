//! Measurement ensembles with forward/adjoint application and empirical
//! geometry estimation.
//!
//! Two backends share one sampling scheme: `Dense` materializes every
//! measurement row, `Seeded` regenerates rows on demand from per-row seed
//! streams. Both produce bit-identical outputs for the same operator seed.
//!
//! Forward application parallelizes per measurement; adjoints accumulate
//! fixed-size row blocks that are then combined in block order, so results do
//! not depend on the worker count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vec64};
use crate::stream::SeedStream;

/// Rows per accumulation block in adjoint passes.
const ADJOINT_BLOCK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `y_i = <A_i, X> / m` with i.i.d. standard normal `A_i`.
    MatrixSensing,
    /// `y_i = a_i^T X a_i / m` with i.i.d. standard normal `a_i`; targets are
    /// symmetric PSD matrices.
    QuadraticSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageMode {
    /// Materialize all measurement data (fast passes, `m * n1 * n2` memory
    /// for matrix sensing).
    Dense,
    /// Regenerate measurement rows from the seed on every pass.
    Seeded,
}

/// Serializable operator description, sufficient for exact reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub seed: u64,
    pub storage: StorageMode,
}

impl OperatorSpec {
    pub fn build(&self) -> Result<SensingOperator> {
        match self.kind {
            OperatorKind::MatrixSensing => {
                SensingOperator::matrix_sensing(self.n1, self.n2, self.m, self.seed, self.storage)
            }
            OperatorKind::QuadraticSampling => {
                SensingOperator::quadratic_sampling(self.n1, self.m, self.seed, self.storage)
            }
        }
    }
}

/// A linear measurement map with forward and adjoint application.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    kind: OperatorKind,
    n1: usize,
    n2: usize,
    m: usize,
    seed: u64,
    storage: StorageMode,
    /// Dense rows: `m * n1 * n2` entries for matrix sensing (each `A_i`
    /// row-major), `m * n1` entries for quadratic sampling (each `a_i`).
    dense: Option<Vec<f64>>,
}

/// Empirical mixed-norm RIP probe summary.
///
/// Randomized probing yields one-sided bounds only: `delta1_hat >= delta_1`
/// and `delta2_hat <= delta_2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RipEstimate {
    pub delta1_hat: f64,
    pub delta2_hat: f64,
    pub delta3_hat: Option<f64>,
    pub trials: usize,
    pub rank_probed: usize,
}

impl RipEstimate {
    /// Loss-geometry condition number estimate `L / mu` for clean data.
    pub fn chi_hat_clean(&self) -> f64 {
        self.delta2_hat / self.delta1_hat
    }

    /// `L / mu` estimate when outliers are present (`mu = delta_3`).
    pub fn chi_hat_corrupted(&self) -> Option<f64> {
        self.delta3_hat.map(|d3| self.delta2_hat / d3)
    }
}

impl SensingOperator {
    pub fn matrix_sensing(
        n1: usize,
        n2: usize,
        m: usize,
        seed: u64,
        storage: StorageMode,
    ) -> Result<Self> {
        if n1 == 0 || n2 == 0 || m == 0 {
            return Err(Error::invalid("operator dimensions must be positive"));
        }
        let mut op = SensingOperator {
            kind: OperatorKind::MatrixSensing,
            n1,
            n2,
            m,
            seed,
            storage,
            dense: None,
        };
        if storage == StorageMode::Dense {
            op.materialize();
        }
        Ok(op)
    }

    pub fn quadratic_sampling(n: usize, m: usize, seed: u64, storage: StorageMode) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::invalid("operator dimensions must be positive"));
        }
        let mut op = SensingOperator {
            kind: OperatorKind::QuadraticSampling,
            n1: n,
            n2: n,
            m,
            seed,
            storage,
            dense: None,
        };
        if storage == StorageMode::Dense {
            op.materialize();
        }
        Ok(op)
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn storage(&self) -> StorageMode {
        self.storage
    }

    pub fn spec(&self) -> OperatorSpec {
        OperatorSpec {
            kind: self.kind,
            n1: self.n1,
            n2: self.n2,
            m: self.m,
            seed: self.seed,
            storage: self.storage,
        }
    }

    fn row_len(&self) -> usize {
        match self.kind {
            OperatorKind::MatrixSensing => self.n1 * self.n2,
            OperatorKind::QuadraticSampling => self.n1,
        }
    }

    fn row_stream(&self, i: usize) -> SeedStream {
        SeedStream::new(self.seed).child("rows").index(i as u64)
    }

    fn fill_row(&self, i: usize, buf: &mut [f64]) {
        let mut rng = self.row_stream(i).rng();
        for v in buf.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    fn materialize(&mut self) {
        let d = self.row_len();
        let mut data = vec![0.0f64; self.m * d];
        data.par_chunks_mut(d).enumerate().for_each(|(i, chunk)| {
            self.fill_row(i, chunk);
        });
        self.dense = Some(data);
    }

    fn check_dims(&self, x: &Mat) -> Result<()> {
        if x.nrows() != self.n1 || x.ncols() != self.n2 {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, operator expects {}x{}",
                x.nrows(),
                x.ncols(),
                self.n1,
                self.n2
            )));
        }
        Ok(())
    }

    /// Forward application `A(X)`, with the `1/m` normalization built in.
    pub fn apply(&self, x: &Mat) -> Result<Vec64> {
        self.check_dims(x)?;
        let scale = 1.0 / self.m as f64;
        let out: Vec<f64> = match self.kind {
            OperatorKind::MatrixSensing => {
                let xflat = linalg::mat_to_row_major(x);
                match &self.dense {
                    Some(data) => {
                        let d = self.row_len();
                        (0..self.m)
                            .into_par_iter()
                            .map(|i| dot(&data[i * d..(i + 1) * d], &xflat) * scale)
                            .collect()
                    }
                    None => (0..self.m)
                        .into_par_iter()
                        .map(|i| {
                            let mut rng = self.row_stream(i).rng();
                            let mut acc = 0.0;
                            for &xj in &xflat {
                                let g: f64 = rng.sample(StandardNormal);
                                acc += g * xj;
                            }
                            acc * scale
                        })
                        .collect(),
                }
            }
            OperatorKind::QuadraticSampling => {
                let n = self.n1;
                let xs = x.as_slice(); // column-major
                let quad = |a: &[f64]| -> f64 {
                    // a^T X a via column combination.
                    let mut t = vec![0.0f64; n];
                    for (q, &aq) in a.iter().enumerate() {
                        let col = &xs[q * n..(q + 1) * n];
                        for (tp, &c) in t.iter_mut().zip(col.iter()) {
                            *tp += aq * c;
                        }
                    }
                    dot(a, &t) * scale
                };
                match &self.dense {
                    Some(data) => (0..self.m)
                        .into_par_iter()
                        .map(|i| quad(&data[i * n..(i + 1) * n]))
                        .collect(),
                    None => (0..self.m)
                        .into_par_iter()
                        .map_init(
                            || vec![0.0f64; n],
                            |buf, i| {
                                self.fill_row(i, buf);
                                quad(buf)
                            },
                        )
                        .collect(),
                }
            }
        };
        Ok(Vec64::from_vec(out))
    }

    /// Adjoint application `A*(v) = sum_i v_i Phi_i / m`.
    pub fn adjoint_apply(&self, v: &Vec64) -> Result<Mat> {
        if v.len() != self.m {
            return Err(Error::invalid(format!(
                "vector has length {}, operator expects m = {}",
                v.len(),
                self.m
            )));
        }
        let scale = 1.0 / self.m as f64;
        match self.kind {
            OperatorKind::MatrixSensing => {
                let d = self.row_len();
                let nblocks = self.m.div_ceil(ADJOINT_BLOCK);
                let partials: Vec<Vec<f64>> = (0..nblocks)
                    .into_par_iter()
                    .map(|b| {
                        let lo = b * ADJOINT_BLOCK;
                        let hi = ((b + 1) * ADJOINT_BLOCK).min(self.m);
                        let mut acc = vec![0.0f64; d];
                        match &self.dense {
                            Some(data) => {
                                for i in lo..hi {
                                    let vi = v[i];
                                    if vi == 0.0 {
                                        continue;
                                    }
                                    let row = &data[i * d..(i + 1) * d];
                                    for (a, &r) in acc.iter_mut().zip(row.iter()) {
                                        *a += vi * r;
                                    }
                                }
                            }
                            None => {
                                for i in lo..hi {
                                    let vi = v[i];
                                    if vi == 0.0 {
                                        continue;
                                    }
                                    let mut rng = self.row_stream(i).rng();
                                    for a in acc.iter_mut() {
                                        let g: f64 = rng.sample(StandardNormal);
                                        *a += vi * g;
                                    }
                                }
                            }
                        }
                        acc
                    })
                    .collect();
                let mut flat = vec![0.0f64; d];
                for p in partials {
                    for (a, b) in flat.iter_mut().zip(p.iter()) {
                        *a += b * scale;
                    }
                }
                linalg::mat_from_row_major(self.n1, self.n2, &flat)
            }
            OperatorKind::QuadraticSampling => {
                let n = self.n1;
                let tri = n * (n + 1) / 2;
                let nblocks = self.m.div_ceil(ADJOINT_BLOCK);
                let partials: Vec<Vec<f64>> = (0..nblocks)
                    .into_par_iter()
                    .map_init(
                        || vec![0.0f64; n],
                        |buf, b| {
                            let lo = b * ADJOINT_BLOCK;
                            let hi = ((b + 1) * ADJOINT_BLOCK).min(self.m);
                            let mut acc = vec![0.0f64; tri];
                            for i in lo..hi {
                                let vi = v[i];
                                if vi == 0.0 {
                                    continue;
                                }
                                let a: &[f64] = match &self.dense {
                                    Some(data) => &data[i * n..(i + 1) * n],
                                    None => {
                                        self.fill_row(i, buf);
                                        buf
                                    }
                                };
                                // Upper triangle (p <= q), mirrored at the end.
                                let mut k = 0;
                                for q in 0..n {
                                    let vaq = vi * a[q];
                                    for &ap in &a[..=q] {
                                        acc[k] += vaq * ap;
                                        k += 1;
                                    }
                                }
                            }
                            acc
                        },
                    )
                    .collect();
                let mut upper = vec![0.0f64; tri];
                for p in partials {
                    for (a, b) in upper.iter_mut().zip(p.iter()) {
                        *a += b * scale;
                    }
                }
                let mut out = Mat::zeros(n, n);
                let mut k = 0;
                for q in 0..n {
                    for p in 0..=q {
                        out[(p, q)] = upper[k];
                        out[(q, p)] = upper[k];
                        k += 1;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Fused forward/adjoint pass: computes the residual `A(X) - y` and
    /// accumulates `A*(w(residual))` while each measurement row is in hand,
    /// so rows are generated (or read) once per iteration instead of twice.
    ///
    /// `weight` must be a pure per-entry function of the residual.
    pub fn residual_and_weighted_adjoint<W>(
        &self,
        x: &Mat,
        y: &Vec64,
        weight: W,
    ) -> Result<(Vec64, Mat)>
    where
        W: Fn(f64) -> f64 + Sync,
    {
        self.check_dims(x)?;
        if y.len() != self.m {
            return Err(Error::invalid(format!(
                "observation vector has length {}, operator expects m = {}",
                y.len(),
                self.m
            )));
        }
        let scale = 1.0 / self.m as f64;
        let nblocks = self.m.div_ceil(ADJOINT_BLOCK);
        match self.kind {
            OperatorKind::MatrixSensing => {
                let d = self.row_len();
                let xflat = linalg::mat_to_row_major(x);
                let results: Vec<(Vec<f64>, Vec<f64>)> = (0..nblocks)
                    .into_par_iter()
                    .map_init(
                        || vec![0.0f64; d],
                        |buf, b| {
                            let lo = b * ADJOINT_BLOCK;
                            let hi = ((b + 1) * ADJOINT_BLOCK).min(self.m);
                            let mut acc = vec![0.0f64; d];
                            let mut residuals = Vec::with_capacity(hi - lo);
                            for i in lo..hi {
                                let row: &[f64] = match &self.dense {
                                    Some(data) => &data[i * d..(i + 1) * d],
                                    None => {
                                        self.fill_row(i, buf);
                                        buf
                                    }
                                };
                                let ri = dot(row, &xflat) * scale - y[i];
                                residuals.push(ri);
                                let wi = weight(ri);
                                if wi != 0.0 {
                                    for (a, &r) in acc.iter_mut().zip(row.iter()) {
                                        *a += wi * r;
                                    }
                                }
                            }
                            (residuals, acc)
                        },
                    )
                    .collect();
                let mut residual = Vec64::zeros(self.m);
                let mut flat = vec![0.0f64; d];
                for (b, (res, acc)) in results.into_iter().enumerate() {
                    let lo = b * ADJOINT_BLOCK;
                    for (k, ri) in res.into_iter().enumerate() {
                        residual[lo + k] = ri;
                    }
                    for (a, v) in flat.iter_mut().zip(acc.iter()) {
                        *a += v * scale;
                    }
                }
                Ok((residual, linalg::mat_from_row_major(self.n1, self.n2, &flat)?))
            }
            OperatorKind::QuadraticSampling => {
                let n = self.n1;
                let xs = x.as_slice();
                let tri = n * (n + 1) / 2;
                let results: Vec<(Vec<f64>, Vec<f64>)> = (0..nblocks)
                    .into_par_iter()
                    .map_init(
                        || (vec![0.0f64; n], vec![0.0f64; n]),
                        |(buf, t), b| {
                            let lo = b * ADJOINT_BLOCK;
                            let hi = ((b + 1) * ADJOINT_BLOCK).min(self.m);
                            let mut acc = vec![0.0f64; tri];
                            let mut residuals = Vec::with_capacity(hi - lo);
                            for i in lo..hi {
                                let a: &[f64] = match &self.dense {
                                    Some(data) => &data[i * n..(i + 1) * n],
                                    None => {
                                        self.fill_row(i, buf);
                                        buf
                                    }
                                };
                                t.iter_mut().for_each(|v| *v = 0.0);
                                for (q, &aq) in a.iter().enumerate() {
                                    let col = &xs[q * n..(q + 1) * n];
                                    for (tp, &c) in t.iter_mut().zip(col.iter()) {
                                        *tp += aq * c;
                                    }
                                }
                                let ri = dot(a, t) * scale - y[i];
                                residuals.push(ri);
                                let wi = weight(ri);
                                if wi != 0.0 {
                                    let mut k = 0;
                                    for q in 0..n {
                                        let waq = wi * a[q];
                                        for &ap in &a[..=q] {
                                            acc[k] += waq * ap;
                                            k += 1;
                                        }
                                    }
                                }
                            }
                            (residuals, acc)
                        },
                    )
                    .collect();
                let mut residual = Vec64::zeros(self.m);
                let mut upper = vec![0.0f64; tri];
                for (b, (res, acc)) in results.into_iter().enumerate() {
                    let lo = b * ADJOINT_BLOCK;
                    for (k, ri) in res.into_iter().enumerate() {
                        residual[lo + k] = ri;
                    }
                    for (a, v) in upper.iter_mut().zip(acc.iter()) {
                        *a += v * scale;
                    }
                }
                let mut out = Mat::zeros(n, n);
                let mut k = 0;
                for q in 0..n {
                    for p in 0..=q {
                        out[(p, q)] = upper[k];
                        out[(q, p)] = upper[k];
                        k += 1;
                    }
                }
                Ok((residual, out))
            }
        }
    }

    /// Random unit-Frobenius probe of rank at most `rank`, matched to the
    /// operator's target geometry (symmetric probes for quadratic sampling).
    pub fn random_rank_probe<R: Rng>(&self, rank: usize, rng: &mut R) -> Mat {
        let k = rank.min(self.n1.min(self.n2)).max(1);
        let m = match self.kind {
            OperatorKind::MatrixSensing => {
                let g = Mat::from_fn(self.n1, k, |_, _| rng.sample(StandardNormal));
                let h = Mat::from_fn(self.n2, k, |_, _| rng.sample(StandardNormal));
                g * h.transpose()
            }
            OperatorKind::QuadraticSampling => {
                let g = Mat::from_fn(self.n1, k, |_, _| rng.sample(StandardNormal));
                let signs: Vec<f64> = (0..k).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
                let gd = linalg::scale_columns(&g, &signs);
                gd * g.transpose()
            }
        };
        let norm = m.norm();
        m / norm
    }

    /// Probe the rank-`2r` mixed-norm RIP constants with random unit probes.
    pub fn estimate_mixed_rip(
        &self,
        r: usize,
        trials: usize,
        stream: &SeedStream,
    ) -> Result<RipEstimate> {
        if trials == 0 {
            return Err(Error::invalid("estimate_mixed_rip requires trials >= 1"));
        }
        let rank = (2 * r).min(self.n1.min(self.n2)).max(1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in 0..trials {
            let mut rng = stream.index(t as u64).rng();
            let probe = self.random_rank_probe(rank, &mut rng);
            let l1 = self.apply(&probe)?.iter().map(|x| x.abs()).sum::<f64>();
            lo = lo.min(l1);
            hi = hi.max(l1);
        }
        Ok(RipEstimate {
            delta1_hat: lo,
            delta2_hat: hi,
            delta3_hat: None,
            trials,
            rank_probed: rank,
        })
    }

    /// Probe the rank-`2r` S-outlier bound: the minimum over random unit
    /// probes of `||A_{S^c}(M)||_1 - ||A_S(M)||_1`.
    pub fn estimate_outlier_bound(
        &self,
        support: &[usize],
        r: usize,
        trials: usize,
        stream: &SeedStream,
    ) -> Result<f64> {
        if trials == 0 {
            return Err(Error::invalid("estimate_outlier_bound requires trials >= 1"));
        }
        let mut mask = vec![false; self.m];
        for &i in support {
            if i >= self.m {
                return Err(Error::invalid(format!(
                    "support index {i} out of range for m = {}",
                    self.m
                )));
            }
            mask[i] = true;
        }
        let rank = (2 * r).min(self.n1.min(self.n2)).max(1);
        let mut best = f64::INFINITY;
        for t in 0..trials {
            let mut rng = stream.index(t as u64).rng();
            let probe = self.random_rank_probe(rank, &mut rng);
            let v = self.apply(&probe)?;
            let mut inlier = 0.0;
            let mut outlier = 0.0;
            for (i, x) in v.iter().enumerate() {
                if mask[i] {
                    outlier += x.abs();
                } else {
                    inlier += x.abs();
                }
            }
            best = best.min(inlier - outlier);
        }
        Ok(best)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
