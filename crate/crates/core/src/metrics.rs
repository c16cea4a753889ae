//! The preconditioner-aware distance between factor iterates and the planted
//! factors, plus reporting metrics.
//!
//! The distance minimizes
//! `h(Q) = ||(L Q - Lstar) S||_F^2 + ||(R Q^-T - Rstar) S||_F^2`
//! over invertible `r x r` matrices `Q`, with `S = diag(sqrt(sigma_star))`.
//! The problem is tiny (r x r), smooth away from singular `Q`, and locally
//! convex near the planted factors, so a damped Gauss-Newton iteration on the
//! stacked residuals converges quickly. The analytic Jacobian is validated
//! against finite differences in the tests.

use crate::linalg::Mat;
use crate::problem::GroundTruth;
use crate::solvers::{FactorPair, SolverTrace};

/// Result of the alignment subproblem.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// The aligning transform; `L Q` and `R Q^-T` approximate the planted factors.
    pub q: Mat,
    /// Attained squared distance `h(q)`.
    pub objective: f64,
    /// First-order stationarity reached (`||grad h|| <= 1e-9 (1 + h)`).
    pub converged: bool,
    pub grad_norm: f64,
}

const GRAD_TOL: f64 = 1e-9;
const MAX_GN_ITERS: usize = 200;

struct AlignProblem<'a> {
    l: &'a Mat,
    r: &'a Mat,
    lstar: &'a Mat,
    rstar: &'a Mat,
    /// Column weights `sqrt(sigma_star)` (ones for the unscaled variant).
    weights: Vec<f64>,
}

impl AlignProblem<'_> {
    fn rank(&self) -> usize {
        self.l.ncols()
    }

    /// Inverse of `Q^T`, or `None` when `Q` is numerically singular.
    fn q_inv_t(&self, q: &Mat) -> Option<Mat> {
        let svd = q.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smax <= 0.0 || smin < 1e-12 * smax {
            return None;
        }
        q.transpose().try_inverse()
    }

    /// Weighted residual blocks at `Q`.
    fn residuals(&self, q: &Mat, q_inv_t: &Mat) -> (Mat, Mat) {
        let mut res1 = self.l * q - self.lstar;
        let mut res2 = self.r * q_inv_t - self.rstar;
        for (j, &w) in self.weights.iter().enumerate() {
            res1.column_mut(j).scale_mut(w);
            res2.column_mut(j).scale_mut(w);
        }
        (res1, res2)
    }

    fn objective(&self, q: &Mat) -> Option<f64> {
        let q_inv_t = self.q_inv_t(q)?;
        let (res1, res2) = self.residuals(q, &q_inv_t);
        Some(res1.norm_squared() + res2.norm_squared())
    }

    /// Gradient of `h` at `Q`:
    /// `2 L^T res1 S  -  2 Q^-T S res2^T (R Q^-T)` with `S = diag(weights)`.
    fn gradient(&self, q: &Mat, q_inv_t: &Mat) -> Mat {
        let (res1, res2) = self.residuals(q, q_inv_t);
        let mut term1 = self.l.transpose() * res1;
        for j in 0..self.rank() {
            term1.column_mut(j).scale_mut(2.0 * self.weights[j]);
        }
        let rp = self.r * q_inv_t;
        let mut sres2t = res2.transpose(); // r x n2
        for i in 0..self.rank() {
            sres2t.row_mut(i).scale_mut(self.weights[i]);
        }
        let term2 = q_inv_t * sres2t * rp;
        term1 - term2 * 2.0
    }

    /// Stacked-residual Jacobian, `(n1 + n2) r` rows by `r^2` columns.
    /// Column `i + j r` differentiates with respect to `Q_ij`.
    fn jacobian(&self, q_inv_t: &Mat) -> Mat {
        let (n1, n2, r) = (self.l.nrows(), self.r.nrows(), self.rank());
        let rows1 = n1 * r;
        let mut jac = Mat::zeros(rows1 + n2 * r, r * r);
        let rp = self.r * q_inv_t; // n2 x r
        for j in 0..r {
            for i in 0..r {
                let c = i + j * r;
                // d res1 / d Q_ij = L e_i e_j^T S: column j only.
                let w = self.weights[j];
                for p in 0..n1 {
                    jac[(p + j * n1, c)] = self.l[(p, i)] * w;
                }
                // d res2 / d Q_ij = -(R Q^-T) e_j (e_i^T Q^-T) S.
                for k in 0..r {
                    let wk = q_inv_t[(i, k)] * self.weights[k];
                    if wk == 0.0 {
                        continue;
                    }
                    for p in 0..n2 {
                        jac[(rows1 + p + k * n2, c)] = -rp[(p, j)] * wk;
                    }
                }
            }
        }
        jac
    }

    fn stacked_residual(&self, q: &Mat, q_inv_t: &Mat) -> Mat {
        let (res1, res2) = self.residuals(q, q_inv_t);
        let (n1, n2, r) = (self.l.nrows(), self.r.nrows(), self.rank());
        let mut rho = Mat::zeros(n1 * r + n2 * r, 1);
        for j in 0..r {
            for p in 0..n1 {
                rho[(p + j * n1, 0)] = res1[(p, j)];
            }
            for p in 0..n2 {
                rho[(n1 * r + p + j * n2, 0)] = res2[(p, j)];
            }
        }
        rho
    }

    fn solve(&self, q0_candidates: &[Mat]) -> Alignment {
        let r = self.rank();
        // Start from the best valid candidate.
        let mut q = Mat::identity(r, r);
        let mut h = self.objective(&q).unwrap_or(f64::INFINITY);
        for cand in q0_candidates {
            if let Some(val) = self.objective(cand) {
                if val < h {
                    h = val;
                    q = cand.clone();
                }
            }
        }

        let mut best_q = q.clone();
        let mut best_h = h;
        let mut damping = 1e-8;
        let mut grad_norm = f64::INFINITY;
        let mut converged = false;

        for _ in 0..MAX_GN_ITERS {
            let Some(q_inv_t) = self.q_inv_t(&q) else {
                break;
            };
            let grad = self.gradient(&q, &q_inv_t);
            grad_norm = grad.norm();
            if grad_norm <= GRAD_TOL * (1.0 + h) {
                converged = true;
                break;
            }
            let jac = self.jacobian(&q_inv_t);
            let rho = self.stacked_residual(&q, &q_inv_t);
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * rho;

            // Levenberg-damped step with retry on failure.
            let mut stepped = false;
            for _ in 0..12 {
                let mut lhs = jtj.clone();
                for i in 0..r * r {
                    lhs[(i, i)] += damping;
                }
                let Some(chol) = lhs.cholesky() else {
                    damping *= 10.0;
                    continue;
                };
                let delta = chol.solve(&(-&jtr));
                let mut q_trial = q.clone();
                for j in 0..r {
                    for i in 0..r {
                        q_trial[(i, j)] += delta[(i + j * r, 0)];
                    }
                }
                match self.objective(&q_trial) {
                    Some(h_trial) if h_trial < h => {
                        q = q_trial;
                        h = h_trial;
                        damping = (damping / 3.0).max(1e-14);
                        stepped = true;
                        break;
                    }
                    _ => damping *= 10.0,
                }
            }
            if h < best_h {
                best_h = h;
                best_q = q.clone();
            }
            if !stepped {
                // Line-search failure: report the best point found.
                break;
            }
        }
        if h < best_h {
            best_h = h;
            best_q = q;
        }
        Alignment {
            q: best_q,
            objective: best_h,
            converged,
            grad_norm,
        }
    }
}

fn closed_form_candidates(p: &AlignProblem) -> Vec<Mat> {
    let mut out = Vec::new();
    // Minimizer of the first term alone (the weights scale columns and do not
    // move the per-column least-squares argmin).
    let pinv_l = crate::linalg::gram_pinv(p.l, crate::linalg::GRAM_PINV_TOL);
    out.push(&pinv_l * (p.l.transpose() * p.lstar));
    // Minimizer of the second term alone, mapped back through Q = P^-T.
    let pinv_r = crate::linalg::gram_pinv(p.r, crate::linalg::GRAM_PINV_TOL);
    let p0 = &pinv_r * (p.r.transpose() * p.rstar);
    if let Some(q_from_r) = p0.transpose().try_inverse() {
        out.push(q_from_r);
    }
    out
}

fn align_weighted(l: &Mat, r: &Mat, lstar: &Mat, rstar: &Mat, weights: Vec<f64>) -> Alignment {
    let problem = AlignProblem {
        l,
        r,
        lstar,
        rstar,
        weights,
    };
    let candidates = closed_form_candidates(&problem);
    problem.solve(&candidates)
}

/// Optimal alignment of `f` against the planted factors.
pub fn align(f: &FactorPair, gt: &GroundTruth) -> Alignment {
    let weights: Vec<f64> = gt.sigma.iter().map(|s| s.sqrt()).collect();
    align_weighted(f.left(), f.right(), &gt.lstar, &gt.rstar, weights)
}

/// Preconditioner-aware distance: the square root of the alignment objective.
pub fn dist(f: &FactorPair, gt: &GroundTruth) -> f64 {
    align(f, gt).objective.max(0.0).sqrt()
}

/// Unscaled variant (diagnostic only): unit column weights instead of
/// `sqrt(sigma_star)`.
pub fn dist_unscaled(f: &FactorPair, gt: &GroundTruth) -> f64 {
    let weights = vec![1.0; gt.rank()];
    align_weighted(f.left(), f.right(), &gt.lstar, &gt.rstar, weights)
        .objective
        .max(0.0)
        .sqrt()
}

/// Relative reconstruction error `||X - Xstar||_F / ||Xstar||_F`.
pub fn relative_error(x: &Mat, xstar: &Mat) -> f64 {
    (x - xstar).norm() / xstar.norm()
}

/// First iteration index whose relative error is at or below `tol`.
pub fn iters_to_tol(trace: &SolverTrace, tol: f64) -> Option<usize> {
    trace
        .rows
        .iter()
        .find(|row| row.rel_err <= tol)
        .map(|row| row.iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::make_ground_truth;
    use crate::stream::SeedStream;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn truth(n1: usize, n2: usize, r: usize, kappa: f64, seed: u64) -> GroundTruth {
        make_ground_truth(n1, n2, r, kappa, false, &SeedStream::new(seed).child("truth")).unwrap()
    }

    fn randn_mat(nr: usize, nc: usize, rng: &mut Xoshiro256PlusPlus) -> Mat {
        Mat::from_fn(nr, nc, |_, _| rng.sample(StandardNormal))
    }

    /// Random well-conditioned r x r transform.
    fn random_transform(r: usize, rng: &mut Xoshiro256PlusPlus) -> Mat {
        loop {
            let q = randn_mat(r, r, rng) + Mat::identity(r, r) * 2.0;
            let sv = q.clone().singular_values();
            if sv.min() > 0.5 && sv.max() / sv.min() < 10.0 {
                return q;
            }
        }
    }

    #[test]
    fn aligning_truth_with_itself_is_identity() {
        let gt = truth(12, 10, 3, 4.0, 1);
        let f = FactorPair::new(gt.lstar.clone(), gt.rstar.clone());
        let a = align(&f, &gt);
        assert!(a.converged);
        assert!(a.objective < 1e-18);
        assert!((a.q - Mat::identity(3, 3)).norm() < 1e-9);
        assert_eq!(dist(&f, &gt), a.objective.max(0.0).sqrt());
    }

    #[test]
    fn planted_transform_is_recovered() {
        let gt = truth(15, 12, 4, 6.0, 2);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        for _ in 0..20 {
            let qbar = random_transform(4, &mut rng);
            let qbar_inv = qbar.clone().try_inverse().unwrap();
            let f = FactorPair::new(
                &gt.lstar * &qbar,
                &gt.rstar * qbar_inv.transpose(),
            );
            let a = align(&f, &gt);
            assert!(a.objective < 1e-14, "objective {}", a.objective);
            assert!(
                (&a.q - &qbar_inv).norm() <= 1e-8 * qbar_inv.norm().max(1.0),
                "q error {}",
                (&a.q - &qbar_inv).norm()
            );
        }
    }

    #[test]
    fn rank_one_alignment_matches_scalar_brute_force() {
        // r = 1: h(q) = s ||l q - l*||^2 + s ||r / q - r*||^2, brute-force grid + refine.
        let gt = truth(9, 7, 1, 1.0, 4);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let l = &gt.lstar + randn_mat(9, 1, &mut rng) * 0.3;
        let r = &gt.rstar + randn_mat(7, 1, &mut rng) * 0.3;
        let s = gt.sigma[0];
        let h = |q: f64| -> f64 {
            s * (&l * q - &gt.lstar).norm_squared() + s * (&r / q - &gt.rstar).norm_squared()
        };
        let mut best_q = 1.0;
        let mut best_h = f64::INFINITY;
        for k in 1..40_000 {
            for sign in [-1.0, 1.0] {
                let q = sign * 4.0 * k as f64 / 40_000.0;
                let v = h(q);
                if v < best_h {
                    best_h = v;
                    best_q = q;
                }
            }
        }
        // Golden-section refinement around the grid winner.
        let (mut a, mut b) = (best_q - 2e-4, best_q + 2e-4);
        for _ in 0..200 {
            let m1 = a + 0.381_966_011_250_105 * (b - a);
            let m2 = b - 0.381_966_011_250_105 * (b - a);
            if h(m1) < h(m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        let oracle_q = 0.5 * (a + b);
        let f = FactorPair::new(l.clone(), r.clone());
        let got = align(&f, &gt);
        assert_relative_eq!(got.q[(0, 0)], oracle_q, epsilon = 1e-8, max_relative = 1e-6);
        assert_relative_eq!(got.objective, h(oracle_q), epsilon = 1e-10, max_relative = 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let gt = truth(10, 8, 3, 5.0, 6);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        let l = &gt.lstar + randn_mat(10, 3, &mut rng) * 0.2;
        let r = &gt.rstar + randn_mat(8, 3, &mut rng) * 0.2;
        let problem = AlignProblem {
            l: &l,
            r: &r,
            lstar: &gt.lstar,
            rstar: &gt.rstar,
            weights: gt.sigma.iter().map(|s| s.sqrt()).collect(),
        };
        let q = random_transform(3, &mut rng);
        let q_inv_t = problem.q_inv_t(&q).unwrap();
        let grad = problem.gradient(&q, &q_inv_t);
        let step = 1e-6;
        for i in 0..3 {
            for j in 0..3 {
                let mut qp = q.clone();
                qp[(i, j)] += step;
                let mut qm = q.clone();
                qm[(i, j)] -= step;
                let fd = (problem.objective(&qp).unwrap() - problem.objective(&qm).unwrap())
                    / (2.0 * step);
                assert_relative_eq!(grad[(i, j)], fd, epsilon = 1e-4, max_relative = 1e-5);
            }
        }
        // The Gauss-Newton residual system agrees with the gradient: 2 J^T rho = grad.
        let jac = problem.jacobian(&q_inv_t);
        let rho = problem.stacked_residual(&q, &q_inv_t);
        let g2 = jac.transpose() * rho * 2.0;
        for j in 0..3 {
            for i in 0..3 {
                assert_relative_eq!(g2[(i + j * 3, 0)], grad[(i, j)], epsilon = 1e-10, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn dist_is_invariant_under_reparameterization() {
        let gt = truth(11, 9, 3, 3.0, 8);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
        let f = FactorPair::new(
            &gt.lstar + randn_mat(11, 3, &mut rng) * 0.1,
            &gt.rstar + randn_mat(9, 3, &mut rng) * 0.1,
        );
        let d0 = dist(&f, &gt);
        for _ in 0..10 {
            let q = random_transform(3, &mut rng);
            let qinvt = q.clone().try_inverse().unwrap().transpose();
            let ft = FactorPair::new(f.left() * &q, f.right() * qinvt);
            let dt = dist(&ft, &gt);
            assert_relative_eq!(dt, d0, max_relative = 1e-8);
        }
    }

    #[test]
    fn dist_bounded_by_product_error() {
        // dist(F, Fstar) <= sqrt(sqrt(2) + 1) ||L R^T - Xstar||_F near the truth.
        let gt = truth(10, 9, 3, 4.0, 10);
        let xstar = gt.xstar();
        let cap = (std::f64::consts::SQRT_2 + 1.0).sqrt();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        for _ in 0..100 {
            let f = FactorPair::new(
                &gt.lstar + randn_mat(10, 3, &mut rng) * 0.05,
                &gt.rstar + randn_mat(9, 3, &mut rng) * 0.05,
            );
            let d = dist(&f, &gt);
            let prod_err = (f.product() - &xstar).norm();
            assert!(
                d <= cap * prod_err + 1e-12,
                "dist {d} vs bound {}",
                cap * prod_err
            );
        }
    }

    #[test]
    fn objective_decomposes_into_two_terms() {
        let gt = truth(8, 8, 2, 2.0, 12);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(13);
        let f = FactorPair::new(
            &gt.lstar + randn_mat(8, 2, &mut rng) * 0.2,
            &gt.rstar + randn_mat(8, 2, &mut rng) * 0.2,
        );
        let a = align(&f, &gt);
        let sq: Vec<f64> = gt.sigma.iter().map(|s| s.sqrt()).collect();
        let qinvt = a.q.clone().try_inverse().unwrap().transpose();
        let mut t1 = f.left() * &a.q - &gt.lstar;
        let mut t2 = f.right() * qinvt - &gt.rstar;
        for j in 0..2 {
            t1.column_mut(j).scale_mut(sq[j]);
            t2.column_mut(j).scale_mut(sq[j]);
        }
        let resum = t1.norm_squared() + t2.norm_squared();
        assert_relative_eq!(resum, a.objective, epsilon = 1e-12, max_relative = 1e-12);
    }

    #[test]
    fn returned_objective_improves_on_candidates() {
        let gt = truth(9, 9, 3, 7.0, 14);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(15);
        let f = FactorPair::new(
            &gt.lstar + randn_mat(9, 3, &mut rng) * 0.4,
            &gt.rstar + randn_mat(9, 3, &mut rng) * 0.4,
        );
        let a = align(&f, &gt);
        let weights: Vec<f64> = gt.sigma.iter().map(|s| s.sqrt()).collect();
        let problem = AlignProblem {
            l: f.left(),
            r: f.right(),
            lstar: &gt.lstar,
            rstar: &gt.rstar,
            weights,
        };
        let h_eye = problem.objective(&Mat::identity(3, 3)).unwrap();
        assert!(a.objective <= h_eye + 1e-12);
        for cand in closed_form_candidates(&problem) {
            if let Some(h) = problem.objective(&cand) {
                assert!(a.objective <= h + 1e-12);
            }
        }
    }

    #[test]
    fn iters_to_tol_finds_first_crossing() {
        use crate::solvers::{SolverStatus, SolverTrace, TraceRow};
        let mk = |rel_errs: &[f64]| SolverTrace {
            rows: rel_errs
                .iter()
                .enumerate()
                .map(|(i, &re)| TraceRow {
                    iter: i,
                    fval: re,
                    eta: 0.0,
                    rel_err: re,
                    dist: None,
                    elapsed_ns: 0,
                })
                .collect(),
            status: SolverStatus::MaxIters,
            notes: vec![],
        };
        // Already below at the start.
        assert_eq!(iters_to_tol(&mk(&[1e-6, 1e-7]), 1e-3), Some(0));
        // Never below.
        assert_eq!(iters_to_tol(&mk(&[1.0, 0.5, 0.3]), 1e-3), None);
        // Halving from 1.0 crosses 1e-3 at iteration 10 (2^-10 < 1e-3).
        let halving: Vec<f64> = (0..15).map(|i| 0.5f64.powi(i)).collect();
        assert_eq!(iters_to_tol(&mk(&halving), 1e-3), Some(10));
    }

    #[test]
    fn relative_error_basics() {
        let gt = truth(6, 6, 2, 3.0, 16);
        let x = gt.xstar();
        assert_eq!(relative_error(&x, &x), 0.0);
        assert_relative_eq!(relative_error(&Mat::zeros(6, 6), &x), 1.0, epsilon = 1e-14);
        assert_relative_eq!(relative_error(&(&x * 2.0), &x), 1.0, epsilon = 1e-14);
    }
}
