//! Loss values and (sub)gradients in the matrix variable.
//!
//! The l1 loss is the residual sum of absolute errors; its subgradient uses
//! `sign(0) = 0`, the minimum-norm element, so the subgradient vanishes at
//! exact recovery and Polyak stepping terminates cleanly.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{Mat, Vec64};
use crate::operators::SensingOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `||A(X) - y||_1`
    L1,
    /// `||A(X) - y||_2`
    L2,
    /// `0.5 ||A(X) - y||_2^2`
    LeastSquares,
}

/// A loss bound to an operator and an observation vector.
#[derive(Debug, Clone)]
pub struct Loss<'a> {
    pub kind: LossKind,
    pub op: &'a SensingOperator,
    pub y: &'a Vec64,
}

/// One loss-and-subgradient evaluation, sharing a single forward pass.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub subgrad: Mat,
    /// The l2 residual was exactly zero, so the zero matrix was returned
    /// (0 is in the subdifferential at the minimizer).
    pub zero_residual: bool,
}

impl<'a> Loss<'a> {
    pub fn new(kind: LossKind, op: &'a SensingOperator, y: &'a Vec64) -> Self {
        debug_assert_eq!(op.m(), y.len());
        Loss { kind, op, y }
    }

    pub fn residual(&self, x: &Mat) -> Result<Vec64> {
        Ok(self.op.apply(x)? - self.y)
    }

    pub fn value(&self, x: &Mat) -> Result<f64> {
        Ok(self.value_of_residual(&self.residual(x)?))
    }

    pub fn value_of_residual(&self, r: &Vec64) -> f64 {
        match self.kind {
            LossKind::L1 => r.iter().map(|x| x.abs()).sum(),
            LossKind::L2 => r.norm(),
            LossKind::LeastSquares => 0.5 * r.norm_squared(),
        }
    }

    pub fn subgradient(&self, x: &Mat) -> Result<Mat> {
        Ok(self.eval(x)?.subgrad)
    }

    /// Value and subgradient from one fused pass over the measurements.
    pub fn eval(&self, x: &Mat) -> Result<LossEval> {
        match self.kind {
            LossKind::L1 => {
                let (r, subgrad) = self.op.residual_and_weighted_adjoint(x, self.y, |ri| {
                    if ri > 0.0 {
                        1.0
                    } else if ri < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })?;
                Ok(LossEval {
                    value: r.iter().map(|x| x.abs()).sum(),
                    subgrad,
                    zero_residual: false,
                })
            }
            LossKind::L2 => {
                let (r, unnormalized) = self.op.residual_and_weighted_adjoint(x, self.y, |ri| ri)?;
                let norm = r.norm();
                if norm == 0.0 {
                    Ok(LossEval {
                        value: 0.0,
                        subgrad: Mat::zeros(self.op.n1(), self.op.n2()),
                        zero_residual: true,
                    })
                } else {
                    Ok(LossEval {
                        value: norm,
                        subgrad: unnormalized / norm,
                        zero_residual: false,
                    })
                }
            }
            LossKind::LeastSquares => {
                let (r, subgrad) = self.op.residual_and_weighted_adjoint(x, self.y, |ri| ri)?;
                Ok(LossEval {
                    value: 0.5 * r.norm_squared(),
                    subgrad,
                    zero_residual: false,
                })
            }
        }
    }

    pub fn eval_residual(&self, r: &Vec64) -> Result<LossEval> {
        let value = self.value_of_residual(r);
        let mut zero_residual = false;
        let subgrad = match self.kind {
            LossKind::L1 => {
                let signs = Vec64::from_iterator(
                    r.len(),
                    r.iter().map(|&x| {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }),
                );
                self.op.adjoint_apply(&signs)?
            }
            LossKind::L2 => {
                let norm = r.norm();
                if norm == 0.0 {
                    zero_residual = true;
                    Mat::zeros(self.op.n1(), self.op.n2())
                } else {
                    self.op.adjoint_apply(&(r / norm))?
                }
            }
            LossKind::LeastSquares => self.op.adjoint_apply(r)?,
        };
        Ok(LossEval {
            value,
            subgrad,
            zero_residual,
        })
    }
}
