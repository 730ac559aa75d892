//! Matrix views of tensors and the operator abstraction used by the
//! iterative spectral routines.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::{ReshapePlan, Tensor4};

/// Something that can be multiplied by blocks of vectors from either side.
///
/// Dense matrices and factored low-rank matrices both implement it, so the
/// subspace iteration never has to materialize a factored operator.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A · x` for a block `x` with `ncols()` rows.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    /// `Aᵀ · y` for a block `y` with `nrows()` rows.
    fn apply_t(&self, y: &DMatrix<f64>) -> DMatrix<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
    fn apply_t(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(y)
    }
}

/// A dense matrix, optionally tagged with the unfolding it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixView {
    mat: DMatrix<f64>,
    plan: Option<ReshapePlan>,
}

impl MatrixView {
    pub fn new(mat: DMatrix<f64>) -> Self {
        Self { mat, plan: None }
    }

    pub fn with_plan(mat: DMatrix<f64>, plan: ReshapePlan) -> Self {
        Self {
            mat,
            plan: Some(plan),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn plan(&self) -> Option<&ReshapePlan> {
        self.plan.as_ref()
    }

    pub fn rows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn frobenius(&self) -> f64 {
        self.mat.norm()
    }

    /// Folds the matrix back into a tensor using its recorded plan.
    pub fn to_tensor(&self) -> Result<Tensor4> {
        let plan = self
            .plan
            .as_ref()
            .ok_or_else(|| Error::Domain("matrix has no reshape plan to fold along".into()))?;
        let d = (self.mat.nrows() * self.mat.ncols()) as f64;
        let dim = d.powf(0.25).round() as usize;
        Tensor4::from_unfolding(&self.mat, plan, dim)
    }

    /// Dense text dump in MatrixMarket array format (column-major values).
    pub fn to_mtx_string(&self) -> String {
        let mut out = String::from("%%MatrixMarket matrix array real general\n");
        if let Some(plan) = &self.plan {
            let _ = writeln!(out, "% plan {plan}");
        }
        let _ = writeln!(out, "{} {}", self.mat.nrows(), self.mat.ncols());
        for x in self.mat.iter() {
            let _ = writeln!(out, "{x:.17e}");
        }
        out
    }

    pub fn from_mtx_str(s: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format { kind: "mtx", reason };
        let mut plan = None;
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let mut shape = None;
        for line in lines.by_ref() {
            if let Some(rest) = line.strip_prefix("% plan ") {
                plan = Some(rest.trim().parse::<ReshapePlan>()?);
            } else if line.starts_with('%') {
                continue;
            } else {
                let dims: Vec<usize> = line
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|e| bad(format!("bad size line: {e}"))))
                    .collect::<Result<_>>()?;
                if dims.len() != 2 {
                    return Err(bad(format!("size line {line:?}")));
                }
                shape = Some((dims[0], dims[1]));
                break;
            }
        }
        let (rows, cols) = shape.ok_or_else(|| bad("missing size line".into()))?;
        let values: Vec<f64> = lines
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("bad value {l:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: values.len(),
            });
        }
        Ok(Self {
            mat: DMatrix::from_vec(rows, cols, values),
            plan,
        })
    }
}

impl From<DMatrix<f64>> for MatrixView {
    fn from(mat: DMatrix<f64>) -> Self {
        Self::new(mat)
    }
}

impl LinearOperator for MatrixView {
    fn nrows(&self) -> usize {
        self.mat.nrows()
    }
    fn ncols(&self) -> usize {
        self.mat.ncols()
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.mat * x
    }
    fn apply_t(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.mat.tr_mul(y)
    }
}

/// A symmetric positive semidefinite matrix stored as `V · diag(w) · Vᵀ`
/// with orthonormal columns in `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPsd {
    vectors: DMatrix<f64>,
    weights: DVector<f64>,
}

impl LowRankPsd {
    pub fn new(vectors: DMatrix<f64>, weights: DVector<f64>) -> Self {
        assert_eq!(vectors.ncols(), weights.len());
        Self { vectors, weights }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            vectors: DMatrix::zeros(n, 0),
            weights: DVector::zeros(0),
        }
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let scaled = &self.vectors * DMatrix::from_diagonal(&self.weights);
        scaled * self.vectors.transpose()
    }

    /// Folds the matrix into a tensor via the `{1,2}{3,4}` unfolding.
    pub fn to_tensor(&self) -> Result<Tensor4> {
        Tensor4::from_square_matrix(&self.to_dense())
    }

    pub fn frobenius(&self) -> f64 {
        self.weights.norm()
    }
}

impl LinearOperator for LowRankPsd {
    fn nrows(&self) -> usize {
        self.vectors.nrows()
    }
    fn ncols(&self) -> usize {
        self.vectors.nrows()
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut coeffs = self.vectors.tr_mul(x);
        for (mut row, w) in coeffs.row_iter_mut().zip(self.weights.iter()) {
            row *= *w;
        }
        &self.vectors * coeffs
    }
    fn apply_t(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply(y)
    }
}
