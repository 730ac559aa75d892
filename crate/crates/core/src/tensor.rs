//! Dense order-4 tensors and their matrix unfoldings.
//!
//! Entries are stored in row-major order over `(i, j, k, l)`: the last index
//! moves fastest, so the flat offset of `(i, j, k, l)` is
//! `((i * d + j) * d + k) * d + l`.
//!
//! Modes are numbered `1..=4` in [`ReshapePlan`] to match the usual
//! `T_{A,B}` notation; everything else is zero-based.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::MatrixView;

const T4_MAGIC: &[u8; 4] = b"T4v1";

/// An ordered bipartition of the four modes.
///
/// The first mode listed in `row_modes` is the most significant digit of the
/// row index; the same holds for columns. `{2,1}{3,4}` and `{1,2}{3,4}` are
/// therefore different plans.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReshapePlan {
    row_modes: Vec<u8>,
    col_modes: Vec<u8>,
}

impl ReshapePlan {
    /// Builds a plan from 1-based mode lists.
    pub fn new(row_modes: &[u8], col_modes: &[u8]) -> Result<Self> {
        if row_modes.is_empty() || col_modes.is_empty() {
            return Err(Error::Plan("both sides of the partition must be non-empty".into()));
        }
        let mut seen = [false; 4];
        for &m in row_modes.iter().chain(col_modes) {
            if !(1..=4).contains(&m) {
                return Err(Error::Plan(format!("mode {m} is outside 1..=4")));
            }
            if std::mem::replace(&mut seen[(m - 1) as usize], true) {
                return Err(Error::Plan(format!("mode {m} appears more than once")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Plan(format!("mode {} is missing", missing + 1)));
        }
        Ok(Self {
            row_modes: row_modes.to_vec(),
            col_modes: col_modes.to_vec(),
        })
    }

    /// `{1,2}{3,4}`, the square unfolding.
    pub fn square() -> Self {
        Self::new(&[1, 2], &[3, 4]).expect("static plan")
    }

    /// `{1,3}{2,4}`, the target of the sigma reshaping.
    pub fn sigma() -> Self {
        Self::new(&[1, 3], &[2, 4]).expect("static plan")
    }

    /// `{1,2,3}{4}`.
    pub fn rect_123_4() -> Self {
        Self::new(&[1, 2, 3], &[4]).expect("static plan")
    }

    /// `{1,2,4}{3}`.
    pub fn rect_124_3() -> Self {
        Self::new(&[1, 2, 4], &[3]).expect("static plan")
    }

    pub fn row_modes(&self) -> &[u8] {
        &self.row_modes
    }

    pub fn col_modes(&self) -> &[u8] {
        &self.col_modes
    }

    pub fn shape(&self, d: usize) -> (usize, usize) {
        (
            d.pow(self.row_modes.len() as u32),
            d.pow(self.col_modes.len() as u32),
        )
    }

    /// Per-mode strides `(row_stride, col_stride)`; exactly one is non-zero.
    fn strides(&self, d: usize) -> [(usize, usize); 4] {
        let mut out = [(0, 0); 4];
        let mut s = 1;
        for &m in self.row_modes.iter().rev() {
            out[(m - 1) as usize].0 = s;
            s *= d;
        }
        s = 1;
        for &m in self.col_modes.iter().rev() {
            out[(m - 1) as usize].1 = s;
            s *= d;
        }
        out
    }
}

impl fmt::Display for ReshapePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[u8]| {
            v.iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(f, "{{{}}}{{{}}}", join(&self.row_modes), join(&self.col_modes))
    }
}

impl FromStr for ReshapePlan {
    type Err = Error;

    /// Parses `"{1,2}{3,4}"` or the short form `"12/34"`.
    fn from_str(s: &str) -> Result<Self> {
        let digits = |part: &str| -> Result<Vec<u8>> {
            part.chars()
                .filter(|c| !matches!(c, ',' | ' ' | '{' | '}'))
                .map(|c| {
                    c.to_digit(10)
                        .map(|m| m as u8)
                        .ok_or_else(|| Error::Plan(format!("unexpected character {c:?}")))
                })
                .collect()
        };
        let s = s.trim();
        let (rows, cols) = if let Some((r, c)) = s.split_once('/') {
            (r, c)
        } else if let Some(idx) = s.find("}{") {
            (&s[..idx + 1], &s[idx + 1..])
        } else {
            return Err(Error::Plan(format!("cannot parse plan {s:?}")));
        };
        Self::new(&digits(rows)?, &digits(cols)?)
    }
}

/// A dense tensor in `(R^d)^{⊗4}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "tensor dimension must be positive");
        Self {
            dim,
            data: vec![0.0; dim.pow(4)],
        }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("tensor dimension must be positive".into()));
        }
        if data.len() != dim.pow(4) {
            return Err(Error::Dimension {
                expected: dim.pow(4),
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("tensor has non-finite entries".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dim);
        let mut idx = 0;
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        t.data[idx] = f(i, j, k, l);
                        idx += 1;
                    }
                }
            }
        }
        t
    }

    /// `v ⊗ v ⊗ v ⊗ v`.
    pub fn rank_one(v: &[f64]) -> Self {
        let mut t = Self::zeros(v.len());
        t.add_rank_one(v, 1.0);
        t
    }

    /// `Σ_i a_i^{⊗4}`.
    pub fn sum_of_powers<'a>(dim: usize, vectors: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut t = Self::zeros(dim);
        for v in vectors {
            t.add_rank_one(v, 1.0);
        }
        t
    }

    /// `self += weight · v^{⊗4}`.
    pub fn add_rank_one(&mut self, v: &[f64], weight: f64) {
        assert_eq!(v.len(), self.dim, "vector length must match tensor dimension");
        let d = self.dim;
        let vv: Vec<f64> = (0..d * d).map(|ij| v[ij / d] * v[ij % d]).collect();
        for (ij, &a) in vv.iter().enumerate() {
            let s = weight * a;
            if s == 0.0 {
                continue;
            }
            let row = &mut self.data[ij * d * d..(ij + 1) * d * d];
            for (x, &b) in row.iter_mut().zip(&vv) {
                *x += s * b;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        let d = self.dim;
        ((i * d + j) * d + k) * d + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.offset(i, j, k, l)]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Entrywise inner product `⟨self, other⟩`.
    pub fn inner(&self, other: &Tensor4) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `⟨self, v^{⊗4}⟩ = (v⊗v)ᵀ T_{12,34} (v⊗v)`.
    pub fn quartic_form(&self, v: &[f64]) -> f64 {
        let d = self.dim;
        assert_eq!(v.len(), d);
        let vv: Vec<f64> = (0..d * d).map(|ij| v[ij / d] * v[ij % d]).collect();
        self.data
            .chunks_exact(d * d)
            .zip(&vv)
            .map(|(row, &a)| a * row.iter().zip(&vv).map(|(x, b)| x * b).sum::<f64>())
            .sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| s * x).collect(),
        }
    }

    pub fn add(&self, other: &Tensor4) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Tensor4) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Reorders modes: output entry `(i_0, i_1, i_2, i_3)` is taken from the
    /// input at the index whose mode `perm[m]` holds `i_m`.
    pub fn permute(&self, perm: [usize; 4]) -> Self {
        let d = self.dim;
        let mut stride = [0usize; 4];
        let base = [d * d * d, d * d, d, 1];
        for (m, &p) in perm.iter().enumerate() {
            stride[m] = base[p];
        }
        let mut out = Self::zeros(d);
        let mut idx = 0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        out.data[idx] =
                            self.data[i * stride[0] + j * stride[1] + k * stride[2] + l * stride[3]];
                        idx += 1;
                    }
                }
            }
        }
        out
    }

    /// Average over all 24 mode permutations.
    pub fn symmetrize(&self) -> Self {
        let mut acc = Self::zeros(self.dim);
        for perm in all_permutations() {
            let p = self.permute(perm);
            for (a, b) in acc.data.iter_mut().zip(&p.data) {
                *a += b;
            }
        }
        acc.scale(1.0 / 24.0)
    }

    /// Largest deviation from full permutation symmetry.
    pub fn asymmetry(&self) -> f64 {
        all_permutations()
            .map(|p| self.permute(p).max_abs_diff(self))
            .fold(0.0, f64::max)
    }

    pub fn reshape(&self, plan: &ReshapePlan) -> MatrixView {
        let d = self.dim;
        let (rows, cols) = plan.shape(d);
        let s = plan.strides(d);
        let mut m = DMatrix::zeros(rows, cols);
        let mut idx = 0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let r = i * s[0].0 + j * s[1].0 + k * s[2].0 + l * s[3].0;
                        let c = i * s[0].1 + j * s[1].1 + k * s[2].1 + l * s[3].1;
                        m[(r, c)] = self.data[idx];
                        idx += 1;
                    }
                }
            }
        }
        MatrixView::with_plan(m, plan.clone())
    }

    /// Inverse of [`Tensor4::reshape`].
    pub fn from_unfolding(m: &DMatrix<f64>, plan: &ReshapePlan, dim: usize) -> Result<Self> {
        let (rows, cols) = plan.shape(dim);
        if m.nrows() != rows || m.ncols() != cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: m.nrows() * m.ncols(),
            });
        }
        let d = dim;
        let s = plan.strides(d);
        let mut t = Self::zeros(d);
        let mut idx = 0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let r = i * s[0].0 + j * s[1].0 + k * s[2].0 + l * s[3].0;
                        let c = i * s[0].1 + j * s[1].1 + k * s[2].1 + l * s[3].1;
                        t.data[idx] = m[(r, c)];
                        idx += 1;
                    }
                }
            }
        }
        Ok(t)
    }

    /// The square unfolding `T_{12,34}`; cheaper than the general path because
    /// the canonical order is already row-major for it.
    pub fn square_matrix(&self) -> DMatrix<f64> {
        let n = self.dim * self.dim;
        DMatrix::from_row_slice(n, n, &self.data)
    }

    pub fn from_square_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        let dim = (n as f64).sqrt().round() as usize;
        if m.ncols() != n || dim * dim != n || dim == 0 {
            return Err(Error::Domain(format!(
                "{}x{} is not a d^2 x d^2 matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        // transpose of a column-major buffer is the row-major buffer
        let data = m.transpose().as_slice().to_vec();
        Ok(Self { dim, data })
    }

    /// `M_g = Σ_{ij} g_{ij} T[i,j,:,:]`: contraction of modes 1 and 2 against
    /// `g ∈ R^{d²}`, returned as a d×d matrix over modes 3 and 4.
    pub fn contract_front(&self, g: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        assert_eq!(g.len(), d * d);
        let mut acc = vec![0.0; d * d];
        for (row, &w) in self.data.chunks_exact(d * d).zip(g) {
            if w == 0.0 {
                continue;
            }
            for (a, &x) in acc.iter_mut().zip(row) {
                *a += w * x;
            }
        }
        DMatrix::from_row_slice(d, d, &acc)
    }

    /// `T_{12,34} (u ⊗ u)`, reshaped to a d×d matrix over modes 1 and 2.
    pub fn apply_to_square(&self, u: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        assert_eq!(u.len(), d);
        let uu: Vec<f64> = (0..d * d).map(|kl| u[kl / d] * u[kl % d]).collect();
        let out: Vec<f64> = self
            .data
            .chunks_exact(d * d)
            .map(|row| row.iter().zip(&uu).map(|(x, y)| x * y).sum())
            .collect();
        DMatrix::from_row_slice(d, d, &out)
    }

    pub fn write_t4(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_t4_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_t4_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(T4_MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_t4(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_t4_from(&mut BufReader::new(file))
    }

    pub fn read_t4_from(r: &mut impl Read) -> Result<Self> {
        let bad = |reason: String| Error::Format { kind: "t4", reason };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| bad(format!("missing header: {e}")))?;
        if &magic != T4_MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)
            .map_err(|e| bad(format!("missing dimension: {e}")))?;
        let dim = u64::from_le_bytes(word) as usize;
        if dim == 0 || dim > 256 {
            return Err(bad(format!("unsupported dimension {dim}")));
        }
        let n = dim.pow(4);
        let mut data = Vec::with_capacity(n);
        for idx in 0..n {
            r.read_exact(&mut word)
                .map_err(|e| bad(format!("truncated at entry {idx} of {n}: {e}")))?;
            data.push(f64::from_le_bytes(word));
        }
        if r.read(&mut word).map_err(|e| bad(e.to_string()))? != 0 {
            return Err(bad("trailing bytes after payload".into()));
        }
        Tensor4::from_vec(dim, data)
    }
}

/// The 24 permutations of `[0, 1, 2, 3]`.
pub fn all_permutations() -> impl Iterator<Item = [usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in (0..4).filter(|&b| b != a) {
            for c in (0..4).filter(|&c| c != a && c != b) {
                out.push([a, b, c, 6 - a - b - c]);
            }
        }
    }
    out.into_iter()
}

/// `v ⊗ v` as a flat vector of length d².
pub fn kron_square(v: &[f64]) -> DVector<f64> {
    let d = v.len();
    DVector::from_fn(d * d, |ij, _| v[ij / d] * v[ij % d])
}
