use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::decompose::ComponentSet;
use crate::dense;
use crate::error::{Error, Result};
use crate::spectral::psd_truncate_factored;
use crate::tensor::{all_permutations, ReshapePlan, Tensor4};

use super::nice::Samples;

/// Samples summed naively before entering the pairwise cascade.
const BLOCK: usize = 64;

/// Samples per parallel shard in [`empirical_moment4`]. Fixed so the
/// summation tree, and hence the result, does not depend on thread count.
const SHARD: usize = 8192;

/// Streaming sum of `y^{⊗4}` over the `C(d+3, 4)` index multisets
/// `i ≤ j ≤ k ≤ l`.
///
/// Blocks of samples are summed directly and the block sums are combined
/// like a binary counter, so each sample passes through `O(log m)` additions.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    dim: usize,
    count: u64,
    block: Vec<f64>,
    in_block: usize,
    /// `levels[k]` holds the sum of `2^k` full blocks.
    levels: Vec<Option<Vec<f64>>>,
}

fn multiset_count(d: usize) -> usize {
    d * (d + 1) * (d + 2) * (d + 3) / 24
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            block: vec![0.0; multiset_count(dim)],
            in_block: 0,
            levels: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, y: &[f64]) -> Result<()> {
        let d = self.dim;
        if y.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: y.len(),
            });
        }
        let mut slot = self.block.iter_mut();
        for i in 0..d {
            let yi = y[i];
            for j in i..d {
                let yij = yi * y[j];
                for k in j..d {
                    let yijk = yij * y[k];
                    for &yl in &y[k..] {
                        *slot.next().expect("multiset slot") += yijk * yl;
                    }
                }
            }
        }
        self.count += 1;
        self.in_block += 1;
        if self.in_block == BLOCK {
            self.flush_block();
        }
        Ok(())
    }

    fn flush_block(&mut self) {
        let mut carry = std::mem::replace(&mut self.block, vec![0.0; multiset_count(self.dim)]);
        self.in_block = 0;
        for level in self.levels.iter_mut() {
            match level.take() {
                None => {
                    *level = Some(carry);
                    return;
                }
                Some(prev) => {
                    carry.iter_mut().zip(&prev).for_each(|(c, p)| *c += p);
                }
            }
        }
        self.levels.push(Some(carry));
    }

    /// Sum of `y^{⊗4}` over the unique multisets, smallest partial sums first.
    fn total(&self) -> Vec<f64> {
        let mut total = self.block.clone();
        for level in self.levels.iter().flatten() {
            total.iter_mut().zip(level).for_each(|(t, l)| *t += l);
        }
        total
    }

    /// Combines two accumulators over disjoint samples.
    pub fn merge(self, other: MomentAccumulator) -> Result<MomentAccumulator> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut total = self.total();
        total.iter_mut().zip(other.total()).for_each(|(t, o)| *t += o);
        Ok(Self {
            dim: self.dim,
            count: self.count + other.count,
            block: vec![0.0; total.len()],
            in_block: 0,
            levels: vec![Some(total)],
        })
    }

    /// The empirical mean of `y^{⊗4}`, exactly symmetric.
    pub fn finish(&self) -> Result<MomentEstimate> {
        if self.count == 0 {
            return Err(Error::InvalidParam("no samples were accumulated".into()));
        }
        let d = self.dim;
        let inv = 1.0 / self.count as f64;
        let total = self.total();
        let mut data = vec![0.0; d * d * d * d];
        let perms: Vec<[usize; 4]> = all_permutations().collect();
        let mut slot = total.iter();
        for i in 0..d {
            for j in i..d {
                for k in j..d {
                    for l in k..d {
                        let v = slot.next().expect("multiset slot") * inv;
                        let idx = [i, j, k, l];
                        for p in &perms {
                            let (a, b, c, e) = (idx[p[0]], idx[p[1]], idx[p[2]], idx[p[3]]);
                            data[((a * d + b) * d + c) * d + e] = v;
                        }
                    }
                }
            }
        }
        Ok(MomentEstimate {
            tensor: Tensor4::from_vec(d, data)?,
            count: self.count,
            scale: 1.0,
        })
    }
}

/// Mean of `y^{⊗4}` over the samples, plus the divisor applied to it.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub tensor: Tensor4,
    pub count: u64,
    /// The tensor has been divided by this estimate of `E[x_1⁴]`; 1 until
    /// [`MomentEstimate::normalized`] is called.
    pub scale: f64,
}

impl MomentEstimate {
    /// Divides by the median of the top `n` eigenvalues of the square
    /// unfolding, a stand-in for the unknown `E[x_1⁴]`.
    pub fn normalized(self, n: usize) -> Result<MomentEstimate> {
        let scale = kurtosis_scale(&self.tensor, n)?;
        if !(scale > 0.0) {
            return Err(Error::Degenerate(format!(
                "moment has no positive signal eigenvalues (scale {scale:.3e})"
            )));
        }
        Ok(MomentEstimate {
            tensor: self.tensor.scale(1.0 / scale),
            count: self.count,
            scale: self.scale * scale,
        })
    }
}

/// Median of the top `n` eigenvalues of `T_{12,34}`.
pub fn kurtosis_scale(t: &Tensor4, n: usize) -> Result<f64> {
    let d = t.dim();
    if n == 0 || n > d * d {
        return Err(Error::InvalidParam(format!("cannot take the top {n} eigenvalues")));
    }
    let (values, _) = dense::sym_eigen_desc(&crate::spectral::symmetrized(&t.square_matrix())?)?;
    let top = values.as_slice()[..n].to_vec();
    // already descending
    Ok(if n % 2 == 1 {
        top[n / 2]
    } else {
        0.5 * (top[n / 2 - 1] + top[n / 2])
    })
}

/// Empirical fourth moment of a sample set, accumulated in parallel shards.
pub fn empirical_moment4(samples: &Samples) -> Result<MomentEstimate> {
    let d = samples.dim();
    if samples.is_empty() {
        return Err(Error::InvalidParam("no samples".into()));
    }
    let shards: Vec<MomentAccumulator> = samples
        .as_slice()
        .par_chunks(SHARD * d)
        .map(|chunk| {
            let mut acc = MomentAccumulator::new(d);
            for y in chunk.chunks_exact(d) {
                acc.push(y)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    // fixed pairwise merge order
    let mut level = shards;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b)?,
                None => a,
            });
        }
        level = next;
    }
    level.pop().expect("one shard").finish()
}

fn add_outer4(data: &mut [f64], d: usize, v: [&[f64]; 4], w: f64) {
    let mut idx = 0;
    for i in 0..d {
        let x = w * v[0][i];
        for j in 0..d {
            let xy = x * v[1][j];
            for k in 0..d {
                let xyz = xy * v[2][k];
                for &l in v[3] {
                    data[idx] += xyz * l;
                    idx += 1;
                }
            }
        }
    }
}

/// `E[(Ax)^{⊗4}]` for a coefficient law with vanishing odd moments:
/// `Σ_i P_ii a_i^{⊗4} + Σ_{i≠j} P_ij (a_i a_i a_j a_j + a_i a_j a_i a_j + a_i a_j a_j a_i)`
/// where `P_ij = E[x_i²x_j²]`.
pub fn analytic_moment(a: &ComponentSet, pair: &DMatrix<f64>) -> Result<Tensor4> {
    let n = a.len();
    if pair.shape() != (n, n) {
        return Err(Error::Dimension {
            expected: n,
            got: pair.nrows(),
        });
    }
    let d = a.dim();
    let mut data = vec![0.0; d * d * d * d];
    for i in 0..n {
        let ai = a.get(i);
        add_outer4(&mut data, d, [ai, ai, ai, ai], pair[(i, i)]);
        for j in 0..n {
            if i == j || pair[(i, j)] == 0.0 {
                continue;
            }
            let (aj, w) = (a.get(j), pair[(i, j)]);
            add_outer4(&mut data, d, [ai, ai, aj, aj], w);
            add_outer4(&mut data, d, [ai, aj, ai, aj], w);
            add_outer4(&mut data, d, [ai, aj, aj, ai], w);
        }
    }
    Tensor4::from_vec(d, data)
}

/// The `{1,2}{3,4} → {1,3}{2,4}` reshaping of a `d² × d²` matrix:
/// `(a⊗b)(c⊗e)ᵀ ↦ (a⊗c)(b⊗e)ᵀ`.
pub fn reshape_sigma(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Domain(format!(
            "sigma reshaping needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let side = m.nrows();
    let d = (side as f64).sqrt().round() as usize;
    if d * d != side {
        return Err(Error::Domain(format!("side {side} is not a perfect square")));
    }
    Ok(DMatrix::from_fn(side, side, |r, c| {
        let (i, k) = (r / d, r % d);
        let (j, l) = (c / d, c % d);
        m[(i * d + j, k * d + l)]
    }))
}

/// Two truncations: `(T_{12,34} - 3α I)_+`, then the σ reshaping of that,
/// truncated again at `α`. The result is folded back along `{1,3}{2,4}`.
pub fn clean_moment(moment: &Tensor4, alpha: f64) -> Result<Tensor4> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParam(format!("alpha must be >= 0, got {alpha}")));
    }
    let d = moment.dim();
    let first = psd_truncate_factored(&moment.square_matrix(), 3.0 * alpha)?.to_dense();
    let swapped = reshape_sigma(&first)?;
    let second = psd_truncate_factored(&swapped, alpha)?.to_dense();
    Tensor4::from_unfolding(&second, &ReshapePlan::sigma(), d)
}

/// Spectral norms of `Σ_{i≠j} P_ij a_ia_iᵀ ⊗ a_ja_jᵀ` and
/// `Σ_{i≠j} P_ij a_ja_iᵀ ⊗ a_ia_jᵀ`.
pub fn cross_term_norms(a: &ComponentSet, pair: &DMatrix<f64>) -> Result<(f64, f64)> {
    let n = a.len();
    if pair.shape() != (n, n) {
        return Err(Error::Dimension {
            expected: n,
            got: pair.nrows(),
        });
    }
    let d = a.dim();
    let side = d * d;
    let mut first = DMatrix::zeros(side, side);
    let mut second = DMatrix::zeros(side, side);
    for i in 0..n {
        for j in 0..n {
            if i == j || pair[(i, j)] == 0.0 {
                continue;
            }
            let w = pair[(i, j)];
            let (ai, aj) = (a.get(i), a.get(j));
            for r in 0..side {
                let (r1, r2) = (r / d, r % d);
                let f_row = w * ai[r1] * aj[r2];
                let s_row = w * aj[r1] * ai[r2];
                if f_row == 0.0 && s_row == 0.0 {
                    continue;
                }
                for c in 0..side {
                    let (c1, c2) = (c / d, c % d);
                    first[(r, c)] += f_row * ai[c1] * aj[c2];
                    second[(r, c)] += s_row * ai[c1] * aj[c2];
                }
            }
        }
    }
    let norm = |m: &DMatrix<f64>| -> Result<f64> {
        Ok(dense::singular_values(m)?.iter().copied().fold(0.0, f64::max))
    };
    Ok((norm(&first)?, norm(&second)?))
}
