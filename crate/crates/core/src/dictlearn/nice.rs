use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// Sparse coefficient model: coordinate `i` is active with probability `p`
/// and then equals `p^{-1/4}·(±1)` with a fair sign, so `E[x_i⁴] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiceDistSpec {
    pub n: usize,
    pub support_prob: f64,
    /// Claimed bound on `E[x_i²x_j²] / E[x_1⁴]` for `i ≠ j`. Independent
    /// supports give exactly `p`.
    pub pairwise_cap: f64,
}

impl NiceDistSpec {
    /// Independent supports, so the pairwise cap is `p` itself.
    pub fn new(n: usize, p: f64) -> Result<Self> {
        let spec = Self {
            n,
            support_prob: p,
            pairwise_cap: p,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParam("coefficient dimension must be positive".into()));
        }
        if !(self.support_prob > 0.0 && self.support_prob <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "support probability must lie in (0, 1], got {}",
                self.support_prob
            )));
        }
        // a cap of 1 (e.g. p = 1) is a valid law to sample from; the learner
        // refuses it separately
        if !(0.0..=1.0).contains(&self.pairwise_cap) {
            return Err(Error::InvalidParam(format!(
                "pairwise cap must lie in [0, 1], got {}",
                self.pairwise_cap
            )));
        }
        Ok(())
    }

    pub fn magnitude(&self) -> f64 {
        self.support_prob.powf(-0.25)
    }

    /// `E[x_i⁴]`, the same for every coordinate.
    pub fn fourth_moment(&self) -> f64 {
        1.0
    }

    /// `E[x_i²x_j²]` for independent supports: `p^{-1}·p²`, and `E[x_i⁴]` on
    /// the diagonal.
    pub fn pair_moments(&self) -> DMatrix<f64> {
        let p = self.support_prob;
        DMatrix::from_fn(self.n, self.n, |i, j| if i == j { 1.0 } else { p })
    }
}

/// Draws the support set of one coefficient vector.
///
/// Implementations must keep `Pr[i ∈ S] = p` and `Pr[j ∈ S | i ∈ S] ≤ τ` for
/// the result to be τ-nice.
pub trait SupportSampler: Sync {
    fn sample(&self, n: usize, p: f64, rng: &mut dyn RngCore) -> Vec<bool>;
}

/// Each coordinate independently with probability `p`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IndependentSupport;

impl SupportSampler for IndependentSupport {
    fn sample(&self, n: usize, p: f64, rng: &mut dyn RngCore) -> Vec<bool> {
        (0..n).map(|_| rng.random_bool(p)).collect()
    }
}

pub fn sample_nice(spec: &NiceDistSpec, rng: &mut dyn RngCore) -> Vec<f64> {
    sample_nice_with(spec, &IndependentSupport, rng)
}

pub fn sample_nice_with(
    spec: &NiceDistSpec,
    sampler: &dyn SupportSampler,
    rng: &mut dyn RngCore,
) -> Vec<f64> {
    let scale = spec.magnitude();
    let support = sampler.sample(spec.n, spec.support_prob, rng);
    support
        .into_iter()
        .map(|on| {
            if !on {
                0.0
            } else if rng.random_bool(0.5) {
                scale
            } else {
                -scale
            }
        })
        .collect()
}

/// `m` observations `y ∈ R^d` stored row after row.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

const SMP_MAGIC: &[u8; 4] = b"SMP1";

/// Samples generated per random substream. Fixed so the output does not
/// depend on the thread count.
pub const SAMPLE_SHARD: usize = 4096;

impl Samples {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("sample dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                expected: (data.len() / dim + 1) * dim,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("samples contain non-finite values".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let mut data = Vec::new();
        for r in rows {
            if r.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `y ↦ W y` for every row.
    pub fn transformed(&self, w: &DMatrix<f64>) -> Result<Samples> {
        if w.ncols() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: w.ncols(),
            });
        }
        let out = w.nrows();
        let data: Vec<f64> = self
            .data
            .par_chunks_exact(self.dim)
            .flat_map_iter(|y| {
                (0..out).map(move |r| (0..y.len()).map(|c| w[(r, c)] * y[c]).sum::<f64>())
            })
            .collect();
        Samples::new(out, data)
    }

    pub fn write_smp(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_smp_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_smp_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(SMP_MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_smp(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_smp_from(&mut BufReader::new(file))
    }

    pub fn read_smp_from(r: &mut impl Read) -> Result<Self> {
        let bad = |reason: String| Error::Format { kind: "smp", reason };
        let mut head = [0u8; 20];
        r.read_exact(&mut head)
            .map_err(|_| bad("file shorter than its 20-byte header".into()))?;
        if &head[..4] != SMP_MAGIC {
            return Err(bad(format!("bad magic {:?}", &head[..4])));
        }
        let d = u64::from_le_bytes(head[4..12].try_into().expect("8 bytes"));
        let m = u64::from_le_bytes(head[12..20].try_into().expect("8 bytes"));
        if d == 0 || d > 4096 {
            return Err(bad(format!("dimension {d} out of range")));
        }
        let count = d
            .checked_mul(m)
            .filter(|&c| c <= (1 << 34))
            .ok_or_else(|| bad(format!("{m} samples of dimension {d} is too large")))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| bad(format!("read failed: {e}")))?;
        let want = count as usize * 8;
        if bytes.len() != want {
            return Err(bad(format!(
                "expected {want} payload bytes for {m}x{d} samples, found {}",
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Samples::new(d as usize, data)
    }
}

/// `m` samples `y = A x` with `x` drawn from `spec`. `a` is `d × n`.
pub fn generate_samples(
    a: &DMatrix<f64>,
    spec: &NiceDistSpec,
    m: usize,
    seed: u64,
) -> Result<Samples> {
    generate_samples_with(a, spec, &IndependentSupport, m, seed)
}

pub fn generate_samples_with(
    a: &DMatrix<f64>,
    spec: &NiceDistSpec,
    sampler: &dyn SupportSampler,
    m: usize,
    seed: u64,
) -> Result<Samples> {
    spec.validate()?;
    if a.ncols() != spec.n {
        return Err(Error::Dimension {
            expected: spec.n,
            got: a.ncols(),
        });
    }
    let d = a.nrows();
    let shards = m.div_ceil(SAMPLE_SHARD);
    let data: Vec<f64> = (0..shards)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut rng = substream(seed, s as u64);
            let count = SAMPLE_SHARD.min(m - s * SAMPLE_SHARD);
            let mut out = Vec::with_capacity(count * d);
            for _ in 0..count {
                let x = sample_nice_with(spec, sampler, &mut rng);
                for r in 0..d {
                    out.push(x.iter().enumerate().map(|(c, xc)| a[(r, c)] * xc).sum());
                }
            }
            out
        })
        .collect();
    Samples::new(d, data)
}
