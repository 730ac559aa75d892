//! Seeded random sources.
//!
//! Everything random in the crate draws from ChaCha8 so results are identical
//! across platforms. Independent jobs (contraction trials, grid cells, sample
//! shards) get disjoint ChaCha streams derived from one seed.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A stream of `seed` that does not overlap with any other `stream` value.
pub fn substream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs two small indices into one stream id.
pub fn stream_id(major: u64, minor: u64) -> u64 {
    (major << 32) | (minor & 0xffff_ffff)
}

pub fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn unit_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// First `cols` columns of a Haar-distributed orthogonal `rows × rows` matrix.
///
/// QR of a Gaussian matrix with the sign of `R`'s diagonal folded into `Q`.
pub fn haar_orthonormal(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    assert!(cols <= rows, "cannot draw {cols} orthonormal vectors in R^{rows}");
    let g = gaussian_matrix(rng, rows, cols);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..cols {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}
