//! Fixed inputs shared by the benchmarks.

use spectensor::decompose::{clip_rect, preprocess};
use spectensor::dictlearn::{generate_samples, random_dictionary, NiceDistSpec, Samples};
use spectensor::harness::{gen_instance, Instance, NoiseKind, NoiseModel};
use spectensor::Tensor4;

pub const SEED: u64 = 7;

/// `n = d / 2` components under scaled-identity noise.
pub fn noisy_instance(d: usize, eps: f64) -> Instance {
    gen_instance(d, d / 2, &NoiseModel::new(NoiseKind::IdentityScaled, eps), SEED)
        .expect("valid instance")
}

/// The tensor the contraction step sees: preprocessed, then clipped.
pub fn clipped(d: usize, eps: f64) -> Tensor4 {
    let inst = noisy_instance(d, eps);
    let pre = preprocess(&inst.tensor, eps).expect("preprocess");
    clip_rect(&pre.to_tensor().expect("square plan")).expect("clip")
}

pub fn samples(d: usize, p: f64, m: usize) -> Samples {
    let a = random_dictionary(d, d, SEED).expect("dictionary");
    generate_samples(&a, &NiceDistSpec::new(d, p).expect("spec"), m, SEED).expect("samples")
}
