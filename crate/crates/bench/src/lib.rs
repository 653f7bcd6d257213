//! Seeded inputs shared by the criterion benches.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thermovis::linalg::Matrix;
use thermovis::mlp::Sample;
use thermovis::{GrayImage, ImageDims, PixelVector};

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, dims: ImageDims) -> GrayImage {
    GrayImage::from_fn(dims, |_, _| rng.random::<f64>())
}

pub fn random_faces(rng: &mut impl Rng, n: usize, dims: ImageDims) -> Vec<PixelVector> {
    (0..n)
        .map(|_| {
            (0..dims.pixel_count())
                .map(|_| rng.random::<f64>())
                .collect::<Vec<_>>()
                .into()
        })
        .collect()
}

pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for r in 0..n {
        for c in r..n {
            let v = rng.random_range(-1.0..1.0);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    m
}

/// `n` samples with standard-scale inputs and one-hot targets over `classes`.
pub fn random_samples(rng: &mut impl Rng, n: usize, inputs: usize, classes: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| Sample {
            input: (0..inputs).map(|_| rng.random_range(-2.0..2.0)).collect(),
            target: thermovis::mlp::one_hot(i % classes, classes),
        })
        .collect()
}
