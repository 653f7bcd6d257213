//! Eigenface subspace built with the snapshot method.
//!
//! With N training images of D pixels (N much smaller than D), the
//! eigenvectors of the D x D covariance `A Aᵀ / N` are recovered from the
//! N x N Gram matrix `Aᵀ A`: if `Aᵀ A u = λ u` then `A u` is a covariance
//! eigenvector with eigenvalue `λ / N`. `A` holds the mean-centred images as
//! columns.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::{self, CodecError};
use crate::imageio::{ImageDims, PixelVector};
use crate::linalg::{self, dot, LinalgError, Matrix};

pub const MAGIC: &[u8; 4] = b"FEIG";
pub const FORMAT_VERSION: u32 = 1;
/// Gram eigenvalues at or below this fraction of the largest are dropped.
pub const RANK_FLOOR: f64 = 1e-10;
pub const MAX_DEFAULT_K: usize = 40;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("vector length {actual} does not match expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("k = {k} is out of range (must be 1..={max})")]
    KOutOfRange { k: usize, max: usize },
    #[error("training images are all identical; covariance is zero")]
    DegenerateTrainingSet,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("I/O failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("eigenspace file version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt eigenspace file: {0}")]
    CorruptModel(String),
}

impl From<CodecError> for EigenError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Corrupt(m) => EigenError::CorruptModel(m),
            CodecError::VersionMismatch { found, supported } => {
                EigenError::VersionMismatch { found, supported }
            }
        }
    }
}

/// Coordinates of one image in face space.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub coords: Vec<f64>,
    pub subject: Option<String>,
}

impl FeatureVector {
    pub fn new(coords: Vec<f64>) -> Self {
        FeatureVector {
            coords,
            subject: None,
        }
    }

    pub fn with_subject(mut self, subject: impl Into<String>) -> Self {
        self.subject = Some(subject.into());
        self
    }
}

/// `min(N - 1, 40)`, at least 1.
pub fn default_k(training_count: usize) -> usize {
    training_count.saturating_sub(1).clamp(1, MAX_DEFAULT_K)
}

pub fn compute_mean(images: &[PixelVector]) -> Result<PixelVector, EigenError> {
    let first = images.first().ok_or(EigenError::EmptyTrainingSet)?;
    let d = first.len();
    let mut sum = vec![0.0; d];
    for img in images {
        if img.len() != d {
            return Err(EigenError::LengthMismatch {
                expected: d,
                actual: img.len(),
            });
        }
        for (s, &v) in sum.iter_mut().zip(img.iter()) {
            *s += v;
        }
    }
    let n = images.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect::<Vec<_>>().into())
}

/// Mean face plus an orthonormal eigenface basis ordered by decreasing variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenspace {
    dims: ImageDims,
    training_count: usize,
    mean: PixelVector,
    basis: Vec<PixelVector>,
    eigenvalues: Vec<f64>,
}

impl Eigenspace {
    /// Builds the top-`k` eigenfaces of `training`. Fewer than `k` are kept
    /// when the centred data has lower numerical rank.
    pub fn build(
        training: &[PixelVector],
        dims: ImageDims,
        k: usize,
    ) -> Result<Eigenspace, EigenError> {
        if training.is_empty() {
            return Err(EigenError::EmptyTrainingSet);
        }
        let d = dims.pixel_count();
        if let Some(bad) = training.iter().find(|v| v.len() != d) {
            return Err(EigenError::LengthMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        let n = training.len();
        if k == 0 || k > n - 1 {
            return Err(EigenError::KOutOfRange {
                k,
                max: n.saturating_sub(1),
            });
        }

        let mean = compute_mean(training)?;
        let centered: Vec<Vec<f64>> = training
            .iter()
            .map(|x| x.iter().zip(mean.iter()).map(|(a, m)| a - m).collect())
            .collect();

        // Mean rounding can leave ~1e-17 residue on identical inputs.
        let scale = mean.iter().fold(1.0f64, |acc, m| acc.max(m.abs()));
        if centered.iter().flatten().all(|c| c.abs() <= 1e-12 * scale) {
            return Err(EigenError::DegenerateTrainingSet);
        }

        let mut gram = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let g = dot(&centered[i], &centered[j]);
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
        }
        let eig = linalg::symmetric_eigen(&gram)?;
        let largest = eig.values[0];
        if largest <= 0.0 {
            return Err(EigenError::DegenerateTrainingSet);
        }
        let floor = RANK_FLOOR * largest;

        let mut basis: Vec<PixelVector> = Vec::with_capacity(k);
        let mut eigenvalues = Vec::with_capacity(k);
        for (&lambda, u) in eig.values.iter().zip(&eig.vectors) {
            if basis.len() == k || lambda <= floor {
                break;
            }
            let mut face = vec![0.0; d];
            for (&weight, column) in u.iter().zip(&centered) {
                for (f, &c) in face.iter_mut().zip(column) {
                    *f += weight * c;
                }
            }
            // Re-orthogonalize against earlier eigenfaces; small Gram
            // eigenvalues amplify round-off in A·u.
            for prev in &basis {
                let overlap = dot(&face, prev);
                for (f, &p) in face.iter_mut().zip(prev.iter()) {
                    *f -= overlap * p;
                }
            }
            let len = linalg::norm(&face);
            if len == 0.0 {
                break;
            }
            face.iter_mut().for_each(|f| *f /= len);
            linalg::canonical_sign(&mut face);
            basis.push(face.into());
            eigenvalues.push(lambda / n as f64);
        }

        Ok(Eigenspace {
            dims,
            training_count: n,
            mean,
            basis,
            eigenvalues,
        })
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn training_count(&self) -> usize {
        self.training_count
    }

    /// Number of retained eigenfaces.
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn mean(&self) -> &PixelVector {
        &self.mean
    }

    pub fn basis(&self) -> &[PixelVector] {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn check_len(&self, actual: usize) -> Result<(), EigenError> {
        let expected = self.mean.len();
        if actual != expected {
            return Err(EigenError::LengthMismatch { expected, actual });
        }
        Ok(())
    }

    pub fn project(&self, image: &[f64]) -> Result<FeatureVector, EigenError> {
        self.check_len(image.len())?;
        let centered: Vec<f64> = image
            .iter()
            .zip(self.mean.iter())
            .map(|(x, m)| x - m)
            .collect();
        Ok(FeatureVector::new(
            self.basis.iter().map(|b| dot(b, &centered)).collect(),
        ))
    }

    pub fn reconstruct(&self, feature: &FeatureVector) -> Result<PixelVector, EigenError> {
        if feature.coords.len() != self.k() {
            return Err(EigenError::LengthMismatch {
                expected: self.k(),
                actual: feature.coords.len(),
            });
        }
        let mut out = self.mean.as_slice().to_vec();
        for (&c, b) in feature.coords.iter().zip(&self.basis) {
            for (o, &bv) in out.iter_mut().zip(b.iter()) {
                *o += c * bv;
            }
        }
        Ok(out.into())
    }

    /// Root-mean-square pixel error of projecting then reconstructing `image`.
    pub fn reconstruction_rms(&self, image: &[f64]) -> Result<f64, EigenError> {
        let back = self.reconstruct(&self.project(image)?)?;
        let sq: f64 = image
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        Ok((sq / image.len() as f64).sqrt())
    }

    /// Serializes to the `FEIG` container: dims, N, k, mean, eigenvalues,
    /// basis (row by row), CRC32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = codec::Writer::new(MAGIC, FORMAT_VERSION);
        w.u32(self.dims.width as u32);
        w.u32(self.dims.height as u32);
        w.u32(self.training_count as u32);
        w.u32(self.k() as u32);
        w.f64s(&self.mean);
        w.f64s(&self.eigenvalues);
        for b in &self.basis {
            w.f64s(b);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Eigenspace, EigenError> {
        let mut r = codec::Reader::open(bytes, MAGIC, FORMAT_VERSION)?;
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let dims = ImageDims::new(width, height)
            .map_err(|_| EigenError::CorruptModel(format!("invalid dims {width}x{height}")))?;
        let training_count = r.u32()? as usize;
        let k = r.u32()? as usize;
        if k >= training_count.max(1) {
            return Err(EigenError::CorruptModel(format!(
                "k = {k} inconsistent with {training_count} training images"
            )));
        }
        let d = dims.pixel_count();
        let mean = r.f64s(d)?.into();
        let eigenvalues = r.f64s(k)?;
        let basis = (0..k)
            .map(|_| r.f64s(d).map(PixelVector::from))
            .collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(Eigenspace {
            dims,
            training_count,
            mean,
            basis,
            eigenvalues,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EigenError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| EigenError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Eigenspace, EigenError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| EigenError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Eigenspace::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn pv(v: &[f64]) -> PixelVector {
        v.to_vec().into()
    }

    fn random_set(seed: u64, n: usize, d: usize) -> Vec<PixelVector> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| rng.random::<f64>())
                    .collect::<Vec<_>>()
                    .into()
            })
            .collect()
    }

    fn dims(d: usize) -> ImageDims {
        ImageDims::new(d, 1).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            compute_mean(&[pv(&[0.0, 1.0]), pv(&[1.0, 0.0])]).unwrap(),
            pv(&[0.5, 0.5])
        );
        assert_eq!(compute_mean(&[pv(&[0.3, 0.9])]).unwrap(), pv(&[0.3, 0.9]));
        let m = compute_mean(&[pv(&[0.2, 0.4]), pv(&[0.4, 0.8]), pv(&[0.6, 1.0])]).unwrap();
        assert!((m[0] - 0.4).abs() < 1e-15);
        assert!((m[1] - 2.2 / 3.0).abs() < 1e-15);
        assert!(matches!(
            compute_mean(&[]),
            Err(EigenError::EmptyTrainingSet)
        ));
        assert!(matches!(
            compute_mean(&[pv(&[0.0]), pv(&[0.0, 1.0])]),
            Err(EigenError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn identical_images_are_degenerate() {
        let same = vec![pv(&[0.1, 0.7, 0.3]); 3];
        assert!(matches!(
            Eigenspace::build(&same, dims(3), 1),
            Err(EigenError::DegenerateTrainingSet)
        ));
    }

    #[test]
    fn k_range_is_enforced() {
        let set = random_set(1, 4, 6);
        for k in [0, 4, 9] {
            assert!(matches!(
                Eigenspace::build(&set, dims(6), k),
                Err(EigenError::KOutOfRange { max: 3, .. })
            ));
        }
        assert!(matches!(
            Eigenspace::build(&set[..1], dims(6), 1),
            Err(EigenError::KOutOfRange { .. })
        ));
        assert!(matches!(
            Eigenspace::build(&[], dims(6), 1),
            Err(EigenError::EmptyTrainingSet)
        ));
        assert!(matches!(
            Eigenspace::build(&set, dims(5), 1),
            Err(EigenError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn two_images_give_difference_direction() {
        let a = pv(&[0.0, 0.2, 0.9]);
        let b = pv(&[0.6, 0.2, 0.1]);
        let space = Eigenspace::build(&[a.clone(), b.clone()], dims(3), 1).unwrap();
        assert_eq!(space.k(), 1);
        let diff: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
        let len = linalg::norm(&diff);
        let cos = dot(&space.basis()[0], &diff) / len;
        assert!((cos.abs() - 1.0).abs() < 1e-12);
        // first nonzero component is non-negative
        assert!(space.basis()[0][0] > 0.0);
        // variance along the axis: (len/2)^2
        assert!((space.eigenvalues()[0] - len * len / 4.0).abs() < 1e-12);
    }

    #[test]
    fn projection_identities() {
        let set = random_set(7, 6, 20);
        let space = Eigenspace::build(&set, dims(20), 5).unwrap();
        let zero = space.project(space.mean()).unwrap();
        assert!(zero.coords.iter().all(|c| c.abs() < 1e-12));
        assert_eq!(zero.coords.len(), 5);

        let shifted: Vec<f64> = space
            .mean()
            .iter()
            .zip(space.basis()[0].iter())
            .map(|(m, b)| m + b)
            .collect();
        let unit = space.project(&shifted).unwrap();
        assert!((unit.coords[0] - 1.0).abs() < 1e-12);
        assert!(unit.coords[1..].iter().all(|c| c.abs() < 1e-12));

        let back = space
            .reconstruct(&FeatureVector::new(vec![0.0; 5]))
            .unwrap();
        assert_eq!(&back, space.mean());

        assert!(matches!(
            space.project(&[0.0; 3]),
            Err(EigenError::LengthMismatch { .. })
        ));
        assert!(matches!(
            space.reconstruct(&FeatureVector::new(vec![0.0; 2])),
            Err(EigenError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn full_rank_reconstructs_training_images() {
        let set = random_set(11, 8, 30);
        let space = Eigenspace::build(&set, dims(30), 7).unwrap();
        for x in &set {
            assert!(space.reconstruction_rms(x).unwrap() < 1e-6);
        }
    }

    #[test]
    fn energy_matches_total_variance() {
        let set = random_set(3, 9, 25);
        let space = Eigenspace::build(&set, dims(25), 8).unwrap();
        let mean = compute_mean(&set).unwrap();
        let total: f64 = set
            .iter()
            .flat_map(|x| x.iter().zip(mean.iter()).map(|(a, m)| (a - m).powi(2)))
            .sum::<f64>()
            / set.len() as f64;
        let energy: f64 = space.eigenvalues().iter().sum();
        assert!((energy - total).abs() <= 1e-8 * total);
    }

    #[test]
    fn rank_deficient_data_keeps_fewer_faces() {
        // four points on a line span one direction
        let set: Vec<PixelVector> = (0..4)
            .map(|i| pv(&[0.1 * i as f64, 0.2 * i as f64, 0.5]))
            .collect();
        let space = Eigenspace::build(&set, dims(3), 3).unwrap();
        assert_eq!(space.k(), 1);
    }

    #[test]
    fn file_round_trip_and_damage() {
        let space =
            Eigenspace::build(&random_set(5, 5, 12), ImageDims::new(4, 3).unwrap(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.feig");
        space.save(&path).unwrap();
        let back = Eigenspace::load(&path).unwrap();
        assert_eq!(back.to_bytes(), space.to_bytes());
        assert_eq!(back, space);

        let bytes = space.to_bytes();
        assert!(matches!(
            Eigenspace::from_bytes(&bytes[..bytes.len() / 2]),
            Err(EigenError::CorruptModel(_))
        ));
        let mut future = bytes.clone();
        future[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Eigenspace::from_bytes(&future),
            Err(EigenError::VersionMismatch { found: 2, .. })
        ));
        assert!(matches!(
            Eigenspace::load(dir.path().join("missing")),
            Err(EigenError::Io { .. })
        ));
    }

    #[test]
    fn default_k_caps_at_forty() {
        assert_eq!(default_k(100), 40);
        assert_eq!(default_k(10), 9);
        assert_eq!(default_k(2), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn basis_is_orthonormal_and_sorted(seed in any::<u64>(), n in 2usize..10, d in 4usize..40) {
            let set = random_set(seed, n, d);
            let space = Eigenspace::build(&set, dims(d), n - 1).unwrap();
            for (i, a) in space.basis().iter().enumerate() {
                for (j, b) in space.basis().iter().enumerate() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot(a, b) - expected).abs() < 1e-6);
                }
            }
            prop_assert!(space.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(space.eigenvalues().iter().all(|&l| l >= 0.0));
        }

        #[test]
        fn reconstruction_error_non_increasing_in_k(seed in any::<u64>(), n in 3usize..9) {
            let d = 24;
            let set = random_set(seed, n + 1, d);
            let (train, probe) = set.split_at(n);
            let spaces: Vec<Eigenspace> =
                (1..n).map(|k| Eigenspace::build(train, dims(d), k).unwrap()).collect();
            for x in train.iter().chain(probe) {
                let errs: Vec<f64> = spaces.iter().map(|s| s.reconstruction_rms(x).unwrap()).collect();
                prop_assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            }
        }
    }
}
