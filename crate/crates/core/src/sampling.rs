//! Seeded random objects. Every stochastic routine takes a `(seed, stream)`
//! pair so that parallel fan-out stays reproducible regardless of ordering.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{pairs, CurvatureTensor, SymmetricForm};

pub type LabRng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

pub fn unit_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// GOE-style symmetric form with unit-variance entries.
pub fn random_form(rng: &mut impl Rng, n: usize) -> SymmetricForm {
    let m = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    SymmetricForm::from_matrix(&m)
}

/// Positive semidefinite form G Gᵀ / n.
pub fn random_psd_form(rng: &mut impl Rng, n: usize) -> SymmetricForm {
    let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    SymmetricForm::from_matrix(&(&g * g.transpose() / n as f64))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Generic algebraic curvature tensor: Gaussian block projected onto Bianchi.
pub fn random_tensor(rng: &mut impl Rng, n: usize) -> CurvatureTensor {
    let p = pairs(n).len();
    let m = DMatrix::from_fn(p, p, |_, _| gaussian(rng));
    CurvatureTensor::from_block(n, &m).expect("dimension validated by caller")
}
