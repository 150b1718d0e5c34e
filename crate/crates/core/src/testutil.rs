//! Random fixtures shared by unit tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::state::{CMatrix, Complex64, OrbitalSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn random_matrix<R: rand::Rng>(r: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(r);
        let im: f64 = StandardNormal.sample(r);
        c(re, im)
    })
}

pub fn random_orthonormal<R: rand::Rng>(r: &mut R, d: usize, n: usize) -> OrbitalSet {
    OrbitalSet::orthonormalized(random_matrix(r, d, n)).unwrap()
}

pub fn random_unitary<R: rand::Rng>(r: &mut R, n: usize) -> CMatrix {
    random_orthonormal(r, n, n).into_inner()
}

pub fn random_hermitian<R: rand::Rng>(r: &mut R, n: usize) -> CMatrix {
    let a = random_matrix(r, n, n);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

pub fn random_normalized<R: rand::Rng>(r: &mut R, d: usize) -> OrbitalSet {
    random_orthonormal(r, d, 1)
}
