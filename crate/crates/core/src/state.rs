//! State types shared by every formulation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use num_complex::Complex64;

/// Dense complex matrix, column-major.
pub type CMatrix = DMatrix<Complex64>;

/// Dense real matrix.
pub type RMatrix = DMatrix<f64>;

/// Above this dimension [`gauge_distance`] avoids forming d×d density matrices.
const DENSE_GAUGE_LIMIT: usize = 64;

/// A set of `N` orbitals stored as the columns of a d×N complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitalSet {
    data: CMatrix,
}

impl OrbitalSet {
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("orbital set"));
        }
        Ok(Self { data })
    }

    /// Wraps a matrix without the finiteness scan. Used on hot paths where
    /// the caller checks finiteness separately.
    pub(crate) fn from_matrix_unchecked(data: CMatrix) -> Self {
        Self { data }
    }

    /// Single orbital from its coefficients.
    pub fn from_vector(coeffs: &[Complex64]) -> Result<Self> {
        Self::new(CMatrix::from_column_slice(coeffs.len(), 1, coeffs))
    }

    /// Single orbital from real coefficients.
    pub fn from_real(coeffs: &[f64]) -> Result<Self> {
        let c: Vec<Complex64> = coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_vector(&c)
    }

    /// Orthonormalises the columns of `data` (thin QR) and wraps the result.
    pub fn orthonormalized(data: CMatrix) -> Result<Self> {
        let (d, n) = data.shape();
        if n > d {
            return Err(Error::shape(format!("at most {d} orbitals"), n));
        }
        let q = data.qr().q();
        Self::new(q.columns(0, n).into_owned())
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn orbitals(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut CMatrix {
        &mut self.data
    }

    pub fn into_inner(self) -> CMatrix {
        self.data
    }

    /// Frobenius norm; the plain 2-norm for a single orbital.
    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    /// Overlap matrix Φ*Φ.
    pub fn overlap(&self) -> CMatrix {
        self.data.ad_mul(&self.data)
    }

    /// ‖Φ*Φ − I‖_F.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.orbitals();
        (self.overlap() - CMatrix::identity(n, n)).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Multiplies by a global phase e^{iθ}.
    pub fn with_phase(&self, theta: f64) -> Self {
        Self {
            data: self.data.map(|z| z * Complex64::from_polar(1.0, theta)),
        }
    }

    /// Right-multiplies by a gauge matrix U (N×N).
    pub fn rotated(&self, gauge: &CMatrix) -> Result<Self> {
        if gauge.nrows() != self.orbitals() || gauge.ncols() != self.orbitals() {
            return Err(Error::shape(
                format!("{0}x{0} gauge", self.orbitals()),
                format!("{}x{}", gauge.nrows(), gauge.ncols()),
            ));
        }
        Ok(Self {
            data: &self.data * gauge,
        })
    }

    /// Splits into real and imaginary parts.
    pub fn split(&self) -> RealImagPair {
        RealImagPair {
            q: self.data.map(|z| z.re),
            p: self.data.map(|z| z.im),
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.data.shape() != other.data.shape() {
            return Err(Error::shape(
                format!("{:?}", self.data.shape()),
                format!("{:?}", other.data.shape()),
            ));
        }
        Ok(())
    }

    /// 2-norm of the difference, ‖a − b‖_F.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }
}

/// Density matrix P = ΦΦ*.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    data: CMatrix,
}

impl DensityMatrix {
    pub fn new(data: CMatrix) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::shape("square matrix", format!("{:?}", data.shape())));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("density matrix"));
        }
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_inner(self) -> CMatrix {
        self.data
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    /// ‖P − P*‖_F
    pub fn hermiticity_error(&self) -> f64 {
        (&self.data - self.data.adjoint()).norm()
    }

    /// ‖P² − P‖_F
    pub fn idempotency_error(&self) -> f64 {
        (&self.data * &self.data - &self.data).norm()
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::shape(self.dim(), other.dim()));
        }
        Ok((&self.data - &other.data).norm())
    }
}

/// Real/imaginary split Φ = q + i·p used by the Hamiltonian formulations.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImagPair {
    pub q: RMatrix,
    pub p: RMatrix,
}

impl RealImagPair {
    pub fn new(q: RMatrix, p: RMatrix) -> Result<Self> {
        if q.shape() != p.shape() {
            return Err(Error::shape(format!("{:?}", q.shape()), format!("{:?}", p.shape())));
        }
        Ok(Self { q, p })
    }

    pub fn to_orbitals(&self) -> Result<OrbitalSet> {
        OrbitalSet::new(self.q.zip_map(&self.p, Complex64::new))
    }

    /// qᵀq + pᵀp
    pub fn gram(&self) -> RMatrix {
        self.q.tr_mul(&self.q) + self.p.tr_mul(&self.p)
    }
}

/// P = ΦΦ*.
pub fn density_from_orbitals(phi: &OrbitalSet) -> Result<DensityMatrix> {
    if !phi.is_finite() {
        return Err(Error::NonFinite("orbital set"));
    }
    DensityMatrix::new(&phi.data * phi.data.adjoint())
}

/// Frobenius distance between the density matrices of two orbital sets.
///
/// Zero iff the sets differ by a unitary gauge. For large `d` the distance is
/// evaluated as `sqrt(‖(I−P_a)Φ_b‖² + ‖(I−P_b)Φ_a‖²)`, which equals
/// `‖P_a − P_b‖_F` for orthonormal columns and never forms a d×d matrix.
pub fn gauge_distance(a: &OrbitalSet, b: &OrbitalSet) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.dim() <= DENSE_GAUGE_LIMIT {
        let pa = density_from_orbitals(a)?;
        let pb = density_from_orbitals(b)?;
        return pa.distance(&pb);
    }
    let residual = |x: &CMatrix, y: &CMatrix| {
        let proj = x * x.ad_mul(y);
        (y - proj).norm_squared()
    };
    Ok((residual(&a.data, &b.data) + residual(&b.data, &a.data)).sqrt())
}


/// `y += a x` over the column-major storage.
pub(crate) fn axpy(y: &mut CMatrix, a: Complex64, x: &CMatrix) {
    debug_assert_eq!(y.shape(), x.shape());
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

/// Symmetric (Löwdin) orthonormalisation `X ← X (X*X)^{-1/2}`, the closest
/// orthonormal frame to `X`, so a nearly orthonormal set keeps its gauge.
pub(crate) fn lowdin_orthonormalize(x: &mut CMatrix) {
    if x.ncols() == 1 {
        let n = x.norm();
        x.unscale_mut(n);
        return;
    }
    let eig = x.ad_mul(x).symmetric_eigen();
    let scale = eig.eigenvalues.map(|l| Complex64::new(l.sqrt().recip(), 0.0));
    let inv_sqrt = &eig.eigenvectors * CMatrix::from_diagonal(&scale) * eig.eigenvectors.adjoint();
    *x = &*x * inv_sqrt;
}
