//! Dense linear algebra on `ndarray` matrices.
//!
//! Decompositions are delegated to `faer`; everything here converts between
//! `Array2<Complex64>` and `faer::Mat` at the boundary so the rest of the
//! crate only ever sees `ndarray` types.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, Side};
use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{QfpError, Result};

pub type CMatrix = Array2<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub(crate) fn to_faer(a: &ArrayView2<Complex64>) -> Mat<Complex64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn to_faer_real(a: &ArrayView2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_faer(m: faer::MatRef<'_, Complex64>) -> CMatrix {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn dagger(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diag().sum()
}

/// Max entrywise modulus.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) - b.dot(a)
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.dot(b) + b.dot(a)
}

/// Hermitian part `(A + A†)/2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
pub fn eigh(a: &CMatrix) -> Result<(Array1<f64>, CMatrix)> {
    let m = to_faer(&a.view());
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| QfpError::Linalg(format!("hermitian eigendecomposition: {e:?}")))?;
    let s = evd.S().column_vector();
    let values = Array1::from_iter((0..s.nrows()).map(|i| s[i].re));
    Ok((values, from_faer(evd.U())))
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(a: &CMatrix) -> Result<Vec<f64>> {
    to_faer(&a.view())
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| QfpError::Linalg(format!("hermitian eigenvalues: {e:?}")))
}

/// Eigendecomposition of a real symmetric matrix; eigenvalues ascending.
pub fn eigh_real(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let m = to_faer_real(&a.view());
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| QfpError::Linalg(format!("symmetric eigendecomposition: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values = Array1::from_iter((0..s.nrows()).map(|i| s[i]));
    let vectors = Array2::from_shape_fn((u.nrows(), u.ncols()), |(i, j)| u[(i, j)]);
    Ok((values, vectors))
}

/// Singular values, descending.
pub fn singular_values(a: &CMatrix) -> Result<Vec<f64>> {
    to_faer(&a.view())
        .singular_values()
        .map_err(|e| QfpError::Linalg(format!("singular values: {e:?}")))
}

/// Full SVD; returns (singular values descending, right singular vectors as columns).
pub fn svd_right(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let svd = to_faer(&a.view())
        .svd()
        .map_err(|e| QfpError::Linalg(format!("svd: {e:?}")))?;
    let s = svd.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((values, from_faer(svd.V())))
}

/// LU factorization with partial pivoting.
pub struct Lu {
    inner: PartialPivLu<Complex64>,
    n: usize,
}

impl Lu {
    pub fn new(a: &CMatrix) -> Self {
        Self {
            inner: to_faer(&a.view()).partial_piv_lu(),
            n: a.nrows(),
        }
    }

    /// Solves `A X = B` for a matrix right-hand side.
    pub fn solve_matrix(&self, b: &CMatrix) -> CMatrix {
        let mut rhs = to_faer(&b.view());
        self.inner.solve_in_place(rhs.as_mut());
        from_faer(rhs.as_ref())
    }

    pub fn solve(&self, b: &Array1<Complex64>) -> Array1<Complex64> {
        let mut rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.inner.solve_in_place(rhs.as_mut());
        Array1::from_iter((0..self.n).map(|i| rhs[(i, 0)]))
    }

    /// Solves `A† x = b`.
    pub fn solve_adjoint(&self, b: &Array1<Complex64>) -> Array1<Complex64> {
        let mut rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.inner.solve_adjoint_in_place(rhs.as_mut());
        Array1::from_iter((0..self.n).map(|i| rhs[(i, 0)]))
    }
}

/// Max absolute column sum.
pub fn one_norm(a: &CMatrix) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which the degree-13 Padé approximant meets unit roundoff.
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a [13/13] Padé approximant.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.mapv(|z| z / 2f64.powi(squarings));

    let ident = CMatrix::eye(n);
    let a2 = scaled.dot(&scaled);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = |k: usize| Complex64::new(PADE13[k], 0.0);

    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = scaled.dot(&(a6.dot(&inner_u) + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &ident * b(1)));
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = a6.dot(&inner_v) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &ident * b(0);

    let mut result = Lu::new(&(&v - &u)).solve_matrix(&(&v + &u));
    for _ in 0..squarings {
        result = result.dot(&result);
    }
    result
}
