//! Small dense complex helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// `aᴴ b`.
#[inline]
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}

#[inline]
pub fn norm_sq(a: &CVector) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `|hᴴ p|²`.
#[inline]
pub fn gain(h: &CVector, p: &CVector) -> f64 {
    inner(h, p).norm_sqr()
}

/// `p pᴴ`.
pub fn outer(p: &CVector) -> CMatrix {
    p * p.adjoint()
}

/// `hᴴ A h`, real part (A assumed Hermitian).
pub fn quad_form(a: &CMatrix, h: &CVector) -> f64 {
    inner(h, &(a * h)).re
}

pub fn hermitian_residual(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn ensure_hermitian(m: &CMatrix, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let r = hermitian_residual(m);
    let scale = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    if r > tol * scale {
        return Err(Error::NotHermitian(r));
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix in descending order.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Dominant left singular vector of `m` (unit norm).
pub fn dominant_left_singular(m: &CMatrix) -> CVector {
    let gram = m * m.adjoint();
    let eig = gram.symmetric_eigen();
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty matrix");
    let v = eig.eigenvectors.column(idx).into_owned();
    let n = v.norm();
    if n > 0.0 {
        v / C64::new(n, 0.0)
    } else {
        v
    }
}

pub fn from_parts(re: &[f64], im: &[f64]) -> CVector {
    CVector::from_iterator(
        re.len(),
        re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)),
    )
}

pub fn real_vec(values: &[f64]) -> CVector {
    CVector::from_iterator(values.len(), values.iter().map(|&v| C64::new(v, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_conjugates_left_argument() {
        let a = from_parts(&[0.0], &[1.0]);
        let b = real_vec(&[1.0]);
        // conj(i) * 1 = -i
        assert_eq!(inner(&a, &b), C64::new(0.0, -1.0));
    }

    #[test]
    fn eigenvalues_of_hermitian_are_sorted() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, -1.0),
                C64::new(0.0, 0.0),
            ],
        );
        let ev = hermitian_eigenvalues(&m);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] + 1.0).abs() < 1e-12);
    }
}
