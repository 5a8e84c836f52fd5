use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg::{ensure_hermitian, CMatrix};

/// `[[Re M, −Im M], [Im M, Re M]]`, PSD exactly when `M` is.
pub fn hermitian_embed(m: &CMatrix) -> Result<DMatrix<f64>> {
    ensure_hermitian(m, 1e-10)?;
    let n = m.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i + n, j)] = z.im;
            out[(i, j + n)] = -z.im;
        }
    }
    Ok(out)
}
