use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row-wise Kronecker product: column `i * B.ncols() + j` is `A[:, i] ∘ B[:, j]`.
pub fn tensor_basis(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "tensor product of {} and {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let (p, q) = (a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(a.nrows(), p * q);
    for i in 0..p {
        for j in 0..q {
            let col = a.column(i).component_mul(&b.column(j));
            out.set_column(i * q + j, &col);
        }
    }
    Ok(out)
}

/// Column names matching [`tensor_basis`] order.
pub fn tensor_names(a: &[String], b: &[String]) -> Vec<String> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| format!("{x}*{y}")))
        .collect()
}
