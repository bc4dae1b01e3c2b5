//! Dense matrices, numerically stable softmax, and seeded randomness.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::Rng;

use crate::error::{Error, Result};

/// Row-wise softmax with max subtraction.
pub fn row_softmax(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(m: &mut Matrix) {
    let cols = m.cols();
    if cols == 0 {
        return;
    }
    for row in m.as_mut_slice().chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Applies one random permutation to the rows of both matrices.
///
/// The training loop shuffles index views instead (see
/// [`Rng::permutation`]); this is the materializing variant.
pub fn shuffle_rows(m: &Matrix, paired: &Matrix, rng: &mut Rng) -> Result<(Matrix, Matrix)> {
    if m.rows() != paired.rows() {
        return Err(Error::shape("shuffle_rows", m.shape(), paired.shape()));
    }
    let perm = rng.permutation(m.rows());
    Ok((m.select_rows(&perm), paired.select_rows(&perm)))
}
