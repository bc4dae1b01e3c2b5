use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Floor applied to probabilities inside the logarithm.
pub const LOG_CLIP: f64 = 1e-12;

/// Mean categorical cross-entropy against (possibly soft) targets.
///
/// Returns the loss and its gradient with respect to the logits of a final
/// softmax, `(probs - targets) / N`.
pub fn cross_entropy(probs: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    let loss = cross_entropy_loss(probs, targets)?;
    let n = probs.rows().max(1) as f64;
    let grad = probs.zip_map(targets, |p, t| (p - t) / n)?;
    Ok((loss, grad))
}

/// The loss half of [`cross_entropy`].
pub fn cross_entropy_loss(probs: &Matrix, targets: &Matrix) -> Result<f64> {
    if probs.shape() != targets.shape() {
        return Err(Error::shape(
            "cross_entropy",
            probs.shape(),
            targets.shape(),
        ));
    }
    if probs.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = probs
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.max(LOG_CLIP).ln())
        .sum();
    Ok(-total / probs.rows() as f64)
}

/// Fraction of rows whose argmax matches the argmax of `targets`.
pub fn accuracy(probs: &Matrix, targets: &Matrix) -> Result<f64> {
    if probs.shape() != targets.shape() {
        return Err(Error::shape("accuracy", probs.shape(), targets.shape()));
    }
    if probs.rows() == 0 {
        return Ok(0.0);
    }
    let hits = probs
        .argmax_rows()
        .into_iter()
        .zip(targets.argmax_rows())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / probs.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_free() {
        let y = Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let (loss, grad) = cross_entropy(&y, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn uniform_over_ten() {
        let probs = Matrix::filled(1, 10, 0.1);
        let mut y = Matrix::zeros(1, 10);
        y.set(0, 3, 1.0);
        let loss = cross_entropy_loss(&probs, &y).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn soft_target_against_uniform() {
        let probs = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let t = Matrix::from_rows(&[[0.85, 0.15]]).unwrap();
        let loss = cross_entropy_loss(&probs, &t).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_clipped() {
        let probs = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let t = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let loss = cross_entropy_loss(&probs, &t).unwrap();
        assert!((loss + LOG_CLIP.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_averaged() {
        let probs = Matrix::from_rows(&[[0.2, 0.8], [0.6, 0.4]]).unwrap();
        let t = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (_, g) = cross_entropy(&probs, &t).unwrap();
        let expect = [-0.4, 0.4, 0.3, -0.3];
        for (a, b) in g.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            cross_entropy(&Matrix::zeros(2, 3), &Matrix::zeros(3, 2)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let probs = Matrix::from_rows(&[[0.2, 0.8], [0.6, 0.4], [0.1, 0.9]]).unwrap();
        let t = Matrix::from_rows(&[[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!((accuracy(&probs, &t).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }
}
