//! Co-label covariance: how predicted class probabilities move together.
//!
//! For an `N x K` matrix of predictions the sample covariance between class
//! columns is computed, the diagonal is zeroed, and the off-diagonal entries
//! are min-max scaled to `[0, 1]`. Semantically close classes keep high
//! co-label covariance in well regularized models; the structure fades as a
//! model over-fits.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Matrix;

/// Scaled co-label covariance for `k` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct CoLabelMatrix {
    k: usize,
    values: Matrix,
    raw: Matrix,
    degenerate: bool,
}

impl CoLabelMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Scaled values, zero diagonal.
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// Unscaled sample covariance with the diagonal zeroed.
    pub fn raw(&self) -> &Matrix {
        &self.raw
    }

    /// True when every off-diagonal covariance was equal, so no scaling
    /// was possible and all values are zero.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values.get(a, b)
    }

    /// Off-diagonal pair holding the largest scaled value; the first in
    /// row-major order wins ties, so `a < b`.
    pub fn argmax_pair(&self) -> Option<(usize, usize)> {
        extreme_pair(&self.values, |v, best| v > best)
    }

    /// Writes a header of class names followed by the `K x K` grid.
    pub fn write_csv(&self, path: &Path, class_names: &[String]) -> Result<()> {
        if class_names.len() != self.k {
            return Err(Error::contract(format!(
                "{} class names for {} classes",
                class_names.len(),
                self.k
            )));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(class_names)?;
        for row in self.values.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Writes one `class_a,class_b,value` line per ordered off-diagonal pair.
    pub fn write_long_csv(&self, path: &Path, class_names: &[String]) -> Result<()> {
        if class_names.len() != self.k {
            return Err(Error::contract(format!(
                "{} class names for {} classes",
                class_names.len(),
                self.k
            )));
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["class_a", "class_b", "value"])?;
        for a in 0..self.k {
            for b in 0..self.k {
                if a != b {
                    w.write_record([
                        class_names[a].as_str(),
                        class_names[b].as_str(),
                        &self.values.get(a, b).to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn extreme_pair(m: &Matrix, better: impl Fn(f64, f64) -> bool) -> Option<(usize, usize)> {
    let k = m.rows();
    let mut best: Option<(usize, usize)> = None;
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let v = m.get(a, b);
            match best {
                Some((i, j)) if !better(v, m.get(i, j)) => {}
                _ => best = Some((a, b)),
            }
        }
    }
    best
}

/// Sample covariance (denominator `N - 1`) between the columns of `m`.
pub fn column_covariance(m: &Matrix) -> Result<Matrix> {
    let (n, k) = m.shape();
    if n < 2 {
        return Err(Error::contract(format!(
            "covariance needs at least 2 rows, got {n}"
        )));
    }
    let mut means = vec![0.0; k];
    for row in m.row_iter() {
        for (mu, v) in means.iter_mut().zip(row) {
            *mu += v;
        }
    }
    for mu in &mut means {
        *mu /= n as f64;
    }
    let mut centered = m.clone();
    for j in 0..n {
        for (v, mu) in centered.row_mut(j).iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    let mut cov = centered.t_matmul(&centered)?;
    for v in cov.as_mut_slice() {
        *v /= (n - 1) as f64;
    }
    // the product is symmetric up to rounding; mirror the upper triangle
    for a in 0..k {
        for b in (a + 1)..k {
            let v = cov.get(a, b);
            cov.set(b, a, v);
        }
    }
    Ok(cov)
}

/// Co-label covariance of `N x K` predictions (`N >= 2`).
///
/// The min and max used for scaling are taken over off-diagonal entries
/// only, after zeroing the diagonal.
pub fn colabel_covariance(predictions: &Matrix) -> Result<CoLabelMatrix> {
    let k = predictions.cols();
    let mut raw = column_covariance(predictions)?;
    for i in 0..k {
        raw.set(i, i, 0.0);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in 0..k {
        for b in 0..k {
            if a != b {
                lo = lo.min(raw.get(a, b));
                hi = hi.max(raw.get(a, b));
            }
        }
    }
    let degenerate = hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater);
    let mut values = Matrix::zeros(k, k);
    if !degenerate {
        let range = hi - lo;
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    values.set(a, b, (raw.get(a, b) - lo) / range);
                }
            }
        }
    }
    Ok(CoLabelMatrix {
        k,
        values,
        raw,
        degenerate,
    })
}

/// Replaces each row by the one-hot of its argmax.
pub fn binarize(predictions: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(predictions.rows(), predictions.cols());
    for (i, j) in predictions.argmax_rows().into_iter().enumerate() {
        if predictions.cols() > 0 {
            out.set(i, j, 1.0);
        }
    }
    out
}

/// One co-label matrix per network, from inference-mode predictions on `x`.
pub fn covariance_trajectory(checkpoints: &[Network], x: &Matrix) -> Result<Vec<CoLabelMatrix>> {
    checkpoints
        .iter()
        .map(|net| colabel_covariance(&net.predict(x)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn needs_two_rows() {
        assert!(colabel_covariance(&Matrix::filled(1, 3, 1.0 / 3.0)).is_err());
    }

    #[test]
    fn constant_predictions_are_degenerate() {
        let c = colabel_covariance(&Matrix::filled(5, 3, 1.0 / 3.0)).unwrap();
        assert!(c.is_degenerate());
        assert!(c.values().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn anti_correlated_pair_and_endpoints() {
        // columns 0 and 1 trade mass; column 2 is constant
        let p = Matrix::from_rows(&[
            [0.7, 0.1, 0.2],
            [0.1, 0.7, 0.2],
            [0.5, 0.3, 0.2],
            [0.2, 0.6, 0.2],
        ])
        .unwrap();
        let c = colabel_covariance(&p).unwrap();
        assert!(c.raw().get(0, 1) < 0.0);
        // the pair with the least co-movement is the minimum
        assert_eq!(c.get(0, 1), 0.0);
        assert_eq!(c.get(1, 0), 0.0);
        // the constant column has zero covariance, the maximum here
        assert_eq!(c.get(0, 2), 1.0);
        for i in 0..3 {
            assert_eq!(c.get(i, i), 0.0);
        }
    }

    #[test]
    fn argmax_pair_breaks_ties_row_major() {
        let p = Matrix::from_rows(&[[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]).unwrap();
        let c = colabel_covariance(&p).unwrap();
        // all off-diagonal entries equal
        assert!(c.is_degenerate());
        assert_eq!(c.argmax_pair(), Some((0, 1)));
    }

    #[test]
    fn binarize_takes_argmax() {
        let p = Matrix::from_rows(&[[0.2, 0.5, 0.3], [0.6, 0.2, 0.2]]).unwrap();
        assert_eq!(
            binarize(&p),
            Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).unwrap()
        );
    }

    fn predictions(n: usize, k: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(0.01f64..1.0, n * k).prop_map(move |raw| {
            let mut m = Matrix::from_vec(n, k, raw).unwrap();
            for i in 0..n {
                let s: f64 = m.row(i).iter().sum();
                for v in m.row_mut(i) {
                    *v /= s;
                }
            }
            m
        })
    }

    proptest! {
        #[test]
        fn scaled_range_symmetry_and_permutation_invariance(
            p in predictions(12, 4),
            seed in any::<u64>(),
        ) {
            let c = colabel_covariance(&p).unwrap();
            let v = c.values();
            for a in 0..4 {
                prop_assert_eq!(v.get(a, a), 0.0);
                for b in 0..4 {
                    prop_assert_eq!(v.get(a, b), v.get(b, a));
                    prop_assert!((0.0..=1.0).contains(&v.get(a, b)));
                }
            }
            if !c.is_degenerate() {
                let offdiag: Vec<f64> = (0..4)
                    .flat_map(|a| (0..4).filter(move |&b| b != a).map(move |b| (a, b)))
                    .map(|(a, b)| v.get(a, b))
                    .collect();
                prop_assert!(offdiag.contains(&1.0));
                prop_assert!(offdiag.contains(&0.0));
            }
            let perm = crate::tensor::Rng::new(seed).permutation(12);
            let q = colabel_covariance(&p.select_rows(&perm)).unwrap();
            for (x, y) in c.values().as_slice().iter().zip(q.values().as_slice()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn scaling_keeps_the_top_raw_pair(p in predictions(10, 5)) {
            let c = colabel_covariance(&p).unwrap();
            prop_assume!(!c.is_degenerate());
            let raw_top = extreme_pair(c.raw(), |v, best| v > best).unwrap();
            let (a, b) = c.argmax_pair().unwrap();
            prop_assert_eq!(c.get(a, b), 1.0);
            prop_assert_eq!(c.raw().get(a, b), c.raw().get(raw_top.0, raw_top.1));
        }
    }
}
