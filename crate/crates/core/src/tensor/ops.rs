//! Non-differentiated numeric helpers shared by the tape and the analysis
//! code.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Lower clamp applied to both operands inside the KL logarithm.
pub const KL_EPS: f64 = 1e-10;

/// Row-wise softmax, stabilised by subtracting each row's maximum.
pub fn row_softmax(d: &DenseMatrix) -> DenseMatrix {
    let mut out = d.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// Row-wise log-softmax.
pub fn row_log_softmax(d: &DenseMatrix) -> DenseMatrix {
    let mut out = d.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
        row.iter_mut().for_each(|x| *x -= lse);
    }
    out
}

/// Softmax or log-softmax depending on `log_output`.
pub fn softmax_rows(d: &DenseMatrix, log_output: bool) -> DenseMatrix {
    if log_output {
        row_log_softmax(d)
    } else {
        row_softmax(d)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    row.iter_mut().for_each(|x| *x /= total);
}

/// `sum_c p_c ln(max(p_c, eps) / max(q_c, eps))`.
pub fn kl_row(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pc, &qc)| {
            if pc == 0.0 {
                0.0
            } else {
                pc * (pc.max(KL_EPS).ln() - qc.max(KL_EPS).ln())
            }
        })
        .sum()
}

/// Per-row KL divergence `KL(p[r] || q[r])`.
pub fn kl_divergence_rows(p: &DenseMatrix, q: &DenseMatrix) -> Result<Vec<f64>> {
    if p.shape() != q.shape() {
        return Err(Error::shape(
            "kl_divergence_rows",
            format!("{:?}", p.shape()),
            format!("{:?}", q.shape()),
        ));
    }
    Ok((0..p.rows()).map(|r| kl_row(p.row(r), q.row(r))).collect())
}

pub fn kl_divergence_mean(p: &DenseMatrix, q: &DenseMatrix) -> Result<f64> {
    let rows = kl_divergence_rows(p, q)?;
    if rows.is_empty() {
        return Err(Error::invalid("mean KL of an empty matrix"));
    }
    Ok(rows.iter().sum::<f64>() / rows.len() as f64)
}

/// Mean cross-entropy of `logits` against one label per row.
pub fn cross_entropy(logits: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != logits.rows() {
        return Err(Error::shape("cross_entropy", logits.rows(), labels.len()));
    }
    let logp = row_log_softmax(logits);
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= logits.cols() {
            return Err(Error::IndexOutOfRange {
                context: "cross_entropy label".into(),
                index: y,
                bound: logits.cols(),
            });
        }
        total -= logp.get(r, y);
    }
    Ok(total / labels.len() as f64)
}

/// Inverted-dropout multipliers: 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Dropout on a plain matrix.
pub fn dropout<R: Rng + ?Sized>(
    d: &DenseMatrix,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} must lie in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(d.clone());
    }
    let mask = dropout_mask(d.len(), rate, rng);
    let mut out = d.clone();
    out.data_mut().iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
    Ok(out)
}

/// `sum_c p_c ln p_c` (zero terms contribute nothing).
pub fn negative_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum()
}

/// Checks every row sums to one within `tol` and has no negative entries.
pub fn ensure_simplex_rows(d: &DenseMatrix, tol: f64, context: &str) -> Result<()> {
    for r in 0..d.rows() {
        let row = d.row(r);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > tol || row.iter().any(|&x| x < -tol || !x.is_finite()) {
            return Err(Error::invalid(format!(
                "{context}: row {r} is not a probability distribution (sum {sum})"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_symmetric_row() {
        let s = row_softmax(&DenseMatrix::from_rows(&[[0.0, 0.0]]));
        assert_eq!(s, DenseMatrix::from_rows(&[[0.5, 0.5]]));
    }

    #[test]
    fn softmax_large_logit_does_not_overflow() {
        let s = row_softmax(&DenseMatrix::from_rows(&[[1000.0, 0.0]]));
        assert!(s.is_finite());
        assert!((s.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(s.get(0, 1) < 1e-300);
        let ls = row_log_softmax(&DenseMatrix::from_rows(&[[1000.0, 0.0]]));
        assert!((ls.get(0, 1) + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_of_one_two_three() {
        // Reference from an mpmath evaluation at 50 digits.
        let expected = [
            0.090030573170380458,
            0.24472847105479765,
            0.66524095577482189,
        ];
        let s = row_softmax(&DenseMatrix::from_rows(&[[1.0, 2.0, 3.0]]));
        for (a, b) in s.row(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-9);
        }
        let ls = softmax_rows(&DenseMatrix::from_rows(&[[1.0, 2.0, 3.0]]), true);
        for (a, b) in ls.row(0).iter().zip(expected) {
            assert!((a - b.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_reference_values() {
        assert_eq!(kl_row(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert!((kl_row(&[1.0, 0.0], &[0.5, 0.5]) - std::f64::consts::LN_2).abs() < 1e-12);
        // 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1)
        assert!((kl_row(&[0.5, 0.5], &[0.9, 0.1]) - 0.5108256237659907).abs() < 1e-12);
    }

    #[test]
    fn kl_with_zero_student_probability_is_finite() {
        let v = kl_row(&[0.5, 0.5], &[1.0, 0.0]);
        assert!(v.is_finite());
        assert!(v > 10.0);
    }

    #[test]
    fn kl_shape_mismatch() {
        assert!(kl_divergence_rows(&DenseMatrix::zeros(1, 2), &DenseMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_c() {
        let ce = cross_entropy(&DenseMatrix::zeros(3, 4), &[0, 1, 3]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&DenseMatrix::zeros(1, 4), &[4]).is_err());
    }

    #[test]
    fn confident_correct_logits_have_vanishing_loss() {
        let ce = cross_entropy(&DenseMatrix::from_rows(&[[60.0, 0.0]]), &[0]).unwrap();
        assert!(ce < 1e-20);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = DenseMatrix::from_fn(4, 4, |r, c| (r + c) as f64);
        assert_eq!(dropout(&d, 0.0, true, &mut rng).unwrap(), d);
        assert_eq!(dropout(&d, 0.7, false, &mut rng).unwrap(), d);
        assert!(dropout(&d, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_zero_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = DenseMatrix::filled(1000, 1000, 1.0);
        let out = dropout(&d, 0.5, true, &mut rng).unwrap();
        let zeros = out.data().iter().filter(|&&x| x == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.5).abs() < 0.005, "{zeros}");
        assert!(out.data().iter().all(|&x| x == 0.0 || x == 2.0));
    }

    #[test]
    fn negative_entropy_cases() {
        assert_eq!(negative_entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert!((negative_entropy(&[0.25; 4]) + 4f64.ln()).abs() < 1e-12);
        assert!((negative_entropy(&[0.9, 0.1]) + 0.3250829733914482).abs() < 1e-12);
    }
}
