//! Losses with their gradients with respect to the network output.

use super::matrix::Matrix;
use crate::error::{GclError, Result};

/// Guard inside the square root of the row norm, so the gradient at a zero
/// residual is zero instead of undefined.
pub const NORM_EPS: f64 = 1e-12;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the log.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Matrix,
}

/// Per-row residual norm `‖target − pred‖₂` (or its square).
pub fn row_norms(pred: &Matrix, target: &Matrix, squared: bool) -> Result<Vec<f64>> {
    check_same(pred, target, "row_norms")?;
    Ok(pred
        .row_iter()
        .zip(target.row_iter())
        .map(|(p, t)| {
            let sq: f64 = p.iter().zip(t).map(|(a, b)| (b - a) * (b - a)).sum();
            if squared {
                sq
            } else {
                sq.sqrt()
            }
        })
        .collect())
}

/// Mean over included rows of `‖target − pred‖₂`.
///
/// Rows with `include[i] == false` contribute neither loss nor gradient, and
/// the mean divides by the included count. Returns `None` when no row is
/// included.
pub fn mean_row_norm(
    pred: &Matrix,
    target: &Matrix,
    include: Option<&[bool]>,
    squared: bool,
) -> Result<Option<LossOutput>> {
    check_same(pred, target, "mean_row_norm")?;
    if let Some(mask) = include {
        if mask.len() != pred.rows() {
            return Err(GclError::shape("mean_row_norm mask", pred.rows(), mask.len()));
        }
    }
    let included = |i: usize| include.is_none_or(|m| m[i]);
    let count = (0..pred.rows()).filter(|&i| included(i)).count();
    if count == 0 {
        return Ok(None);
    }
    let scale = 1.0 / count as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for i in 0..pred.rows() {
        if !included(i) {
            continue;
        }
        let (p, t) = (pred.row(i), target.row(i));
        let sq: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let g_row = grad.row_mut(i);
        if squared {
            loss += sq;
            for ((g, a), b) in g_row.iter_mut().zip(p).zip(t) {
                *g = 2.0 * (a - b) * scale;
            }
        } else {
            let norm = (sq + NORM_EPS).sqrt();
            loss += sq.sqrt();
            for ((g, a), b) in g_row.iter_mut().zip(p).zip(t) {
                *g = (a - b) / norm * scale;
            }
        }
    }
    Ok(Some(LossOutput {
        loss: loss * scale,
        grad,
    }))
}

/// Binary cross-entropy between single-column probabilities and targets in
/// `[0, 1]`, averaged over the batch.
pub fn binary_cross_entropy(prob: &Matrix, targets: &[f64]) -> Result<LossOutput> {
    if prob.cols() != 1 {
        return Err(GclError::shape("binary_cross_entropy output columns", 1, prob.cols()));
    }
    if targets.len() != prob.rows() {
        return Err(GclError::shape("binary_cross_entropy targets", prob.rows(), targets.len()));
    }
    if prob.rows() == 0 {
        return Err(GclError::EmptyDataset);
    }
    let scale = 1.0 / prob.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(targets.len());
    for (&p, &y) in prob.as_slice().iter().zip(targets) {
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push((p - y) / (p * (1.0 - p)) * scale);
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(GclError::NonFinite("discriminator loss".into()));
    }
    Ok(LossOutput {
        loss,
        grad: Matrix::from_vec(prob.rows(), 1, grad)?,
    })
}

/// Binary cross-entropy of sigmoid outputs, with the gradient taken with
/// respect to the sigmoid's input: `(p − y) / b`. Same loss as
/// [`binary_cross_entropy`], but the gradient stays exact when the sigmoid
/// saturates, where `(p − y) / (p(1 − p)) · p(1 − p)` underflows to zero.
pub fn sigmoid_cross_entropy(prob: &Matrix, targets: &[f64]) -> Result<LossOutput> {
    let bce = binary_cross_entropy(prob, targets)?;
    let scale = 1.0 / prob.rows() as f64;
    let grad = prob
        .as_slice()
        .iter()
        .zip(targets)
        .map(|(&p, &y)| (p - y) * scale)
        .collect();
    Ok(LossOutput {
        loss: bce.loss,
        grad: Matrix::from_vec(prob.rows(), 1, grad)?,
    })
}

/// `½ Σ ‖pred − target‖²`, summed (not averaged) over the batch.
pub fn half_squared_error(pred: &Matrix, target: &Matrix) -> Result<LossOutput> {
    let grad = pred.sub(target)?;
    let loss = 0.5 * grad.as_slice().iter().map(|v| v * v).sum::<f64>();
    Ok(LossOutput { loss, grad })
}

fn check_same(a: &Matrix, b: &Matrix, context: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(GclError::shape(
            context,
            format!("{}x{}", a.rows(), a.cols()),
            format!("{}x{}", b.rows(), b.cols()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_norm_of_3_4_residual_is_5() {
        let pred = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let target = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let out = mean_row_norm(&pred, &target, None, false).unwrap().unwrap();
        assert!((out.loss - 5.0).abs() < 1e-12);
        assert_eq!(row_norms(&pred, &target, false).unwrap(), vec![5.0]);
    }

    #[test]
    fn exact_reconstruction_has_zero_gradient() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        let out = mean_row_norm(&x, &x, None, false).unwrap().unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn masked_rows_are_excluded_from_mean() {
        let pred = Matrix::zeros(2, 2);
        let target = Matrix::from_rows(&[[3.0, 4.0], [6.0, 8.0]]).unwrap();
        let out = mean_row_norm(&pred, &target, Some(&[false, true]), false)
            .unwrap()
            .unwrap();
        assert!((out.loss - 10.0).abs() < 1e-12);
        assert!(out.grad.row(0).iter().all(|&g| g == 0.0));
        assert!(mean_row_norm(&pred, &target, Some(&[false, false]), false)
            .unwrap()
            .is_none());
    }

    #[test]
    fn bce_of_half_with_label_one_is_ln2() {
        let p = Matrix::from_vec(1, 1, vec![0.5]).unwrap();
        let out = binary_cross_entropy(&p, &[1.0]).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_matching_labels_is_near_zero() {
        let p = Matrix::from_vec(3, 1, vec![1.0, 0.0, 1.0]).unwrap();
        let out = binary_cross_entropy(&p, &[1.0, 0.0, 1.0]).unwrap();
        assert!(out.loss < 1e-9);
    }
}
