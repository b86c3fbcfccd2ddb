//! Negative-learning targets and single optimization steps for each network.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::NlMode;
use super::labels::PseudoLabelSet;
use crate::error::{GclError, Result};
use crate::nn::{loss, Activation, Matrix, Network, RmspropState};

/// Generator reconstruction targets for one batch.
///
/// `include` is `Some` only in [`NlMode::None`], where pseudo-anomalous rows
/// drop out of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct NlTargetBatch {
    pub targets: Matrix,
    pub include: Option<Vec<bool>>,
}

/// Builds reconstruction targets: pseudo-normal rows keep their input,
/// pseudo-anomalous rows get the mode's pseudo target.
///
/// [`NlMode::RandomNormal`] falls back to the all-ones target when the batch
/// has no pseudo-normal row to borrow.
pub fn make_nl_targets<R: Rng + ?Sized>(
    input: &Matrix,
    labels: &[bool],
    mode: NlMode,
    gaussian_sigma: f64,
    rng: &mut R,
) -> Result<NlTargetBatch> {
    if labels.len() != input.rows() {
        return Err(GclError::shape("make_nl_targets labels", input.rows(), labels.len()));
    }
    let mut targets = input.clone();
    let normal_rows: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let mut include = None;
    match mode {
        NlMode::Ones => fill_ones(&mut targets, labels),
        NlMode::RandomNormal if normal_rows.is_empty() => fill_ones(&mut targets, labels),
        NlMode::RandomNormal => {
            for (i, _) in labels.iter().enumerate().filter(|(_, &l)| l) {
                let donor = normal_rows[rng.random_range(0..normal_rows.len())];
                targets.row_mut(i).copy_from_slice(input.row(donor));
            }
        }
        NlMode::Gaussian => {
            let noise = Normal::new(0.0, gaussian_sigma)
                .map_err(|e| GclError::Config(format!("gaussian sigma: {e}")))?;
            for (i, _) in labels.iter().enumerate().filter(|(_, &l)| l) {
                for v in targets.row_mut(i) {
                    *v += noise.sample(rng);
                }
            }
        }
        NlMode::None => include = Some(labels.iter().map(|&l| !l).collect()),
    }
    Ok(NlTargetBatch { targets, include })
}

fn fill_ones(targets: &mut Matrix, labels: &[bool]) {
    for (i, _) in labels.iter().enumerate().filter(|(_, &l)| l) {
        targets.row_mut(i).fill(1.0);
    }
}

/// One RMSprop step of binary cross-entropy toward `targets`. Returns the
/// loss before the update.
pub fn train_discriminator_step(
    disc: &mut Network,
    opt: &mut RmspropState,
    input: &Matrix,
    targets: &[f64],
) -> Result<f64> {
    let prob = disc.forward(input)?;
    let sigmoid_out = disc.layers().last().is_some_and(|l| l.activation == Activation::Sigmoid);
    let (out, grads) = if sigmoid_out {
        let out = loss::sigmoid_cross_entropy(&prob, targets)?;
        let grads = disc.backward_from_logits(&out.grad)?;
        (out, grads)
    } else {
        let out = loss::binary_cross_entropy(&prob, targets)?;
        let grads = disc.backward(&out.grad)?;
        (out, grads)
    };
    opt.step_network(disc, &grads)?;
    Ok(out.loss)
}

pub fn train_discriminator_on_labels(
    disc: &mut Network,
    opt: &mut RmspropState,
    input: &Matrix,
    labels: &PseudoLabelSet,
) -> Result<f64> {
    if labels.len() != input.rows() {
        return Err(GclError::shape("discriminator labels", input.rows(), labels.len()));
    }
    train_discriminator_step(disc, opt, input, &labels.targets())
}

/// One RMSprop step of the mean row-norm loss between reconstruction and
/// target. Returns `None`, without touching the network, when every row is
/// excluded.
pub fn train_generator_step(
    gen: &mut Network,
    opt: &mut RmspropState,
    input: &Matrix,
    targets: &NlTargetBatch,
    squared: bool,
) -> Result<Option<f64>> {
    if targets.targets.shape() != input.shape() {
        return Err(GclError::shape(
            "generator targets",
            format!("{}x{}", input.rows(), input.cols()),
            format!("{}x{}", targets.targets.rows(), targets.targets.cols()),
        ));
    }
    if targets.include.as_ref().is_some_and(|m| !m.iter().any(|&k| k)) {
        return Ok(None);
    }
    let recon = gen.forward(input)?;
    let out = loss::mean_row_norm(&recon, &targets.targets, targets.include.as_deref(), squared)?
        .expect("at least one row included");
    if !out.loss.is_finite() {
        return Err(GclError::NonFinite("generator loss".into()));
    }
    let grads = gen.backward(&out.grad)?;
    opt.step_network(gen, &grads)?;
    Ok(Some(out.loss))
}
