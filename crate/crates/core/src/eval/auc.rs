//! ROC-AUC as the normalized Mann-Whitney U statistic.
//!
//! Tied scores share the average of their ranks, which credits every tied
//! positive/negative pair with one half.

use serde::{Deserialize, Serialize};

use crate::error::{GclError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAuc {
    pub video_id: String,
    /// `None` when the video has only one class.
    pub auc: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_video: Option<Vec<VideoAuc>>,
}

/// AUC of `scores` against binary `labels` (`true` = anomalous), in
/// `O(n log n)`.
pub fn compute_auc(scores: &[f64], labels: &[bool]) -> Result<AucReport> {
    if scores.len() != labels.len() {
        return Err(GclError::shape("compute_auc labels", scores.len(), labels.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(GclError::NonFinite(format!("score {i}")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(GclError::AucUndefined { positives, negatives });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum of positives keeps tie-averaged ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, average (start + 1 + end) / 2
        let twice_avg = (start + 1 + end) as u128;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += twice_avg * pos_in_group;
        start = end;
    }
    let p = positives as u128;
    // 2U = 2R − P(P + 1)
    let twice_u = twice_rank_sum - p * (p + 1);
    let auc = twice_u as f64 / (2.0 * positives as f64 * negatives as f64);
    Ok(AucReport {
        auc,
        positives,
        negatives,
        per_video: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let r = compute_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!((r.positives, r.negatives), (2, 2));
    }

    #[test]
    fn all_tied_is_half() {
        let r = compute_auc(&[0.3; 6], &[true, false, true, false, false, false]).unwrap();
        assert_eq!(r.auc, 0.5);
    }

    #[test]
    fn hand_case_with_tie() {
        let r = compute_auc(&[0.4, 0.6, 0.6, 0.9], &[false, true, false, true]).unwrap();
        assert_eq!(r.auc, 0.875);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(
            compute_auc(&[0.1, 0.2], &[false, false]),
            Err(GclError::AucUndefined {
                positives: 0,
                negatives: 2
            })
        ));
        assert!(compute_auc(&[0.1], &[true, false]).is_err());
        assert!(compute_auc(&[f64::NAN, 0.2], &[true, false]).is_err());
    }
}
