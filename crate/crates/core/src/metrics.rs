//! Ranking metrics for binary link prediction.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TnaError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub auc: f64,
    pub ap: f64,
    pub threshold_precision: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_non_empty(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(TnaError::contract(format!(
            "metrics need positive and negative scores, got {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    Ok(())
}

/// Mann–Whitney estimate of the ROC area: the fraction of (positive,
/// negative) pairs ordered correctly, ties counting one half.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_non_empty(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sum of the (tie-averaged) 1-based ranks of the positives
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < all.len() {
        let mut end = k;
        while end < all.len() && all[end].0.total_cmp(&all[k].0) == Ordering::Equal {
            end += 1;
        }
        let positives = all[k..end].iter().filter(|e| e.1).count() as f64;
        rank_sum += positives * (k + 1 + end) as f64 / 2.0;
        k = end;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Average precision over the descending ranking. Equal scores keep input
/// order, positives before negatives.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_non_empty(pos, neg)?;
    let mut order: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &(_, is_pos)) in order.iter().enumerate() {
        if is_pos {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / pos.len() as f64)
}

/// `TP / (TP + FP)` with a pair predicted present when its probability
/// exceeds 0.5; zero when nothing is predicted.
pub fn threshold_precision(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_non_empty(pos, neg)?;
    let tp = pos.iter().filter(|&&s| s > 0.5).count();
    let fp = neg.iter().filter(|&&s| s > 0.5).count();
    Ok(if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
