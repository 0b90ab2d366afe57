//! Rank and linear correlation, RMSE, and the five-parameter logistic
//! remapping applied to predictions before PLCC and RMSE.

mod logistic;
mod report;

use thiserror::Error;

pub use logistic::{fit_logistic5, Logistic5Params, MAX_FIT_ITERATIONS};
pub use report::{evaluate, report_from_predictions, EvalReport, GroupMetrics, ImagePrediction, MIN_FIT_POINTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {preds} predictions vs {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("need at least {min} points, got {n}")]
    TooFew { n: usize, min: usize },
    #[error("metric undefined: {0}")]
    Degenerate(&'static str),
    #[error("non-finite input")]
    NonFinite,
    #[error("logistic fit failed from every start")]
    FitFailed,
}

fn check_pair(preds: &[f64], labels: &[f64], min: usize) -> Result<(), MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.len() < min {
        return Err(MetricsError::TooFew { n: preds.len(), min });
    }
    if preds.iter().chain(labels).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation; undefined when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    check_pair(a, b, 2)?;
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 {
        return Err(MetricsError::Degenerate("predictions are constant"));
    }
    if sbb == 0.0 {
        return Err(MetricsError::Degenerate("labels are constant"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn srcc(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_pair(preds, labels, 2)?;
    pearson(&average_ranks(preds), &average_ranks(labels))
}

/// Root mean squared difference, without remapping.
pub fn raw_rmse(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_pair(preds, labels, 1)?;
    Ok((preds.iter().zip(labels).map(|(p, l)| (p - l).powi(2)).sum::<f64>() / preds.len() as f64).sqrt())
}

/// PLCC between logistic-remapped predictions and labels.
pub fn plcc(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    let fit = fit_logistic5(preds, labels)?;
    pearson(&fit.apply_all(preds), labels)
}

/// RMSE between logistic-remapped predictions and labels.
pub fn rmse(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    let fit = fit_logistic5(preds, labels)?;
    raw_rmse(&fit.apply_all(preds), labels)
}
