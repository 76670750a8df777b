//! Test-set metrics: mean squared error, accuracy and the concordance index.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalData;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    Mse,
    Accuracy,
    CIndex,
}

impl MetricKind {
    /// True when larger values are better.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, MetricKind::Mse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
    /// Number of comparable ordered pairs (concordance index only).
    pub comparable_pairs: Option<u64>,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{a} observations vs {b} predictions")));
    }
    if a == 0 {
        return Err(Error::EmptyData("no observations to score".into()));
    }
    Ok(())
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<MetricValue> {
    check_lengths(y_true.len(), y_pred.len())?;
    let sum: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(MetricValue {
        kind: MetricKind::Mse,
        value: sum / y_true.len() as f64,
        comparable_pairs: None,
    })
}

pub fn accuracy(labels_true: &[i8], labels_pred: &[i8]) -> Result<MetricValue> {
    check_lengths(labels_true.len(), labels_pred.len())?;
    if let Some(&bad) = labels_true.iter().chain(labels_pred).find(|&&l| l != 1 && l != -1) {
        return Err(Error::InvalidLabel(f64::from(bad)));
    }
    let hits = labels_true.iter().zip(labels_pred).filter(|(a, b)| a == b).count();
    Ok(MetricValue {
        kind: MetricKind::Accuracy,
        value: hits as f64 / labels_true.len() as f64,
        comparable_pairs: None,
    })
}

/// How a comparable pair with tied prognostic indices is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieCredit {
    /// Ties earn nothing (strict inequality).
    #[default]
    Zero,
    /// Ties earn half a concordant pair.
    Half,
}

/// Harrell's concordance index over ordered pairs `i != j`.
///
/// A pair is comparable when the shorter observed time carries an event.
/// It is concordant when the member with the shorter time has the larger
/// prognostic index, so `h` must be oriented as a risk score (higher means
/// earlier failure). Equal times are never comparable.
pub fn c_index(data: &SurvivalData, h: &[f64]) -> Result<MetricValue> {
    c_index_with(data, h, TieCredit::Zero)
}

pub fn c_index_with(data: &SurvivalData, h: &[f64], ties: TieCredit) -> Result<MetricValue> {
    check_lengths(data.len(), h.len())?;
    let n = data.len();
    let (y, event) = (&data.time, &data.event);
    let mut comparable: u64 = 0;
    // Twice the concordant count, so half credit stays integral.
    let mut concordant2: u64 = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let comp = (y[i] < y[j] && event[i]) || (y[j] < y[i] && event[j]);
            if !comp {
                continue;
            }
            comparable += 1;
            let agreement = (h[j] - h[i]) * (y[i] - y[j]);
            if agreement > 0.0 {
                concordant2 += 2;
            } else if ties == TieCredit::Half && h[i] == h[j] {
                concordant2 += 1;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(MetricValue {
        kind: MetricKind::CIndex,
        value: concordant2 as f64 / (2 * comparable) as f64,
        comparable_pairs: Some(comparable),
    })
}
