use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub predicted: usize,
    pub ground_truth: usize,
    /// `100 · predicted / ground_truth`, rounded to one decimal.
    pub recall_percent: f64,
    pub absolute_error: usize,
}

impl EvalResult {
    pub fn line(&self) -> String {
        format!(
            "predicted {} / ground truth {}: recall {:.1}% (abs error {})",
            self.predicted, self.ground_truth, self.recall_percent, self.absolute_error
        )
    }
}

pub fn eval_counts(predicted: usize, ground_truth: usize) -> Result<EvalResult> {
    if ground_truth == 0 {
        return Err(Error::invalid("recall is undefined for a ground truth of 0"));
    }
    let recall = (1000.0 * predicted as f64 / ground_truth as f64).round() / 10.0;
    Ok(EvalResult {
        predicted,
        ground_truth,
        recall_percent: recall,
        absolute_error: predicted.abs_diff(ground_truth),
    })
}
