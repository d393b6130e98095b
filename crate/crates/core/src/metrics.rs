//! Accuracy and Matthews correlation over binary confusion matrices
//! (GenAI = positive).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Swaps the roles of the two classes.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    pub fn accuracy(&self) -> f64 {
        accuracy(self)
    }

    pub fn mcc(&self) -> f64 {
        mcc(self)
    }
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::Length(labels.len(), predictions.len()));
    }
    if labels.is_empty() {
        return Err(Error::Empty);
    }
    let mut c = ConfusionMatrix::default();
    for (i, (&y, &p)) in labels.iter().zip(predictions).enumerate() {
        match (y, p) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fp += 1,
            (1, 0) => c.fn_ += 1,
            _ => {
                return Err(Error::InvalidFeature(format!(
                    "non-binary label/prediction at index {i}: ({y}, {p})"
                )))
            }
        }
    }
    Ok(c)
}

pub fn accuracy(c: &ConfusionMatrix) -> f64 {
    (c.tp + c.tn) as f64 / c.total() as f64
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionMatrix) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return 0.0;
    }
    // Square roots taken pairwise keep the product well inside f64 range.
    let denom = (factors[0] * factors[1]).sqrt() * (factors[2] * factors[3]).sqrt();
    ((tp * tn - fp * fn_) / denom).clamp(-1.0, 1.0)
}
