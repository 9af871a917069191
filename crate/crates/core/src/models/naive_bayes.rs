use serde::{Deserialize, Serialize};

use super::{BuiltIn, Design};
use crate::dataset::{Dataset, State, VarId, Variable};
use crate::error::{Error, Result};

/// Categorical naive Bayes with additive smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    features: Vec<Variable>,
    target: Variable,
    log_prior: Vec<f64>,
    /// `log_cond[f][class][state]`
    log_cond: Vec<Vec<Vec<f64>>>,
}

fn log_ratio(count: f64, total: f64) -> f64 {
    if count > 0.0 && total > 0.0 {
        (count / total).ln()
    } else {
        f64::NEG_INFINITY
    }
}

impl NaiveBayes {
    pub fn train(data: &Dataset, target: VarId, smoothing: f64) -> Result<Self> {
        if !(smoothing >= 0.0) {
            return Err(Error::Config(format!(
                "smoothing must be >= 0, got {smoothing}"
            )));
        }
        let design = Design::from_dataset(data, target)?;
        let c = design.n_classes();
        let n = design.n_rows() as f64;
        let mut class_counts = vec![0.0; c];
        for &y in &design.y {
            class_counts[y as usize] += 1.0;
        }
        let log_prior = class_counts
            .iter()
            .map(|&k| log_ratio(k + smoothing, n + smoothing * c as f64))
            .collect();
        let mut log_cond = Vec::with_capacity(design.n_features());
        for (f, var) in design.features.iter().enumerate() {
            let card = var.cardinality();
            let mut counts = vec![vec![0.0; card]; c];
            for r in 0..design.n_rows() {
                counts[design.y[r] as usize][design.row(r)[f] as usize] += 1.0;
            }
            let table = counts
                .iter()
                .zip(&class_counts)
                .map(|(row, &total)| {
                    row.iter()
                        .map(|&k| log_ratio(k + smoothing, total + smoothing * card as f64))
                        .collect()
                })
                .collect();
            log_cond.push(table);
        }
        Ok(NaiveBayes {
            features: design.features,
            target: design.target,
            log_prior,
            log_cond,
        })
    }

    /// Unnormalized log posterior of each class.
    pub fn log_scores(&self, row: &[State]) -> Vec<f64> {
        let mut scores = self.log_prior.clone();
        for (f, &s) in row.iter().enumerate() {
            for (k, score) in scores.iter_mut().enumerate() {
                *score += self.log_cond[f][k][s as usize];
            }
        }
        scores
    }
}

impl BuiltIn for NaiveBayes {
    fn features(&self) -> &[Variable] {
        &self.features
    }

    fn target(&self) -> &Variable {
        &self.target
    }

    fn predict_row(&self, row: &[State]) -> State {
        let scores = self.log_scores(row);
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        best as State
    }
}
