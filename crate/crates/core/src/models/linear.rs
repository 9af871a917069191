use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BuiltIn, Design};
use crate::dataset::{Dataset, State, VarId, Variable};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    /// L2 penalty on the non-bias weights.
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Seeds the small random weight initialization.
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            l2: 1e-3,
            epochs: 300,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression over one-hot encoded features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    features: Vec<Variable>,
    target: Variable,
    /// Column offset of each feature inside the one-hot vector.
    offsets: Vec<usize>,
    /// `classes × (dim + 1)`, bias last.
    weights: Vec<f64>,
}

/// Active one-hot indices of a row.
fn active(offsets: &[usize], row: &[State]) -> Vec<usize> {
    offsets
        .iter()
        .zip(row)
        .map(|(o, &s)| o + s as usize)
        .collect()
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

fn scores(weights: &[f64], classes: usize, dim: usize, idx: &[usize]) -> Vec<f64> {
    let stride = dim + 1;
    (0..classes)
        .map(|c| {
            let w = &weights[c * stride..(c + 1) * stride];
            w[dim] + idx.iter().map(|&j| w[j]).sum::<f64>()
        })
        .collect()
}

/// Mean cross-entropy plus `l2/2·‖W‖²` (bias excluded), and its gradient.
///
/// `rows` holds the active one-hot indices for each example.
pub(crate) fn loss_and_gradient(
    weights: &[f64],
    rows: &[Vec<usize>],
    y: &[State],
    classes: usize,
    dim: usize,
    l2: f64,
) -> (f64, Vec<f64>) {
    let stride = dim + 1;
    let n = rows.len() as f64;
    let mut grad = vec![0.0; weights.len()];
    let mut loss = 0.0;
    for (idx, &yi) in rows.iter().zip(y) {
        let mut p = scores(weights, classes, dim, idx);
        softmax_in_place(&mut p);
        loss -= p[yi as usize].max(f64::MIN_POSITIVE).ln();
        for c in 0..classes {
            let r = p[c] - if c == yi as usize { 1.0 } else { 0.0 };
            let g = &mut grad[c * stride..(c + 1) * stride];
            g[dim] += r;
            for &j in idx {
                g[j] += r;
            }
        }
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    for c in 0..classes {
        for j in 0..dim {
            let w = weights[c * stride + j];
            loss += 0.5 * l2 * w * w;
            grad[c * stride + j] += l2 * w;
        }
    }
    (loss, grad)
}

impl LinearModel {
    pub fn train(data: &Dataset, target: VarId, cfg: &LinearConfig) -> Result<Self> {
        if !(cfg.l2 >= 0.0) || !(cfg.learning_rate > 0.0) {
            return Err(Error::Config(
                "linear model needs l2 >= 0 and a positive learning rate".into(),
            ));
        }
        let design = Design::from_dataset(data, target)?;
        let mut offsets = Vec::with_capacity(design.n_features());
        let mut dim = 0;
        for f in &design.features {
            offsets.push(dim);
            dim += f.cardinality();
        }
        let classes = design.n_classes();
        let stride = dim + 1;
        let rows: Vec<Vec<usize>> = (0..design.n_rows())
            .map(|r| active(&offsets, design.row(r)))
            .collect();

        let mut rng = seed::rng(cfg.seed);
        let mut weights: Vec<f64> = (0..classes * stride)
            .map(|i| {
                if i % stride == dim {
                    0.0
                } else {
                    rng.random_range(-0.01..0.01)
                }
            })
            .collect();

        // Proximal step on the penalty keeps very large `l2` stable.
        let lr = cfg.learning_rate;
        let shrink = 1.0 / (1.0 + lr * cfg.l2);
        for _ in 0..cfg.epochs {
            let (_, grad) = loss_and_gradient(&weights, &rows, &design.y, classes, dim, 0.0);
            for (i, (w, g)) in weights.iter_mut().zip(&grad).enumerate() {
                *w -= lr * g;
                if i % stride != dim {
                    *w *= shrink;
                }
            }
        }
        Ok(LinearModel {
            features: design.features,
            target: design.target,
            offsets,
            weights,
        })
    }

    fn dim(&self) -> usize {
        self.weights.len() / self.target.cardinality() - 1
    }
}

impl BuiltIn for LinearModel {
    fn features(&self) -> &[Variable] {
        &self.features
    }

    fn target(&self) -> &Variable {
        &self.target
    }

    fn predict_row(&self, row: &[State]) -> State {
        let idx = active(&self.offsets, row);
        let z = scores(&self.weights, self.target.cardinality(), self.dim(), &idx);
        let mut best = 0;
        for (c, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = c;
            }
        }
        best as State
    }
}
