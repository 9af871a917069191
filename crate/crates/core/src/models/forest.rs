use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{majority, BuiltIn, Design};
use crate::dataset::{Dataset, State, VarId, Variable};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means `⌊√d⌋`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Node {
    Leaf {
        class: State,
    },
    /// Multiway split with one child per state of `feature`.
    Split {
        feature: usize,
        children: Vec<Node>,
    },
}

impl Node {
    fn predict(&self, row: &[State]) -> State {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { class } => return *class,
                Node::Split { feature, children } => node = &children[row[*feature] as usize],
            }
        }
    }
}

struct Builder<'a> {
    design: &'a Design,
    cfg: &'a ForestConfig,
    mtry: usize,
}

fn gini(counts: &[u64], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

impl Builder<'_> {
    fn class_counts(&self, idx: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.design.n_classes()];
        for &i in idx {
            counts[self.design.y[i] as usize] += 1;
        }
        counts
    }

    /// Weighted child impurity of a multiway split on `feature`.
    fn split_impurity(&self, idx: &[usize], feature: usize) -> f64 {
        let card = self.design.features[feature].cardinality();
        let c = self.design.n_classes();
        let mut counts = vec![0u64; card * c];
        for &i in idx {
            let s = self.design.row(i)[feature] as usize;
            counts[s * c + self.design.y[i] as usize] += 1;
        }
        let n = idx.len() as f64;
        counts
            .chunks(c)
            .map(|child| {
                let m: u64 = child.iter().sum();
                m as f64 / n * gini(child, m)
            })
            .sum()
    }

    fn build(&self, idx: &[usize], depth: usize, rng: &mut seed::Rng) -> Node {
        let counts = self.class_counts(idx);
        let class = majority(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_cap = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_cap || idx.len() < self.cfg.min_samples_split {
            return Node::Leaf { class };
        }
        let parent = gini(&counts, idx.len() as u64);
        let mut order: Vec<usize> = (0..self.design.n_features()).collect();
        order.shuffle(rng);

        let mut best: Option<(f64, usize)> = None;
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            let gain = parent - self.split_impurity(idx, f);
            if gain > 1e-12 && best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, f));
            }
        }
        let Some((_, feature)) = best else {
            return Node::Leaf { class };
        };

        let card = self.design.features[feature].cardinality();
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); card];
        for &i in idx {
            parts[self.design.row(i)[feature] as usize].push(i);
        }
        let children = parts
            .iter()
            .map(|part| {
                if part.is_empty() {
                    Node::Leaf { class }
                } else {
                    self.build(part, depth + 1, rng)
                }
            })
            .collect();
        Node::Split { feature, children }
    }
}

/// Bagged multiway-split decision trees with majority voting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    features: Vec<Variable>,
    target: Variable,
    trees: Vec<Node>,
}

impl RandomForest {
    pub fn train(data: &Dataset, target: VarId, cfg: &ForestConfig) -> Result<Self> {
        if cfg.trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        let design = Design::from_dataset(data, target)?;
        let d = design.n_features();
        let mtry = cfg
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
            .clamp(1, d);
        let builder = Builder {
            design: &design,
            cfg,
            mtry,
        };
        let n = design.n_rows();
        let trees = (0..cfg.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed::derive(cfg.seed, t as u64));
                let idx: Vec<usize> = if cfg.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                builder.build(&idx, 0, &mut rng)
            })
            .collect();
        Ok(RandomForest {
            features: design.features.clone(),
            target: design.target.clone(),
            trees,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

impl BuiltIn for RandomForest {
    fn features(&self) -> &[Variable] {
        &self.features
    }

    fn target(&self) -> &Variable {
        &self.target
    }

    fn predict_row(&self, row: &[State]) -> State {
        let mut votes = vec![0u64; self.target.cardinality()];
        for tree in &self.trees {
            votes[tree.predict(row) as usize] += 1;
        }
        majority(&votes)
    }
}
