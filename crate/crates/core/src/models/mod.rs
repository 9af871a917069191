//! Black-box classifier contract plus built-in reference classifiers.

mod external;
mod forest;
mod linear;
mod naive_bayes;

pub use external::ExternalModel;
pub use forest::{ForestConfig, RandomForest};
pub use linear::{LinearConfig, LinearModel};
pub use naive_bayes::NaiveBayes;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, State, VarId, Variable};
use crate::error::{Error, Result};

/// Anything that maps a batch of instances to class labels.
pub trait ModelAdapter: Send + Sync {
    /// One label per input row, in row order.
    fn predict_batch(&self, data: &Dataset) -> Result<Vec<String>>;

    /// The fixed set of labels this model can emit.
    fn labels(&self) -> &[String];

    /// Feature names the model expects, in order.
    fn feature_names(&self) -> Vec<String>;

    /// Whether concurrent `predict_batch` calls are allowed.
    fn concurrency_safe(&self) -> bool {
        true
    }
}

/// Training matrix for the built-in classifiers.
#[derive(Clone, Debug)]
pub(crate) struct Design {
    pub features: Vec<Variable>,
    pub target: Variable,
    /// Row-major feature states.
    pub x: Vec<State>,
    pub y: Vec<State>,
}

impl Design {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn row(&self, r: usize) -> &[State] {
        let d = self.n_features();
        &self.x[r * d..(r + 1) * d]
    }

    pub fn n_classes(&self) -> usize {
        self.target.cardinality()
    }

    /// All columns except `target` become features.
    pub fn from_dataset(data: &Dataset, target: VarId) -> Result<Self> {
        if target >= data.n_vars() {
            return Err(Error::UnknownVariable(format!("column #{target}")));
        }
        if data.n_rows() == 0 {
            return Err(Error::Empty("cannot train on zero rows".into()));
        }
        let cols: Vec<VarId> = (0..data.n_vars()).filter(|&c| c != target).collect();
        if cols.is_empty() {
            return Err(Error::Data("no feature columns to train on".into()));
        }
        let features = cols.iter().map(|&c| data.variable(c).clone()).collect();
        let mut x = Vec::with_capacity(data.n_rows() * cols.len());
        for row in data.rows() {
            x.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(Design {
            features,
            target: data.variable(target).clone(),
            x,
            y: data.column(target),
        })
    }
}

/// Maps an arbitrary dataset onto a model's feature schema by name and label.
pub(crate) fn encode(features: &[Variable], data: &Dataset) -> Result<Vec<State>> {
    let mut maps = Vec::with_capacity(features.len());
    for f in features {
        let src = data
            .index_of(f.name())
            .ok_or_else(|| Error::Model(format!("input lacks feature `{}`", f.name())))?;
        let same = data.variable(src).states() == f.states();
        let table: Vec<Option<State>> = if same {
            (0..f.cardinality() as State).map(Some).collect()
        } else {
            data.variable(src)
                .states()
                .iter()
                .map(|l| f.state_index(l))
                .collect()
        };
        maps.push((src, table));
    }
    let mut out = Vec::with_capacity(data.n_rows() * features.len());
    for (r, row) in data.rows().enumerate() {
        for (f, (src, table)) in features.iter().zip(&maps) {
            let s = table[row[*src] as usize].ok_or_else(|| {
                Error::Model(format!(
                    "row {r}: value `{}` of `{}` was never seen in training",
                    data.variable(*src).state_label(row[*src]),
                    f.name()
                ))
            })?;
            out.push(s);
        }
    }
    Ok(out)
}

/// Majority class; lowest index on ties.
pub(crate) fn majority(counts: &[u64]) -> State {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best as State
}

/// Serializable built-in classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    NaiveBayes(NaiveBayes),
    RandomForest(RandomForest),
    Linear(LinearModel),
}

/// Which built-in family to train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    NaiveBayes,
    RandomForest,
    Linear,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [
        ClassifierKind::NaiveBayes,
        ClassifierKind::RandomForest,
        ClassifierKind::Linear,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ClassifierKind::NaiveBayes => "nb",
            ClassifierKind::RandomForest => "rf",
            ClassifierKind::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nb" | "naive_bayes" | "naive-bayes" | "bn" => Ok(ClassifierKind::NaiveBayes),
            "rf" | "random_forest" | "random-forest" | "forest" => Ok(ClassifierKind::RandomForest),
            "linear" | "logistic" | "lr" | "svm" => Ok(ClassifierKind::Linear),
            other => Err(Error::Config(format!("unknown classifier `{other}`"))),
        }
    }
}

/// Hyperparameters for every built-in family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub nb_smoothing: f64,
    pub forest: ForestConfig,
    pub linear: LinearConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            nb_smoothing: 1.0,
            forest: ForestConfig::default(),
            linear: LinearConfig::default(),
        }
    }
}

impl Classifier {
    pub fn train(
        kind: ClassifierKind,
        data: &Dataset,
        target: VarId,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        Ok(match kind {
            ClassifierKind::NaiveBayes => {
                Classifier::NaiveBayes(NaiveBayes::train(data, target, cfg.nb_smoothing)?)
            }
            ClassifierKind::RandomForest => {
                Classifier::RandomForest(RandomForest::train(data, target, &cfg.forest)?)
            }
            ClassifierKind::Linear => {
                Classifier::Linear(LinearModel::train(data, target, &cfg.linear)?)
            }
        })
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::NaiveBayes(_) => ClassifierKind::NaiveBayes,
            Classifier::RandomForest(_) => ClassifierKind::RandomForest,
            Classifier::Linear(_) => ClassifierKind::Linear,
        }
    }

    fn inner(&self) -> &dyn BuiltIn {
        match self {
            Classifier::NaiveBayes(m) => m,
            Classifier::RandomForest(m) => m,
            Classifier::Linear(m) => m,
        }
    }

    /// Predicted class indices for each row.
    pub fn predict_states(&self, data: &Dataset) -> Result<Vec<State>> {
        let m = self.inner();
        let x = encode(m.features(), data)?;
        let d = m.features().len();
        Ok(x.chunks_exact(d.max(1))
            .map(|row| m.predict_row(row))
            .collect())
    }

    pub fn target(&self) -> &Variable {
        self.inner().target()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("classifier serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) trait BuiltIn {
    fn features(&self) -> &[Variable];
    fn target(&self) -> &Variable;
    fn predict_row(&self, row: &[State]) -> State;
}

impl ModelAdapter for Classifier {
    fn predict_batch(&self, data: &Dataset) -> Result<Vec<String>> {
        let target = self.target();
        Ok(self
            .predict_states(data)?
            .into_iter()
            .map(|s| target.state_label(s).to_string())
            .collect())
    }

    fn labels(&self) -> &[String] {
        self.target().states()
    }

    fn feature_names(&self) -> Vec<String> {
        self.inner()
            .features()
            .iter()
            .map(|v| v.name().to_string())
            .collect()
    }
}

/// Convenience constructors mirroring the built-in families.
pub fn train_naive_bayes(data: &Dataset, target: VarId, smoothing: f64) -> Result<Classifier> {
    Ok(Classifier::NaiveBayes(NaiveBayes::train(
        data, target, smoothing,
    )?))
}

pub fn train_random_forest(
    data: &Dataset,
    target: VarId,
    trees: usize,
    max_depth: Option<usize>,
    seed: u64,
) -> Result<Classifier> {
    let cfg = ForestConfig {
        trees,
        max_depth,
        seed,
        ..Default::default()
    };
    Ok(Classifier::RandomForest(RandomForest::train(
        data, target, &cfg,
    )?))
}

pub fn train_linear(
    data: &Dataset,
    target: VarId,
    l2: f64,
    epochs: usize,
    seed: u64,
) -> Result<Classifier> {
    let cfg = LinearConfig {
        l2,
        epochs,
        seed,
        ..Default::default()
    };
    Ok(Classifier::Linear(LinearModel::train(data, target, &cfg)?))
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn json_round_trip_is_prediction_equivalent() {
        let d = predictive(300, 4, 3, 1);
        for kind in ClassifierKind::ALL {
            let m = Classifier::train(kind, &d, 4, &TrainConfig::default()).unwrap();
            let back = Classifier::from_json(&m.to_json()).unwrap();
            assert_eq!(
                m.predict_batch(&d).unwrap(),
                back.predict_batch(&d).unwrap()
            );
            assert_eq!(back.kind(), kind);
        }
    }

    #[test]
    fn predictions_are_pure() {
        let d = predictive(200, 3, 2, 2);
        for kind in ClassifierKind::ALL {
            let m = Classifier::train(kind, &d, 3, &TrainConfig::default()).unwrap();
            assert_eq!(m.predict_batch(&d).unwrap(), m.predict_batch(&d).unwrap());
            assert_eq!(m.predict_batch(&d).unwrap().len(), d.n_rows());
        }
    }

    #[test]
    fn encode_by_name_and_label() {
        let d = predictive(50, 3, 2, 3);
        let m = train_naive_bayes(&d, 3, 1.0).unwrap();
        // reorder columns: the adapter looks features up by name
        let shuffled = d.select_columns(&[2, 0, 1]);
        assert_eq!(
            m.predict_batch(&shuffled).unwrap(),
            m.predict_batch(&d).unwrap()
        );
        let missing = d.select_columns(&[0, 1]);
        assert!(matches!(m.predict_batch(&missing), Err(Error::Model(_))));
    }

    #[test]
    fn parse_kinds() {
        assert_eq!(
            ClassifierKind::parse("RF").unwrap(),
            ClassifierKind::RandomForest
        );
        assert_eq!(
            ClassifierKind::parse("svm").unwrap(),
            ClassifierKind::Linear
        );
        assert!(ClassifierKind::parse("xgboost").is_err());
    }
}
