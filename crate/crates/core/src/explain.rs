//! One explanation, end to end: perturb, label, find the blanket, learn a
//! network over it and read off the class posterior at the instance.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::bn::{self, argmax, fit_mle, learn_structure, posterior, BayesianNetwork, DotOptions};
use crate::dataset::{frequency_table, Dataset, State, VarId};
use crate::error::{Error, Result};
use crate::mb::{ipc_mb, MbConfig, NamedBlanket};
use crate::models::ModelAdapter;
use crate::perturb::{label, perturb, PerturbationConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub perturbation: PerturbationConfig,
    pub blanket: MbConfig,
    pub max_parents: usize,
    pub smoothing: f64,
    /// Feature names reported when they land in the blanket.
    pub sensitive: Vec<String>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            perturbation: PerturbationConfig::default(),
            blanket: MbConfig::default(),
            max_parents: bn::DEFAULT_MAX_PARENTS,
            smoothing: bn::DEFAULT_SMOOTHING,
            sensitive: Vec::new(),
        }
    }
}

/// The explained instance, by feature name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    /// State labels in the training schema.
    pub discretized: BTreeMap<String, String>,
    /// Raw values before discretization, when the caller had them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<BTreeMap<String, String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub target: String,
    pub instance: InstanceRecord,
    pub blanket: NamedBlanket,
    /// Network over the blanket and the target.
    pub network: BayesianNetwork,
    /// Class labels, aligned with `posterior`.
    pub classes: Vec<String>,
    pub posterior: Vec<f64>,
    /// What the black box said about the instance.
    pub predicted_class: String,
    /// Most probable class under the explanation network.
    pub explained_class: String,
    pub config: ExplainConfig,
    pub flagged_sensitive: Vec<String>,
}

impl Explanation {
    /// Index of the target inside [`Explanation::network`].
    pub fn target_node(&self) -> usize {
        self.network
            .index_of(&self.target)
            .expect("explanation network contains its target")
    }

    /// Whether the explanation reproduces the black-box prediction at the instance.
    pub fn agrees(&self) -> bool {
        self.explained_class == self.predicted_class
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("explanation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// An explanation together with the labeled neighborhood it was built from.
#[derive(Clone, Debug)]
pub struct Explained {
    pub explanation: Explanation,
    /// Perturbed rows plus the model's label as the last column.
    pub neighborhood: Dataset,
}

/// Explains `model`'s prediction on `instance`.
///
/// `train` holds the feature columns the instance is drawn from. A column
/// named `target` is dropped first, so a full training table works too, in
/// which case `instance` may include the target slot as well.
pub fn explain(
    model: &dyn ModelAdapter,
    instance: &[State],
    train: &Dataset,
    target: &str,
    cfg: &ExplainConfig,
) -> Result<Explanation> {
    Ok(explain_detailed(model, instance, train, target, cfg)?.explanation)
}

pub fn explain_detailed(
    model: &dyn ModelAdapter,
    instance: &[State],
    train: &Dataset,
    target: &str,
    cfg: &ExplainConfig,
) -> Result<Explained> {
    let canonical;
    let (features, instance) = match train.index_of(target) {
        Some(t) => {
            let x: Vec<State> = if instance.len() == train.n_vars() {
                instance
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != t)
                    .map(|(_, &s)| s)
                    .collect()
            } else {
                instance.to_vec()
            };
            canonical = train.variable(t).name().to_string();
            (train.without_column(t), x)
        }
        None => {
            canonical = target.to_string();
            (train.clone(), instance.to_vec())
        }
    };
    let target = canonical.as_str();
    if instance.len() != features.n_vars() {
        return Err(Error::Data(format!(
            "instance has {} values but the training schema has {} features",
            instance.len(),
            features.n_vars()
        )));
    }
    if let Some((j, _)) = instance
        .iter()
        .enumerate()
        .find(|(j, &s)| s as usize >= features.cardinality(*j))
    {
        return Err(Error::Data(format!(
            "instance value out of range for `{}`",
            features.variable(j).name()
        )));
    }

    let freq = frequency_table(&features)?;
    let perturbed = perturb(&instance, features.variables(), &freq, &cfg.perturbation)?;
    let labeled = label(&perturbed, model, target)?;
    let t = labeled.n_vars() - 1;

    let single = Dataset::from_rows(
        features.variables().to_vec(),
        std::slice::from_ref(&instance),
    )?;
    let predicted_class = model
        .predict_batch(&single)?
        .pop()
        .ok_or_else(|| Error::Model("model returned no label for the instance".into()))?;

    let mb = ipc_mb(&labeled, t, &cfg.blanket);
    let mut nodes: Vec<VarId> = mb.blanket().into_iter().collect();
    nodes.push(t);
    let local = labeled.select_columns(&nodes);
    let local_t = nodes.len() - 1;
    let all: Vec<VarId> = (0..nodes.len()).collect();
    let dag = learn_structure(&local, &all, cfg.max_parents);

    let mut evidence: Vec<Option<State>> =
        nodes.iter().map(|&v| instance.get(v).copied()).collect();
    evidence[local_t] = None;

    let (network, post) = match fit_and_query(&dag, &local, cfg.smoothing, local_t, &evidence) {
        Err(Error::ZeroProbability(_)) if cfg.smoothing == 0.0 => {
            log::warn!("zero-probability evidence without smoothing; refitting smoothed");
            fit_and_query(&dag, &local, bn::DEFAULT_SMOOTHING, local_t, &evidence)?
        }
        other => other?,
    };

    let target_var = labeled.variable(t);
    let explained_class = target_var.state_label(argmax(&post)).to_string();
    let blanket = mb.named(&labeled);
    let members: BTreeSet<String> = blanket
        .features()
        .into_iter()
        .map(|n| n.to_lowercase())
        .collect();
    let flagged_sensitive = cfg
        .sensitive
        .iter()
        .filter(|s| members.contains(&s.to_lowercase()))
        .cloned()
        .collect();
    let discretized = features
        .variables()
        .iter()
        .zip(&instance)
        .map(|(v, &s)| (v.name().to_string(), v.state_label(s).to_string()))
        .collect();

    Ok(Explained {
        explanation: Explanation {
            target: target_var.name().to_string(),
            instance: InstanceRecord {
                discretized,
                original: None,
            },
            blanket,
            network,
            classes: target_var.states().to_vec(),
            posterior: post,
            predicted_class,
            explained_class,
            config: cfg.clone(),
            flagged_sensitive,
        },
        neighborhood: labeled,
    })
}

fn fit_and_query(
    dag: &bn::Dag,
    data: &Dataset,
    smoothing: f64,
    target: usize,
    evidence: &[Option<State>],
) -> Result<(BayesianNetwork, Vec<f64>)> {
    let net = fit_mle(dag, data, smoothing)?;
    let post = posterior(&net, target, evidence)?;
    Ok((net, post))
}

/// Fraction of rows where the explanation network's most probable class
/// matches the model's label.
///
/// Rows are read by feature name. If `perturbed` lacks the target column it
/// is labeled with `model` first.
pub fn local_fidelity(
    expl: &Explanation,
    model: &dyn ModelAdapter,
    perturbed: &Dataset,
) -> Result<f64> {
    let labeled;
    let data = if perturbed.index_of(&expl.target).is_some() {
        perturbed
    } else {
        labeled = label(perturbed, model, &expl.target)?;
        &labeled
    };
    if data.n_rows() == 0 {
        return Err(Error::Empty("fidelity over zero rows".into()));
    }
    let net = &expl.network;
    let t = expl.target_node();
    let y = data.require(&expl.target)?;
    let cols = net
        .variables()
        .iter()
        .map(|v| data.require(v.name()))
        .collect::<Result<Vec<_>>>()?;
    // map the data's label states onto the network's
    let relabel: Vec<Option<State>> = data
        .variable(y)
        .states()
        .iter()
        .map(|l| net.variable(t).state_index(l))
        .collect();

    let mut cache: HashMap<Vec<State>, State> = HashMap::new();
    let mut hits = 0usize;
    for row in data.rows() {
        let key: Vec<State> = cols
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != t)
            .map(|(_, &c)| row[c])
            .collect();
        let class = match cache.get(&key) {
            Some(&c) => c,
            None => {
                let evidence: Vec<Option<State>> = cols
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (i != t).then_some(row[c]))
                    .collect();
                let c = argmax(&posterior(net, t, &evidence)?);
                cache.insert(key, c);
                c
            }
        };
        if relabel[row[y] as usize] == Some(class) {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.n_rows() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Dot,
}

impl ExportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "dot" | "gv" => Ok(ExportFormat::Dot),
            other => Err(Error::Config(format!("unknown export format `{other}`"))),
        }
    }
}

pub fn export(expl: &Explanation, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Json => {
            let mut s = expl.to_json();
            s.push('\n');
            s.into_bytes()
        }
        ExportFormat::Dot => {
            let highlight = expl
                .flagged_sensitive
                .iter()
                .filter_map(|n| expl.network.index_of(n))
                .collect();
            let opts = DotOptions {
                graph_name: "explanation".into(),
                target: Some(expl.target_node()),
                highlight,
            };
            bn::to_dot(&expl.network, &opts).into_bytes()
        }
    }
}
