//! Local-accuracy and consistency harnesses over repeated explanations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, VarId};
use crate::error::{Error, Result};
use crate::explain::{explain, ExplainConfig, Explanation};
use crate::models::{Classifier, ClassifierKind, ModelAdapter, TrainConfig};
use crate::seed;

pub const DEFAULT_REPETITIONS: usize = 100;

/// Support-weighted mean of per-class F1. Classes that never occur in
/// `actual` carry zero weight; undefined precision or recall counts as 0.
pub fn weighted_f1<T: Ord>(predicted: &[T], actual: &[T]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Empty("weighted F1 of zero labels".into()));
    }
    // (true positives, predicted count, actual count)
    let mut stats: BTreeMap<&T, (usize, usize, usize)> = BTreeMap::new();
    for (p, a) in predicted.iter().zip(actual) {
        stats.entry(p).or_default().1 += 1;
        let e = stats.entry(a).or_default();
        e.2 += 1;
        if p == a {
            e.0 += 1;
        }
    }
    let n = actual.len() as f64;
    Ok(stats
        .values()
        .filter(|s| s.2 > 0)
        .map(|&(tp, pred, act)| {
            let f1 = if tp == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (pred + act) as f64
            };
            f1 * act as f64 / n
        })
        .sum())
}

/// Weighted F1 on `test` of each classifier family retrained on `train`
/// restricted to `features`.
pub fn local_accuracy(
    train: &Dataset,
    test: &Dataset,
    target: &str,
    features: &[String],
    classifiers: &[ClassifierKind],
    cfg: &TrainConfig,
) -> Result<Vec<(ClassifierKind, f64)>> {
    if features.is_empty() {
        return Err(Error::Data("no explained features to train on".into()));
    }
    let t = train.require(target)?;
    let mut cols = features
        .iter()
        .map(|f| train.require(f))
        .collect::<Result<Vec<VarId>>>()?;
    if cols.contains(&t) {
        return Err(Error::Data(format!(
            "feature set contains the target `{target}`"
        )));
    }
    cols.push(t);
    let sub = train.select_columns(&cols);
    let sub_t = cols.len() - 1;
    let actual_col = test.require(target)?;
    let actual: Vec<&str> = test
        .column(actual_col)
        .into_iter()
        .map(|s| test.variable(actual_col).state_label(s))
        .collect();
    classifiers
        .iter()
        .map(|&kind| {
            let model = Classifier::train(kind, &sub, sub_t, cfg)?;
            let predicted = model.predict_batch(test)?;
            let predicted: Vec<&str> = predicted.iter().map(String::as_str).collect();
            Ok((kind, weighted_f1(&predicted, &actual)?))
        })
        .collect()
}

/// Shannon entropy (bits) of feature occurrences pooled over all runs.
pub fn consistency_entropy<S: AsRef<str>>(sets: &[Vec<S>]) -> Result<f64> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for set in sets {
        for f in set {
            *counts.entry(f.as_ref()).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::Empty("every feature set is empty".into()));
    }
    let mut ps: Vec<f64> = counts.values().map(|&c| c as f64 / total as f64).collect();
    // fixed summation order for bit-stable output
    ps.sort_by(f64::total_cmp);
    Ok(-ps.iter().map(|p| p * p.log2()).sum::<f64>() + 0.0)
}

/// `repetitions` sets of `k` features chosen uniformly at random.
pub fn random_top_k(
    features: &[String],
    k: usize,
    repetitions: usize,
    seed: u64,
) -> Vec<Vec<String>> {
    (0..repetitions)
        .map(|i| {
            let mut rng = seed::rng(seed::derive(seed, i as u64));
            let mut set: Vec<String> = features
                .choose_multiple(&mut rng, k.min(features.len()))
                .cloned()
                .collect();
            set.sort();
            set
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub repetitions: usize,
    pub seed: u64,
    pub explain: ExplainConfig,
    pub classifiers: Vec<ClassifierKind>,
    /// Hyperparameters for the retrained local-accuracy classifiers.
    pub train: TrainConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            repetitions: DEFAULT_REPETITIONS,
            seed: 0,
            explain: ExplainConfig::default(),
            classifiers: ClassifierKind::ALL.to_vec(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    /// Row of the test split that was explained.
    pub test_row: usize,
    pub seed: u64,
    pub features: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explained_class: Option<String>,
    /// Local-accuracy F1 per classifier short name.
    pub f1: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Summary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl F1Summary {
    fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / n
        };
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        F1Summary { values, mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub explainer: String,
    pub target: String,
    pub repetitions: usize,
    pub runs: Vec<RunRecord>,
    /// Explained feature set per run; the exchange form shared with other explainers.
    pub feature_sets: Vec<Vec<String>>,
    pub local_accuracy: BTreeMap<String, F1Summary>,
    /// F1 of each classifier trained on every feature.
    pub full_feature_f1: BTreeMap<String, f64>,
    pub mean_feature_count: f64,
    /// `None` when every run produced an empty set.
    pub consistency_entropy: Option<f64>,
    pub failures: usize,
    /// Runs whose blanket was empty, so no local accuracy was computed.
    pub empty_explanations: usize,
    pub config: BenchmarkConfig,
}

/// Feature sets produced by some explainer, in the report's exchange form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetFragment {
    pub explainer: String,
    pub feature_sets: Vec<Vec<String>>,
}

impl FeatureSetFragment {
    /// Rejects features missing from `schema`.
    pub fn validate(&self, schema: &Dataset) -> Result<()> {
        if self.feature_sets.is_empty() {
            return Err(Error::Empty(format!(
                "`{}` reported no feature sets",
                self.explainer
            )));
        }
        for f in self.feature_sets.iter().flatten() {
            schema.require(f)?;
        }
        Ok(())
    }

    pub fn entropy(&self) -> Result<f64> {
        consistency_entropy(&self.feature_sets)
    }
}

impl RunReport {
    pub fn fragment(&self) -> FeatureSetFragment {
        FeatureSetFragment {
            explainer: self.explainer.clone(),
            feature_sets: self.feature_sets.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Summary table: one row per explainer, F1 columns then size and entropy.
    pub fn to_markdown(&self) -> String {
        markdown_table(&[self])
    }
}

pub fn markdown_table(reports: &[&RunReport]) -> String {
    let kinds: BTreeSet<&String> = reports
        .iter()
        .flat_map(|r| r.local_accuracy.keys())
        .collect();
    let mut out = String::from("| Explainer |");
    for k in &kinds {
        out.push_str(&format!(" {k} F1 |"));
    }
    out.push_str(" Features | Entropy | Runs | Failures |\n|---|");
    for _ in &kinds {
        out.push_str("---|");
    }
    out.push_str("---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!("| {} |", r.explainer));
        for k in &kinds {
            match r.local_accuracy.get(*k) {
                Some(s) => out.push_str(&format!(" {:.3} ± {:.3} |", s.mean, s.std)),
                None => out.push_str(" n/a |"),
            }
        }
        let h = r
            .consistency_entropy
            .map_or_else(|| "n/a".to_string(), |h| format!("{h:.2}"));
        out.push_str(&format!(
            " {:.2} | {h} | {} | {} |\n",
            r.mean_feature_count, r.repetitions, r.failures
        ));
    }
    out
}

/// Report plus the per-run explanations (`None` for failed runs).
#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub report: RunReport,
    pub explanations: Vec<Option<Explanation>>,
}

pub fn run_benchmark(
    train: &Dataset,
    test: &Dataset,
    target: &str,
    model: &dyn ModelAdapter,
    cfg: &BenchmarkConfig,
) -> Result<RunReport> {
    Ok(run_benchmark_detailed(train, test, target, model, cfg)?.report)
}

/// Explains `repetitions` test rows (round-robin) with per-run derived seeds
/// and scores each explained feature set by retraining on `train`.
pub fn run_benchmark_detailed(
    train: &Dataset,
    test: &Dataset,
    target: &str,
    model: &dyn ModelAdapter,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkOutcome> {
    if cfg.repetitions == 0 {
        return Err(Error::Config("repetitions must be >= 1".into()));
    }
    if test.n_rows() == 0 {
        return Err(Error::Empty("test split has no rows".into()));
    }
    let t_train = train.require(target)?;
    let t_test = test.require(target)?;
    let test = test.conform_to(train.variables())?;
    let features = train.without_column(t_train);
    let kinds = &cfg.classifiers;

    let all_features: Vec<String> = features.names().into_iter().map(String::from).collect();
    let full = local_accuracy(train, &test, target, &all_features, kinds, &cfg.train)?;
    let full_feature_f1 = full
        .iter()
        .map(|(k, f)| (k.short_name().to_string(), *f))
        .collect();

    // identical feature sets retrain identically, so score each set once
    type Scores = Vec<(ClassifierKind, f64)>;
    let scores: Mutex<HashMap<Vec<String>, Scores>> = Mutex::new(HashMap::new());
    let score = |set: &[String]| -> Result<Vec<(ClassifierKind, f64)>> {
        let mut key = set.to_vec();
        key.sort();
        if let Some(v) = scores.lock().expect("score cache").get(&key) {
            return Ok(v.clone());
        }
        let v = local_accuracy(train, &test, target, &key, kinds, &cfg.train)?;
        scores.lock().expect("score cache").insert(key, v.clone());
        Ok(v)
    };

    let one_run = |run: usize| -> (RunRecord, Option<Explanation>) {
        let test_row = run % test.n_rows();
        let run_seed = seed::derive(cfg.seed, run as u64);
        let mut ecfg = cfg.explain.clone();
        ecfg.perturbation.seed = run_seed;
        let mut record = RunRecord {
            run,
            test_row,
            seed: run_seed,
            features: Vec::new(),
            predicted_class: None,
            explained_class: None,
            f1: BTreeMap::new(),
            error: None,
        };
        let instance: Vec<_> = test
            .row(test_row)
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != t_test)
            .map(|(_, &s)| s)
            .collect();
        let expl = match explain(model, &instance, &features, target, &ecfg) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("run {run} failed: {e}");
                record.error = Some(e.to_string());
                return (record, None);
            }
        };
        record.features = expl.blanket.features();
        record.predicted_class = Some(expl.predicted_class.clone());
        record.explained_class = Some(expl.explained_class.clone());
        if !record.features.is_empty() {
            match score(&record.features) {
                Ok(v) => {
                    record.f1 = v
                        .into_iter()
                        .map(|(k, f)| (k.short_name().to_string(), f))
                        .collect()
                }
                Err(e) => record.error = Some(e.to_string()),
            }
        }
        (record, Some(expl))
    };

    let results: Vec<(RunRecord, Option<Explanation>)> = if model.concurrency_safe() {
        (0..cfg.repetitions).into_par_iter().map(one_run).collect()
    } else {
        (0..cfg.repetitions).map(one_run).collect()
    };
    let (runs, explanations): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let failures = runs.iter().filter(|r| r.error.is_some()).count();
    let ok: Vec<&RunRecord> = runs.iter().filter(|r| r.error.is_none()).collect();
    let empty_explanations = ok.iter().filter(|r| r.features.is_empty()).count();
    let feature_sets: Vec<Vec<String>> = runs.iter().map(|r| r.features.clone()).collect();
    let mean_feature_count = if ok.is_empty() {
        0.0
    } else {
        ok.iter().map(|r| r.features.len()).sum::<usize>() as f64 / ok.len() as f64
    };
    let local_accuracy = kinds
        .iter()
        .map(|k| {
            let name = k.short_name().to_string();
            let values = ok.iter().filter_map(|r| r.f1.get(&name).copied()).collect();
            (name, F1Summary::from_values(values))
        })
        .collect();

    let report = RunReport {
        explainer: "laplace".into(),
        target: target.to_string(),
        repetitions: cfg.repetitions,
        consistency_entropy: consistency_entropy(&feature_sets).ok(),
        feature_sets,
        runs,
        local_accuracy,
        full_feature_f1,
        mean_feature_count,
        failures,
        empty_explanations,
        config: cfg.clone(),
    };
    Ok(BenchmarkOutcome {
        report,
        explanations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn f1_anchors() {
        let y = ["a", "b", "a", "b"];
        assert_eq!(weighted_f1(&y, &y).unwrap(), 1.0);
        let all_a = ["a"; 4];
        assert_relative_eq!(weighted_f1(&all_a, &y).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert!(weighted_f1(&["a"], &y).is_err());
        assert!(weighted_f1::<&str>(&[], &[]).is_err());
    }

    /// Precision/recall spelled out per class.
    fn reference_f1(p: &[u8], a: &[u8]) -> f64 {
        let classes: BTreeSet<u8> = a.iter().copied().collect();
        let n = a.len() as f64;
        let mut total = 0.0;
        for c in classes {
            let tp = p
                .iter()
                .zip(a)
                .filter(|(x, y)| **x == c && **y == c)
                .count() as f64;
            let fp = p
                .iter()
                .zip(a)
                .filter(|(x, y)| **x == c && **y != c)
                .count() as f64;
            let fne = p
                .iter()
                .zip(a)
                .filter(|(x, y)| **x != c && **y == c)
                .count() as f64;
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if tp + fne > 0.0 { tp / (tp + fne) } else { 0.0 };
            let f1 = if prec + rec > 0.0 {
                2.0 * prec * rec / (prec + rec)
            } else {
                0.0
            };
            total += f1 * (tp + fne) / n;
        }
        total
    }

    #[test]
    fn f1_matches_reference_on_random_vectors() {
        use rand::Rng;
        let mut rng = seed::rng(12);
        for _ in 0..100 {
            let n = rng.random_range(1..60);
            let k = rng.random_range(1..5u8);
            let p: Vec<u8> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..k)).collect();
            assert!((weighted_f1(&p, &a).unwrap() - reference_f1(&p, &a)).abs() < 1e-9);
        }
    }

    #[test]
    fn entropy_anchors() {
        let five: Vec<Vec<String>> = (0..100)
            .map(|_| (0..5).map(|i| format!("f{i}")).collect())
            .collect();
        assert!((consistency_entropy(&five).unwrap() - 5f64.log2()).abs() < 1e-9);
        let unique: Vec<Vec<String>> = (0..100).map(|i| vec![format!("f{i}")]).collect();
        assert!((consistency_entropy(&unique).unwrap() - 100f64.log2()).abs() < 1e-9);
        assert_eq!(consistency_entropy(&[vec!["x"]]).unwrap(), 0.0);
        assert!(consistency_entropy::<String>(&[vec![], vec![]]).is_err());
    }

    proptest! {
        #[test]
        fn entropy_is_permutation_invariant(
            sets in prop::collection::vec(prop::collection::vec(0u8..12, 1..6), 1..15),
            shift in 0usize..15,
            rename in 1u8..50,
        ) {
            let named = |s: &Vec<u8>, r: u8| -> Vec<String> {
                s.iter().map(|v| format!("g{}", v.wrapping_add(r))).collect()
            };
            let base: Vec<Vec<String>> = sets.iter().map(|s| named(s, 0)).collect();
            let mut rotated = base.clone();
            rotated.rotate_left(shift % base.len());
            let renamed: Vec<Vec<String>> = sets.iter().map(|s| named(s, rename)).collect();
            let h = consistency_entropy(&base).unwrap();
            prop_assert!((h - consistency_entropy(&rotated).unwrap()).abs() < 1e-12);
            prop_assert!((h - consistency_entropy(&renamed).unwrap()).abs() < 1e-12);
            prop_assert!(h >= 0.0);
        }

        #[test]
        fn repeating_every_run_keeps_entropy(
            sets in prop::collection::vec(prop::collection::btree_set(0u8..10, 1..6), 1..10),
            copies in 2usize..5,
        ) {
            let sets: Vec<Vec<String>> = sets
                .iter()
                .map(|s| s.iter().map(|v| format!("f{v}")).collect())
                .collect();
            let h = consistency_entropy(&sets).unwrap();
            let repeated: Vec<Vec<String>> = sets.iter().cycle().take(sets.len() * copies).cloned().collect();
            prop_assert!((consistency_entropy(&repeated).unwrap() - h).abs() < 1e-12);
        }
    }

    /// Duplicating one run can raise pooled entropy when it evens out the
    /// occurrence counts, so "duplicates never increase entropy" does not hold.
    #[test]
    fn duplicating_one_run_can_raise_entropy() {
        let sets = vec![
            vec!["f7"],
            vec!["f0", "f1", "f4", "f7"],
            vec!["f3"],
            vec!["f3"],
        ];
        let h = consistency_entropy(&sets).unwrap();
        let mut more = sets.clone();
        more.push(sets[1].clone());
        assert!(consistency_entropy(&more).unwrap() > h);
        // duplicating a run made of the single most frequent feature cannot raise it
        let mut peak = sets.clone();
        peak.push(vec!["f3"]);
        assert!(consistency_entropy(&peak).unwrap() < h);
    }

    #[test]
    fn random_selector_is_seeded() {
        let f: Vec<String> = (0..30).map(|i| format!("f{i}")).collect();
        let a = random_top_k(&f, 5, 10, 3);
        assert_eq!(a, random_top_k(&f, 5, 10, 3));
        assert!(a.iter().all(|s| s.len() == 5));
    }

    fn toy_split() -> (Dataset, Dataset) {
        let d = crate::models::testing::predictive(600, 4, 2, 21);
        crate::dataset::split(&d, 0.8, 1).unwrap()
    }

    #[test]
    fn full_feature_set_equals_baseline() {
        let (train, test) = toy_split();
        let all: Vec<String> = train
            .names()
            .into_iter()
            .filter(|n| *n != "label")
            .map(String::from)
            .collect();
        let a = local_accuracy(
            &train,
            &test,
            "label",
            &all,
            &ClassifierKind::ALL,
            &TrainConfig::default(),
        )
        .unwrap();
        assert!(a.iter().all(|(_, f)| *f == 1.0));
        let noise = local_accuracy(
            &train,
            &test,
            "label",
            &["noise1".to_string()],
            &[ClassifierKind::NaiveBayes],
            &TrainConfig::default(),
        )
        .unwrap();
        assert!(noise[0].1 < 0.75);
        assert!(local_accuracy(
            &train,
            &test,
            "label",
            &[],
            &ClassifierKind::ALL,
            &TrainConfig::default()
        )
        .is_err());
    }

    #[test]
    fn benchmark_small_and_deterministic() {
        let (train, test) = toy_split();
        let model = crate::models::train_naive_bayes(&train, 4, 1.0).unwrap();
        let mut cfg = BenchmarkConfig {
            repetitions: 3,
            seed: 5,
            ..Default::default()
        };
        cfg.explain.perturbation.sample_count = 1500;
        cfg.train.forest.trees = 10;
        let a = run_benchmark(&train, &test, "label", &model, &cfg).unwrap();
        let b = run_benchmark(&train, &test, "label", &model, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.runs.len(), 3);
        assert_eq!(a.feature_sets.len(), 3);
        assert_eq!(a.failures, 0);
        assert!(a
            .feature_sets
            .iter()
            .all(|s| s.contains(&"signal".to_string())));
        assert!(a.to_markdown().contains("| laplace |"));
        let back = RunReport::from_json(&a.to_json()).unwrap();
        assert_eq!(back.to_json(), a.to_json());

        cfg.repetitions = 1;
        let one = run_benchmark(&train, &test, "label", &model, &cfg).unwrap();
        assert_eq!(one.feature_sets.len(), 1);
        assert_eq!(
            one.consistency_entropy,
            consistency_entropy(&one.feature_sets).ok()
        );
    }

    #[test]
    fn fragment_validation_names_bad_feature() {
        let (train, _) = toy_split();
        let frag = FeatureSetFragment {
            explainer: "lime".into(),
            feature_sets: vec![vec!["signal".into(), "bogus".into()]],
        };
        let err = frag.validate(&train).unwrap_err().to_string();
        assert!(err.contains("bogus"));
        let empty = FeatureSetFragment {
            explainer: "lime".into(),
            feature_sets: vec![],
        };
        assert!(empty.validate(&train).is_err());
    }
}
