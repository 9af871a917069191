//! Labeled perturbation neighborhoods around a single instance.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bn::draw;
use crate::dataset::{Dataset, FrequencyTable, State, Variable, SENTINEL_STATE};
use crate::error::{Error, Result};
use crate::models::ModelAdapter;
use crate::seed;

pub const DEFAULT_SAMPLE_COUNT: usize = 5000;
pub const DEFAULT_RESAMPLE_PROBABILITY: f64 = 0.5;

/// Rows per independently seeded generation chunk. Fixed so output does not
/// depend on the thread count.
const CHUNK_ROWS: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub sample_count: usize,
    /// Per-feature probability of redrawing from the marginal instead of
    /// keeping the instance value.
    pub resample_probability: f64,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            sample_count: DEFAULT_SAMPLE_COUNT,
            resample_probability: DEFAULT_RESAMPLE_PROBABILITY,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::Config("sample count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.resample_probability) {
            return Err(Error::Config(format!(
                "resample probability {} outside [0, 1]",
                self.resample_probability
            )));
        }
        Ok(())
    }
}

/// `cfg.sample_count` rows around `instance`. Each feature independently
/// keeps the instance value or, with the resample probability, is drawn from
/// its training marginal.
pub fn perturb(
    instance: &[State],
    variables: &[Variable],
    freq: &FrequencyTable,
    cfg: &PerturbationConfig,
) -> Result<Dataset> {
    cfg.validate()?;
    let d = variables.len();
    if instance.len() != d || freq.n_vars() != d {
        return Err(Error::Data(format!(
            "instance has {} values, schema {} variables, frequency table {}",
            instance.len(),
            d,
            freq.n_vars()
        )));
    }
    for (j, v) in variables.iter().enumerate() {
        if instance[j] as usize >= v.cardinality() {
            return Err(Error::Data(format!(
                "instance value {} out of range for `{}`",
                instance[j],
                v.name()
            )));
        }
        let m = freq.marginal(j);
        if m.len() != v.cardinality() || !(m.iter().sum::<f64>() > 0.0) {
            return Err(Error::Data(format!(
                "no frequency information for `{}`; cannot sample it",
                v.name()
            )));
        }
    }

    let rho = cfg.resample_probability;
    let mut cells = vec![0 as State; cfg.sample_count * d];
    if d > 0 {
        cells
            .par_chunks_mut(CHUNK_ROWS * d)
            .enumerate()
            .for_each(|(chunk, block)| {
                let mut rng = seed::rng(seed::derive(cfg.seed, chunk as u64));
                for row in block.chunks_exact_mut(d) {
                    for (j, cell) in row.iter_mut().enumerate() {
                        *cell = if rho > 0.0 && rng.random_bool(rho) {
                            draw(freq.marginal(j), rng.random::<f64>())
                        } else {
                            instance[j]
                        };
                    }
                }
            });
    }
    Dataset::new(variables.to_vec(), cells)
}

/// Appends the model's predicted class as a column named `target_name`.
///
/// The column's states are the model's declared labels, so classes the model
/// never predicted here still exist with zero counts. A model declaring a
/// single label gets a placeholder second state.
pub fn label(perturbed: &Dataset, model: &dyn ModelAdapter, target_name: &str) -> Result<Dataset> {
    if perturbed.index_of(target_name).is_some() {
        return Err(Error::Data(format!(
            "perturbed data already has a `{target_name}` column"
        )));
    }
    let mut states = model.labels().to_vec();
    if states.len() == 1 {
        states.push(SENTINEL_STATE.to_string());
    }
    let target = Variable::new(target_name, states)?;

    let n = perturbed.n_rows();
    let predictions: Vec<String> = if model.concurrency_safe() && n > CHUNK_ROWS {
        let chunks: Vec<Vec<usize>> = (0..n)
            .collect::<Vec<_>>()
            .chunks(CHUNK_ROWS)
            .map(<[usize]>::to_vec)
            .collect();
        let parts = chunks
            .par_iter()
            .map(|idx| model.predict_batch(&perturbed.select_rows(idx)))
            .collect::<Result<Vec<_>>>()?;
        parts.into_iter().flatten().collect()
    } else {
        model.predict_batch(perturbed)?
    };
    if predictions.len() != n {
        return Err(Error::Model(format!(
            "model returned {} labels for {n} rows",
            predictions.len()
        )));
    }
    let values = predictions
        .iter()
        .enumerate()
        .map(|(r, l)| {
            target.state_index(l).ok_or_else(|| {
                Error::Model(format!(
                    "row {r}: label `{l}` is not among the declared labels"
                ))
            })
        })
        .collect::<Result<Vec<State>>>()?;
    perturbed.with_column(target, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::frequency_table;
    use crate::models::train_naive_bayes;

    fn schema() -> (Vec<Variable>, FrequencyTable) {
        let vars = vec![
            Variable::with_cardinality("a", 3),
            Variable::binary("b"),
            Variable::with_cardinality("c", 4),
        ];
        let freq = FrequencyTable {
            marginals: vec![
                vec![0.2, 0.5, 0.3],
                vec![0.9, 0.1],
                vec![0.25, 0.25, 0.4, 0.1],
            ],
        };
        (vars, freq)
    }

    fn cfg(n: usize, rho: f64, seed: u64) -> PerturbationConfig {
        PerturbationConfig {
            sample_count: n,
            resample_probability: rho,
            seed,
        }
    }

    #[test]
    fn zero_rho_copies_instance() {
        let (vars, freq) = schema();
        let d = perturb(&[2, 1, 0], &vars, &freq, &cfg(3000, 0.0, 1)).unwrap();
        assert_eq!(d.n_rows(), 3000);
        assert!(d.rows().all(|r| r == [2, 1, 0]));
    }

    #[test]
    fn full_resampling_matches_marginals() {
        let (vars, freq) = schema();
        let n = 100_000;
        let d = perturb(&[0, 0, 0], &vars, &freq, &cfg(n, 1.0, 2)).unwrap();
        let emp = frequency_table(&d).unwrap();
        for j in 0..3 {
            let tv: f64 = emp
                .marginal(j)
                .iter()
                .zip(freq.marginal(j))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 0.01, "feature {j}: total variation {tv}");
        }
    }

    #[test]
    fn half_resampling_hamming_distance() {
        let (vars, freq) = schema();
        let x = [1, 0, 3];
        let n = 100_000;
        let d = perturb(&x, &vars, &freq, &cfg(n, 0.5, 3)).unwrap();
        for j in 0..3 {
            let moved = d.rows().filter(|r| r[j] != x[j]).count() as f64 / n as f64;
            let expected = 0.5 * (1.0 - freq.marginal(j)[x[j] as usize]);
            assert!(
                (moved - expected).abs() < 0.01,
                "feature {j}: {moved} vs {expected}"
            );
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (vars, freq) = schema();
        let a = perturb(&[0, 1, 2], &vars, &freq, &cfg(5000, 0.5, 7)).unwrap();
        let b = perturb(&[0, 1, 2], &vars, &freq, &cfg(5000, 0.5, 7)).unwrap();
        let c = perturb(&[0, 1, 2], &vars, &freq, &cfg(5000, 0.5, 8)).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_ne!(a, c);
    }

    #[test]
    fn unseen_states_are_never_drawn() {
        let (vars, mut freq) = schema();
        freq.marginals[2] = vec![0.0, 1.0, 0.0, 0.0];
        let d = perturb(&[0, 0, 1], &vars, &freq, &cfg(2000, 1.0, 4)).unwrap();
        assert!(d.column(2).iter().all(|&s| s == 1));
    }

    #[test]
    fn empty_marginal_is_an_error() {
        let (vars, mut freq) = schema();
        freq.marginals[1] = vec![0.0, 0.0];
        assert!(perturb(&[0, 0, 0], &vars, &freq, &cfg(10, 0.5, 0)).is_err());
        assert!(perturb(&[0, 0], &vars, &schema().1, &cfg(10, 0.5, 0)).is_err());
        assert!(perturb(&[0, 0, 0], &vars, &schema().1, &cfg(10, 1.5, 0)).is_err());
    }

    #[test]
    fn label_appends_declared_states() {
        let train = crate::models::testing::predictive(300, 3, 3, 5);
        let model = train_naive_bayes(&train, 3, 1.0).unwrap();
        let features = train.without_column(3);
        let freq = frequency_table(&features).unwrap();
        let p = perturb(
            features.row(0),
            features.variables(),
            &freq,
            &cfg(3000, 0.5, 1),
        )
        .unwrap();
        let labeled = label(&p, &model, "label").unwrap();
        assert_eq!(labeled.n_vars(), 4);
        assert_eq!(labeled.variable(3).cardinality(), 3);
        // the unperturbed row gets the model's own prediction
        let anchor = features.select_rows(&[0]);
        let expected = model.predict_batch(&anchor).unwrap();
        let row0 = p.rows().position(|r| r == features.row(0)).unwrap();
        assert_eq!(
            labeled.variable(3).state_label(labeled.get(row0, 3)),
            expected[0]
        );
    }

    #[test]
    fn single_label_model_gets_placeholder_state() {
        struct Constant(Vec<String>);
        impl ModelAdapter for Constant {
            fn predict_batch(&self, data: &Dataset) -> Result<Vec<String>> {
                Ok(vec![self.0[0].clone(); data.n_rows()])
            }
            fn labels(&self) -> &[String] {
                &self.0
            }
            fn feature_names(&self) -> Vec<String> {
                Vec::new()
            }
        }
        let (vars, freq) = schema();
        let p = perturb(&[0, 0, 0], &vars, &freq, &cfg(50, 0.5, 0)).unwrap();
        let l = label(&p, &Constant(vec!["yes".into()]), "y").unwrap();
        assert_eq!(l.variable(3).states(), ["yes", SENTINEL_STATE]);
        assert!(l.column(3).iter().all(|&s| s == 0));
    }
}
