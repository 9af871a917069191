use std::collections::HashMap;

use super::{BayesianNetwork, Cpt, Dag};
use crate::dataset::{Dataset, VarId};
use crate::error::{Error, Result};

pub const DEFAULT_SMOOTHING: f64 = 0.5;
pub const DEFAULT_MAX_PARENTS: usize = 3;

/// `counts[config * card + state]` for one node and its ordered parents.
fn family_counts(data: &Dataset, node: VarId, parents: &[VarId]) -> (Vec<u64>, usize, usize) {
    let card = data.cardinality(node);
    let q: usize = parents.iter().map(|&p| data.cardinality(p)).product();
    let mut counts = vec![0u64; q * card];
    for row in data.rows() {
        let mut cfg = 0usize;
        for &p in parents {
            cfg = cfg * data.cardinality(p) + row[p] as usize;
        }
        counts[cfg * card + row[node] as usize] += 1;
    }
    (counts, q, card)
}

/// Maximum-likelihood CPTs with additive smoothing:
/// `θ = (N(s, pa) + λ) / (N(pa) + λ·r)`. Unseen configurations with `λ = 0`
/// get a uniform row.
pub fn fit_mle(dag: &Dag, data: &Dataset, smoothing: f64) -> Result<BayesianNetwork> {
    if dag.n_nodes() != data.n_vars() {
        return Err(Error::Data(format!(
            "graph has {} nodes but data has {} columns",
            dag.n_nodes(),
            data.n_vars()
        )));
    }
    if !(smoothing >= 0.0) {
        return Err(Error::Config(format!(
            "smoothing must be >= 0, got {smoothing}"
        )));
    }
    let mut cpts = Vec::with_capacity(dag.n_nodes());
    for v in 0..dag.n_nodes() {
        let parents = dag.parents(v).to_vec();
        let (counts, q, card) = family_counts(data, v, &parents);
        let mut rows = Vec::with_capacity(q);
        for cfg in 0..q {
            let slice = &counts[cfg * card..(cfg + 1) * card];
            let total: u64 = slice.iter().sum();
            let denom = total as f64 + smoothing * card as f64;
            let row: Vec<f64> = if denom > 0.0 {
                slice
                    .iter()
                    .map(|&n| (n as f64 + smoothing) / denom)
                    .collect()
            } else {
                vec![1.0 / card as f64; card]
            };
            rows.push(row);
        }
        let cards = parents.iter().map(|&p| data.cardinality(p)).collect();
        cpts.push(Cpt::new(v, card, parents, cards, rows)?);
    }
    BayesianNetwork::new(data.variables().to_vec(), dag.clone(), cpts)
}

/// Training log-likelihood `Σ_rows ln P(row)`.
pub fn log_likelihood(bn: &BayesianNetwork, data: &Dataset) -> f64 {
    data.rows().map(|row| bn.log_joint(row)).sum()
}

fn family_bic(data: &Dataset, node: VarId, parents: &[VarId]) -> f64 {
    let (counts, q, card) = family_counts(data, node, parents);
    let mut ll = 0.0;
    for cfg in 0..q {
        let slice = &counts[cfg * card..(cfg + 1) * card];
        let total: u64 = slice.iter().sum();
        if total == 0 {
            continue;
        }
        let total = total as f64;
        for &n in slice {
            if n > 0 {
                let n = n as f64;
                ll += n * (n / total).ln();
            }
        }
    }
    let k = data.n_rows().max(1) as f64;
    ll - 0.5 * k.ln() * ((card - 1) * q) as f64
}

/// BIC of a graph: maximized log-likelihood minus `(ln K / 2)` per free parameter.
pub fn bic_score(dag: &Dag, data: &Dataset) -> f64 {
    (0..dag.n_nodes())
        .map(|v| family_bic(data, v, dag.parents(v)))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    Reverse(usize, usize),
}

/// Greedy BIC hill-climbing over add/delete/reverse single-edge moves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HillClimb {
    pub max_parents: usize,
    pub max_iterations: usize,
}

impl Default for HillClimb {
    fn default() -> Self {
        HillClimb {
            max_parents: DEFAULT_MAX_PARENTS,
            max_iterations: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureSearch {
    pub dag: Dag,
    pub score: f64,
    /// Score after each accepted move, starting from the empty graph.
    pub trace: Vec<f64>,
}

struct ScoreCache<'a> {
    data: &'a Dataset,
    cache: HashMap<(VarId, Vec<VarId>), f64>,
}

impl ScoreCache<'_> {
    fn family(&mut self, node: VarId, parents: &[VarId]) -> f64 {
        let mut key = parents.to_vec();
        key.sort_unstable();
        if let Some(&s) = self.cache.get(&(node, key.clone())) {
            return s;
        }
        let s = family_bic(self.data, node, &key);
        self.cache.insert((node, key), s);
        s
    }

    fn with(&mut self, node: VarId, parents: &[VarId], extra: VarId) -> f64 {
        let mut ps = parents.to_vec();
        ps.push(extra);
        self.family(node, &ps)
    }

    fn without(&mut self, node: VarId, parents: &[VarId], drop: VarId) -> f64 {
        let ps: Vec<VarId> = parents.iter().copied().filter(|&p| p != drop).collect();
        self.family(node, &ps)
    }
}

impl HillClimb {
    pub fn run(&self, data: &Dataset, nodes: &[VarId]) -> StructureSearch {
        let mut nodes = nodes.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        let mut dag = Dag::new(data.n_vars());
        let mut cache = ScoreCache {
            data,
            cache: HashMap::new(),
        };
        let mut score: f64 = nodes.iter().map(|&v| cache.family(v, &[])).sum();
        let mut trace = vec![score];

        for _ in 0..self.max_iterations {
            let tol = 1e-10 * (1.0 + score.abs());
            let mut best: Option<(f64, Move)> = None;
            for &u in &nodes {
                for &v in &nodes {
                    if u == v {
                        continue;
                    }
                    for (delta, mv) in self.candidate_moves(&mut dag, &mut cache, u, v) {
                        if best.is_none_or(|(b, _)| delta > b + tol) {
                            best = Some((delta, mv));
                        }
                    }
                }
            }
            let Some((delta, mv)) = best else { break };
            if delta <= tol {
                break;
            }
            match mv {
                Move::Add(u, v) => dag.add_edge(u, v).expect("checked move"),
                Move::Delete(u, v) => {
                    dag.remove_edge(u, v);
                }
                Move::Reverse(u, v) => {
                    dag.remove_edge(u, v);
                    dag.add_edge(v, u).expect("checked move");
                }
            }
            score += delta;
            trace.push(score);
        }

        // canonical parent order
        let mut canonical = Dag::new(data.n_vars());
        for (p, c) in dag.edges() {
            canonical.add_edge(p, c).expect("edges come from a DAG");
        }
        let score = bic_score(&canonical, data)
            - (0..data.n_vars())
                .filter(|v| !nodes.contains(v))
                .map(|v| family_bic(data, v, &[]))
                .sum::<f64>();
        StructureSearch {
            dag: canonical,
            score,
            trace,
        }
    }

    fn candidate_moves(
        &self,
        dag: &mut Dag,
        cache: &mut ScoreCache<'_>,
        u: usize,
        v: usize,
    ) -> Vec<(f64, Move)> {
        let mut out = Vec::with_capacity(2);
        let pa_v = dag.parents(v).to_vec();
        if dag.has_edge(u, v) {
            let base_v = cache.family(v, &pa_v);
            let drop_v = cache.without(v, &pa_v, u);
            out.push((drop_v - base_v, Move::Delete(u, v)));

            let pa_u = dag.parents(u).to_vec();
            if pa_u.len() < self.max_parents {
                dag.remove_edge(u, v);
                let ok = dag.can_add(v, u);
                dag.add_edge(u, v).expect("restoring an edge");
                // restore original parent order
                let ps = &mut dag.parents[v];
                ps.clear();
                ps.extend_from_slice(&pa_v);
                if ok {
                    let delta = drop_v - base_v + cache.with(u, &pa_u, v) - cache.family(u, &pa_u);
                    out.push((delta, Move::Reverse(u, v)));
                }
            }
        } else if !dag.has_edge(v, u) && pa_v.len() < self.max_parents && dag.can_add(u, v) {
            let delta = cache.with(v, &pa_v, u) - cache.family(v, &pa_v);
            out.push((delta, Move::Add(u, v)));
        }
        out
    }
}

/// Hill-climbing with the given parent cap; edges only among `nodes`.
pub fn learn_structure(data: &Dataset, nodes: &[VarId], max_parents: usize) -> Dag {
    HillClimb {
        max_parents,
        ..Default::default()
    }
    .run(data, nodes)
    .dag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::oracle::random_network;
    use crate::bn::{forward_sample, Cpt};
    use crate::dataset::{State, Variable};
    use approx::assert_relative_eq;

    fn figure2_rows() -> Dataset {
        // columns a, f, s
        let vars = vec![
            Variable::binary("a"),
            Variable::binary("f"),
            Variable::binary("s"),
        ];
        let rows: Vec<Vec<State>> =
            vec![vec![1, 1, 1], vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]];
        Dataset::from_rows(vars, &rows).unwrap()
    }

    #[test]
    fn mle_hand_count() {
        let d = figure2_rows();
        let dag = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        let bn = fit_mle(&dag, &d, 0.0).unwrap();
        // parent config (a=1, f=1) -> index 3
        assert_eq!(bn.cpt(2).row(3), [0.5, 0.5]);
        assert_eq!(bn.cpt(2).row(1), [0.0, 1.0]);
        // unseen (a=0, f=0) with no smoothing -> uniform
        assert_eq!(bn.cpt(2).row(0), [0.5, 0.5]);
        // root rows are marginals
        assert_eq!(bn.cpt(0).row(0), [0.25, 0.75]);
    }

    #[test]
    fn smoothing_unseen_config_is_uniform() {
        let d = figure2_rows();
        let dag = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        let bn = fit_mle(&dag, &d, 0.5).unwrap();
        assert_eq!(bn.cpt(2).row(0), [0.5, 0.5]);
        // (a=1,f=1): counts (1,1) -> (1.5/3, 1.5/3)
        assert_relative_eq!(bn.cpt(2).row(3)[1], 0.5);
        // (a=0,f=1): counts (0,1) -> (0.5/2, 1.5/2)
        assert_relative_eq!(bn.cpt(2).row(1)[1], 0.75);
    }

    #[test]
    fn independent_pair_learns_no_edge() {
        let vars = vec![Variable::binary("a"), Variable::binary("b")];
        let rows: Vec<Vec<State>> = (0..4000u32).map(|i| vec![i % 2, (i / 2) % 2]).collect();
        let d = Dataset::from_rows(vars, &rows).unwrap();
        assert_eq!(learn_structure(&d, &[0, 1], 3).n_edges(), 0);
    }

    #[test]
    fn single_node() {
        let d = Dataset::from_rows(vec![Variable::binary("a")], &[vec![0], vec![1]]).unwrap();
        let dag = learn_structure(&d, &[0], 3);
        assert_eq!(dag.n_nodes(), 1);
        assert_eq!(dag.n_edges(), 0);
    }

    #[test]
    fn chain_skeleton_recovered() {
        let vars = vec![
            Variable::binary("a"),
            Variable::binary("b"),
            Variable::binary("c"),
        ];
        let dag = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let cpts = vec![
            Cpt::new(0, 2, vec![], vec![], vec![vec![0.6, 0.4]]).unwrap(),
            Cpt::new(
                1,
                2,
                vec![0],
                vec![2],
                vec![vec![0.8, 0.2], vec![0.25, 0.75]],
            )
            .unwrap(),
            Cpt::new(
                2,
                2,
                vec![1],
                vec![2],
                vec![vec![0.7, 0.3], vec![0.15, 0.85]],
            )
            .unwrap(),
        ];
        let bn = BayesianNetwork::new(vars, dag, cpts).unwrap();
        let d = forward_sample(&bn, 50_000, 4).unwrap();
        let learned = learn_structure(&d, &[0, 1, 2], 3);
        let mut skeleton: Vec<(usize, usize)> = learned
            .edges()
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        skeleton.sort_unstable();
        assert_eq!(skeleton, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn score_trace_monotone_and_respects_cap() {
        for seed in 0..5 {
            let bn = random_network(7, 4, 0.5, (0.1, 0.9), seed);
            let d = forward_sample(&bn, 3000, seed).unwrap();
            let nodes: Vec<usize> = (0..7).collect();
            let search = HillClimb {
                max_parents: 2,
                ..Default::default()
            }
            .run(&d, &nodes);
            assert!(search.trace.windows(2).all(|w| w[1] >= w[0]));
            assert!((0..7).all(|v| search.dag.parents(v).len() <= 2));
            assert_relative_eq!(
                search.score,
                *search.trace.last().unwrap(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn mle_maximizes_likelihood() {
        let bn = random_network(5, 2, 0.6, (0.1, 0.9), 3);
        let d = forward_sample(&bn, 400, 8).unwrap();
        let fitted = fit_mle(bn.dag(), &d, 0.0).unwrap();
        let best = log_likelihood(&fitted, &d);
        for v in 0..fitted.n_nodes() {
            for cfg in 0..fitted.cpt(v).n_rows() {
                for sign in [-1.0, 1.0] {
                    let mut perturbed = fitted.clone();
                    let p0 = (perturbed.cpt(v).row(cfg)[0] + sign * 0.01).clamp(0.0, 1.0);
                    perturbed.set_cpt_row(v, cfg, &[p0, 1.0 - p0]).unwrap();
                    assert!(log_likelihood(&perturbed, &d) <= best + 1e-9);
                }
            }
        }
    }
}
