//! Brute-force and graph-theoretic reference routines.
//!
//! These deliberately avoid the fast paths in [`super::posterior`] so tests
//! can compare the two.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{BayesianNetwork, Cpt, Dag, Evidence};
use crate::dataset::{State, Variable};
use crate::error::{Error, Result};
use crate::seed;

/// Exhaustive queries refuse networks above this many binary-equivalent nodes.
pub const MAX_EXHAUSTIVE_BITS: f64 = 20.0;

/// Parents, children and co-parents of `target`, read off the graph.
pub fn dsep_blanket(dag: &Dag, target: usize) -> BTreeSet<usize> {
    let mut mb: BTreeSet<usize> = dag.parents(target).iter().copied().collect();
    for c in dag.children(target) {
        mb.insert(c);
        mb.extend(dag.parents(c).iter().copied());
    }
    mb.remove(&target);
    mb
}

/// d-separation of `x` and `y` given `z` (reachability / "Bayes ball").
pub fn d_separated(dag: &Dag, x: usize, y: usize, z: &[usize]) -> bool {
    let n = dag.n_nodes();
    let observed: Vec<bool> = (0..n).map(|v| z.contains(&v)).collect();
    // ancestors of the conditioning set, for collider activation
    let mut anc = vec![false; n];
    let mut stack: Vec<usize> = z.to_vec();
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut anc[v], true) {
            continue;
        }
        stack.extend(dag.parents(v).iter().copied());
    }
    let children: Vec<Vec<usize>> = (0..n).map(|v| dag.children(v)).collect();

    // (node, arrived_from_child)
    let mut visited = BTreeSet::new();
    let mut queue = vec![(x, true)];
    while let Some((v, up)) = queue.pop() {
        if !visited.insert((v, up)) {
            continue;
        }
        if v == y && !observed[v] {
            return false;
        }
        if up && !observed[v] {
            for &p in dag.parents(v) {
                queue.push((p, true));
            }
            for &c in &children[v] {
                queue.push((c, false));
            }
        } else if !up {
            if !observed[v] {
                for &c in &children[v] {
                    queue.push((c, false));
                }
            }
            if anc[v] {
                for &p in dag.parents(v) {
                    queue.push((p, true));
                }
            }
        }
    }
    true
}

fn exhaustive_bits(bn: &BayesianNetwork) -> f64 {
    bn.variables()
        .iter()
        .map(|v| (v.cardinality() as f64).log2())
        .sum()
}

/// Sums the full joint over every assignment consistent with the evidence.
pub fn exhaustive_posterior(
    bn: &BayesianNetwork,
    target: usize,
    evidence: &Evidence,
) -> Result<Vec<f64>> {
    let bits = exhaustive_bits(bn);
    if bits > MAX_EXHAUSTIVE_BITS {
        return Err(Error::Refused(format!(
            "network has {bits:.1} binary-equivalent nodes; exhaustive mode allows at most {MAX_EXHAUSTIVE_BITS}"
        )));
    }
    let n = bn.n_nodes();
    let cards: Vec<usize> = bn.variables().iter().map(Variable::cardinality).collect();
    let total: usize = cards.iter().product();
    let mut probs = vec![0.0; cards[target]];
    let mut a: Vec<State> = vec![0; n];
    for _ in 0..total {
        let consistent = evidence
            .iter()
            .zip(&a)
            .all(|(e, &s)| e.is_none_or(|e| e == s));
        if consistent {
            probs[a[target] as usize] += bn.joint_probability(&a);
        }
        for i in 0..n {
            a[i] += 1;
            if (a[i] as usize) < cards[i] {
                break;
            }
            a[i] = 0;
        }
    }
    let z: f64 = probs.iter().sum();
    if !(z > 0.0) {
        return Err(Error::ZeroProbability("exhaustive enumeration".into()));
    }
    Ok(probs.into_iter().map(|p| p / z).collect())
}

/// Sum of the joint over all full assignments.
pub fn exhaustive_total(bn: &BayesianNetwork) -> Result<f64> {
    if exhaustive_bits(bn) > MAX_EXHAUSTIVE_BITS {
        return Err(Error::Refused(
            "network too large for exhaustive mode".into(),
        ));
    }
    let cards: Vec<usize> = bn.variables().iter().map(Variable::cardinality).collect();
    let total: usize = cards.iter().product();
    let mut a: Vec<State> = vec![0; cards.len()];
    let mut sum = 0.0;
    for _ in 0..total {
        sum += bn.joint_probability(&a);
        for i in 0..a.len() {
            a[i] += 1;
            if (a[i] as usize) < cards[i] {
                break;
            }
            a[i] = 0;
        }
    }
    Ok(sum)
}

/// Random DAG over `n` nodes: a random topological order, then each forward
/// pair becomes an edge with probability `edge_prob` while the child has
/// fewer than `max_parents` parents.
pub fn random_dag(n: usize, max_parents: usize, edge_prob: f64, seed: u64) -> Dag {
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut dag = Dag::new(n);
    for j in 1..n {
        for i in 0..j {
            let (p, c) = (order[i], order[j]);
            if dag.parents(c).len() < max_parents && rng.random_bool(edge_prob) {
                dag.add_edge(p, c)
                    .expect("forward edges keep the order acyclic");
            }
        }
    }
    dag
}

/// Random binary network whose CPT entries all lie in `bounds`.
pub fn random_network(
    n: usize,
    max_parents: usize,
    edge_prob: f64,
    bounds: (f64, f64),
    seed: u64,
) -> BayesianNetwork {
    let dag = random_dag(n, max_parents, edge_prob, seed);
    let mut rng = seed::rng(seed::derive(seed, 1));
    let variables: Vec<Variable> = (0..n).map(|i| Variable::binary(format!("X{i}"))).collect();
    let cpts = (0..n)
        .map(|v| {
            let parents = dag.parents(v).to_vec();
            let rows = (0..1usize << parents.len())
                .map(|_| {
                    let p = rng.random_range(bounds.0..=bounds.1);
                    vec![1.0 - p, p]
                })
                .collect();
            Cpt::new(v, 2, parents.clone(), vec![2; parents.len()], rows).expect("valid rows")
        })
        .collect();
    BayesianNetwork::new(variables, dag, cpts).expect("consistent network")
}
