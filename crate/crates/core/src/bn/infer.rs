use super::BayesianNetwork;
use crate::dataset::State;
use crate::error::{Error, Result};

/// Partial assignment, one slot per network node.
pub type Evidence = [Option<State>];

/// Joint configurations above this count switch enumeration to variable elimination.
const ENUMERATION_LIMIT: usize = 1 << 20;

/// Exact `P(target | evidence)`.
///
/// Nodes that are neither ancestors of the target nor of the evidence are
/// barren and summed out implicitly. Small queries are answered by direct
/// enumeration; large ones by variable elimination.
pub fn posterior(bn: &BayesianNetwork, target: usize, evidence: &Evidence) -> Result<Vec<f64>> {
    check_query(bn, target, evidence)?;
    let relevant = relevant_nodes(bn, target, evidence);
    let hidden: Vec<usize> = relevant
        .iter()
        .copied()
        .filter(|&v| v != target && evidence[v].is_none())
        .collect();
    let size = hidden
        .iter()
        .try_fold(bn.variable(target).cardinality(), |acc, &v| {
            acc.checked_mul(bn.variable(v).cardinality())
        });
    match size {
        Some(s) if s <= ENUMERATION_LIMIT => enumerate(bn, target, evidence, &relevant, &hidden),
        _ => posterior_by_elimination(bn, target, evidence),
    }
}

/// Most probable target state; ties go to the lowest index.
pub fn mpe_class(bn: &BayesianNetwork, target: usize, evidence: &Evidence) -> Result<State> {
    Ok(argmax(&posterior(bn, target, evidence)?))
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(probs: &[f64]) -> State {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best as State
}

fn check_query(bn: &BayesianNetwork, target: usize, evidence: &Evidence) -> Result<()> {
    if evidence.len() != bn.n_nodes() {
        return Err(Error::Data(format!(
            "evidence has {} slots for {} nodes",
            evidence.len(),
            bn.n_nodes()
        )));
    }
    if evidence[target].is_some() {
        return Err(Error::Data(format!(
            "target `{}` is assigned in the evidence",
            bn.variable(target).name()
        )));
    }
    for (v, e) in evidence.iter().enumerate() {
        if let Some(s) = e {
            if *s as usize >= bn.variable(v).cardinality() {
                return Err(Error::Data(format!(
                    "evidence state {s} out of range for `{}`",
                    bn.variable(v).name()
                )));
            }
        }
    }
    Ok(())
}

fn describe(bn: &BayesianNetwork, evidence: &Evidence) -> String {
    let parts: Vec<String> = evidence
        .iter()
        .enumerate()
        .filter_map(|(v, e)| {
            e.map(|s| {
                let var = bn.variable(v);
                format!("{}={}", var.name(), var.state_label(s))
            })
        })
        .collect();
    if parts.is_empty() {
        "{}".into()
    } else {
        parts.join(", ")
    }
}

/// Ancestral closure of the target and the observed nodes, ascending.
fn relevant_nodes(bn: &BayesianNetwork, target: usize, evidence: &Evidence) -> Vec<usize> {
    let mut keep = vec![false; bn.n_nodes()];
    let mut stack: Vec<usize> = std::iter::once(target)
        .chain((0..bn.n_nodes()).filter(|&v| evidence[v].is_some()))
        .collect();
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut keep[v], true) {
            continue;
        }
        stack.extend(bn.dag().parents(v).iter().copied());
    }
    (0..bn.n_nodes()).filter(|&v| keep[v]).collect()
}

fn enumerate(
    bn: &BayesianNetwork,
    target: usize,
    evidence: &Evidence,
    relevant: &[usize],
    hidden: &[usize],
) -> Result<Vec<f64>> {
    let mut assignment: Vec<State> = evidence.iter().map(|e| e.unwrap_or(0)).collect();
    let t_card = bn.variable(target).cardinality();
    let mut out = vec![0.0; t_card];
    for (t, slot) in out.iter_mut().enumerate() {
        assignment[target] = t as State;
        for &h in hidden {
            assignment[h] = 0;
        }
        loop {
            let p: f64 = relevant
                .iter()
                .map(|&v| bn.cpt(v).prob(&assignment))
                .product();
            *slot += p;
            // odometer over hidden nodes
            let mut i = 0;
            while i < hidden.len() {
                let h = hidden[i];
                assignment[h] += 1;
                if (assignment[h] as usize) < bn.variable(h).cardinality() {
                    break;
                }
                assignment[h] = 0;
                i += 1;
            }
            if i == hidden.len() {
                break;
            }
        }
    }
    normalize(bn, evidence, out)
}

fn normalize(bn: &BayesianNetwork, evidence: &Evidence, mut probs: Vec<f64>) -> Result<Vec<f64>> {
    let z: f64 = probs.iter().sum();
    if !(z > 0.0) {
        return Err(Error::ZeroProbability(describe(bn, evidence)));
    }
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(probs)
}

/// Table over a sorted set of variables, first variable most significant.
#[derive(Clone, Debug)]
struct Factor {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.vars.len()];
        for i in (0..self.vars.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.cards[i + 1];
        }
        s
    }

    fn from_cpt(bn: &BayesianNetwork, node: usize, evidence: &Evidence) -> Factor {
        let cpt = bn.cpt(node);
        let mut scope: Vec<usize> = cpt.parents.clone();
        scope.push(node);
        let mut vars: Vec<usize> = scope
            .iter()
            .copied()
            .filter(|&v| evidence[v].is_none())
            .collect();
        vars.sort_unstable();
        let cards: Vec<usize> = vars.iter().map(|&v| bn.variable(v).cardinality()).collect();
        let size: usize = cards.iter().product();
        let mut assignment: Vec<State> = evidence.iter().map(|e| e.unwrap_or(0)).collect();
        let mut values = Vec::with_capacity(size);
        let mut idx = vec![0usize; vars.len()];
        for _ in 0..size {
            for (&v, &s) in vars.iter().zip(&idx) {
                assignment[v] = s as State;
            }
            values.push(cpt.prob(&assignment));
            advance(&mut idx, &cards);
        }
        Factor {
            vars,
            cards,
            values,
        }
    }

    fn product(&self, other: &Factor) -> Factor {
        let mut vars: Vec<usize> = self.vars.iter().chain(&other.vars).copied().collect();
        vars.sort_unstable();
        vars.dedup();
        let card_of = |v: usize| {
            self.vars
                .iter()
                .position(|&x| x == v)
                .map(|i| self.cards[i])
                .unwrap_or_else(|| other.cards[other.vars.iter().position(|&x| x == v).unwrap()])
        };
        let cards: Vec<usize> = vars.iter().map(|&v| card_of(v)).collect();
        let map_strides = |f: &Factor| -> Vec<usize> {
            let s = f.strides();
            vars.iter()
                .map(|v| f.vars.iter().position(|x| x == v).map_or(0, |i| s[i]))
                .collect()
        };
        let sa = map_strides(self);
        let sb = map_strides(other);
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut idx = vec![0usize; vars.len()];
        for _ in 0..size {
            let ia: usize = idx.iter().zip(&sa).map(|(i, s)| i * s).sum();
            let ib: usize = idx.iter().zip(&sb).map(|(i, s)| i * s).sum();
            values.push(self.values[ia] * other.values[ib]);
            advance(&mut idx, &cards);
        }
        Factor {
            vars,
            cards,
            values,
        }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let pos = self
            .vars
            .iter()
            .position(|&v| v == var)
            .expect("var in scope");
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        let size: usize = cards.iter().product();
        let mut values = vec![0.0; size];
        let mut idx = vec![0usize; self.vars.len()];
        for &val in &self.values {
            let mut out = 0usize;
            for (i, &s) in idx.iter().enumerate() {
                if i != pos {
                    out = out * self.cards[i] + s;
                }
            }
            values[out] += val;
            advance(&mut idx, &self.cards);
        }
        Factor {
            vars,
            cards,
            values,
        }
    }
}

fn advance(idx: &mut [usize], cards: &[usize]) {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < cards[i] {
            return;
        }
        idx[i] = 0;
    }
}

/// Variable elimination with a greedy smallest-intermediate-factor order.
pub fn posterior_by_elimination(
    bn: &BayesianNetwork,
    target: usize,
    evidence: &Evidence,
) -> Result<Vec<f64>> {
    check_query(bn, target, evidence)?;
    let relevant = relevant_nodes(bn, target, evidence);
    let mut factors: Vec<Factor> = relevant
        .iter()
        .map(|&v| Factor::from_cpt(bn, v, evidence))
        .collect();
    let mut hidden: Vec<usize> = relevant
        .iter()
        .copied()
        .filter(|&v| v != target && evidence[v].is_none())
        .collect();

    while !hidden.is_empty() {
        // pick the variable whose elimination creates the smallest factor
        let (pick, _) = hidden
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let mut scope: Vec<usize> = factors
                    .iter()
                    .filter(|f| f.vars.contains(&h))
                    .flat_map(|f| f.vars.iter().copied())
                    .collect();
                scope.sort_unstable();
                scope.dedup();
                let size: f64 = scope
                    .iter()
                    .map(|&v| bn.variable(v).cardinality() as f64)
                    .product();
                (i, size)
            })
            .fold(
                (0, f64::INFINITY),
                |best, cur| if cur.1 < best.1 { cur } else { best },
            );
        let h = hidden.remove(pick);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&h));
        factors = rest;
        if let Some(first) = touching.first() {
            let merged = touching[1..]
                .iter()
                .fold(first.clone(), |acc, f| acc.product(f));
            factors.push(merged.sum_out(h));
        }
    }

    let joint = factors
        .iter()
        .skip(1)
        .fold(factors[0].clone(), |acc, f| acc.product(f));
    let t_card = bn.variable(target).cardinality();
    let probs: Vec<f64> = if joint.vars.is_empty() {
        vec![joint.values[0]; t_card]
    } else {
        debug_assert_eq!(joint.vars, vec![target]);
        joint.values
    };
    normalize(bn, evidence, probs)
}
