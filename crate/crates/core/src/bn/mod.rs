//! Discrete Bayesian networks: representation, sampling, learning and exact inference.

mod dot;
mod infer;
mod learn;
pub mod oracle;
mod sample;

pub use dot::{to_dot, DotOptions};
pub use infer::{argmax, mpe_class, posterior, posterior_by_elimination, Evidence};
pub use learn::{
    bic_score, fit_mle, learn_structure, log_likelihood, HillClimb, StructureSearch,
    DEFAULT_MAX_PARENTS, DEFAULT_SMOOTHING,
};
pub(crate) use sample::draw;
pub use sample::forward_sample;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{index_by_name, State, Variable};
use crate::error::{Error, Result};

const ALARM_JSON: &str = include_str!("../../data/alarm.json");

/// Tolerance for CPT rows summing to one.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// Rows read from files may be off by printed-precision rounding up to this
/// much; they are renormalized on load.
pub const FILE_ROW_TOLERANCE: f64 = 1e-6;

fn renormalize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let sum: f64 = row.iter().sum();
            if sum > 0.0
                && (sum - 1.0).abs() > ROW_TOLERANCE
                && (sum - 1.0).abs() <= FILE_ROW_TOLERANCE
            {
                row.iter().map(|p| p / sum).collect()
            } else {
                row.clone()
            }
        })
        .collect()
}

/// Directed acyclic graph over nodes `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn new(n: usize) -> Self {
        Dag {
            parents: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut dag = Dag::new(n);
        for &(p, c) in edges {
            dag.add_edge(p, c)?;
        }
        Ok(dag)
    }

    pub fn n_nodes(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&c| self.parents[c].contains(&node))
            .collect()
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.parents[child].contains(&parent)
    }

    /// All edges `(parent, child)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect();
        e.sort_unstable();
        e
    }

    pub fn n_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// True when a directed path `from ⇝ to` exists.
    pub fn has_path(&self, from: usize, to: usize) -> bool {
        let n = self.n_nodes();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(children[v].iter().copied());
        }
        false
    }

    /// Adding `parent → child` keeps the graph acyclic.
    pub fn can_add(&self, parent: usize, child: usize) -> bool {
        parent != child && !self.has_edge(parent, child) && !self.has_path(child, parent)
    }

    pub fn add_edge(&mut self, parent: usize, child: usize) -> Result<()> {
        let n = self.n_nodes();
        if parent >= n || child >= n {
            return Err(Error::Data(format!(
                "edge {parent}->{child} out of range for {n} nodes"
            )));
        }
        if parent == child {
            return Err(Error::Data(format!("self-loop on node {parent}")));
        }
        if self.has_edge(parent, child) {
            return Err(Error::Data(format!("duplicate edge {parent}->{child}")));
        }
        if self.has_path(child, parent) {
            return Err(Error::Data(format!(
                "edge {parent}->{child} creates a cycle"
            )));
        }
        self.parents[child].push(parent);
        Ok(())
    }

    pub fn remove_edge(&mut self, parent: usize, child: usize) -> bool {
        let ps = &mut self.parents[child];
        match ps.iter().position(|&p| p == parent) {
            Some(i) => {
                ps.remove(i);
                true
            }
            None => false,
        }
    }

    /// Kahn's algorithm with smallest-id-first tie-breaking.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.n_nodes();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        debug_assert_eq!(order.len(), n, "graph has a cycle");
        order
    }

    /// Role of every node relative to `target`, read off the graph.
    pub fn roles(&self, target: usize) -> Vec<Option<Role>> {
        let mut roles = vec![None; self.n_nodes()];
        let children = self.children(target);
        for &c in &children {
            for &p in self.parents(c) {
                if p != target {
                    roles[p] = Some(Role::Spouse);
                }
            }
        }
        for &c in &children {
            roles[c] = Some(Role::Child);
        }
        for &p in self.parents(target) {
            roles[p] = Some(Role::Parent);
        }
        roles[target] = Some(Role::Target);
        roles
    }
}

/// Position of a node relative to an explained target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Parent,
    Child,
    Spouse,
}

/// Conditional probability table `P(node | parents)`.
///
/// Rows are indexed by the mixed-radix encoding of the parent states with the
/// first parent most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct Cpt {
    pub node: usize,
    pub parents: Vec<usize>,
    parent_cards: Vec<usize>,
    card: usize,
    table: Vec<f64>,
}

impl Cpt {
    pub fn new(
        node: usize,
        card: usize,
        parents: Vec<usize>,
        parent_cards: Vec<usize>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n_rows: usize = parent_cards.iter().product();
        if rows.len() != n_rows {
            return Err(Error::Data(format!(
                "cpt for node {node} has {} rows, expected {n_rows}",
                rows.len()
            )));
        }
        let mut table = Vec::with_capacity(n_rows * card);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != card {
                return Err(Error::Data(format!(
                    "cpt for node {node} row {i} has {} entries, expected {card}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::Data(format!(
                    "cpt for node {node} row {i} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Data(format!(
                    "cpt for node {node} row {i} sums to {sum}"
                )));
            }
            table.extend_from_slice(row);
        }
        Ok(Cpt {
            node,
            parents,
            parent_cards,
            card,
            table,
        })
    }

    pub fn cardinality(&self) -> usize {
        self.card
    }

    pub fn n_rows(&self) -> usize {
        self.table.len() / self.card
    }

    pub fn row(&self, config: usize) -> &[f64] {
        &self.table[config * self.card..(config + 1) * self.card]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.table.chunks(self.card).map(<[f64]>::to_vec).collect()
    }

    /// Parent configuration index of a full (or parent-covering) assignment.
    #[inline]
    pub fn config_index(&self, assignment: &[State]) -> usize {
        let mut idx = 0usize;
        for (&p, &card) in self.parents.iter().zip(&self.parent_cards) {
            idx = idx * card + assignment[p] as usize;
        }
        idx
    }

    #[inline]
    pub fn prob(&self, assignment: &[State]) -> f64 {
        self.table[self.config_index(assignment) * self.card + assignment[self.node] as usize]
    }

    fn set_row(&mut self, config: usize, row: &[f64]) {
        self.table[config * self.card..(config + 1) * self.card].copy_from_slice(row);
    }
}

/// A DAG with one CPT per node.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesianNetwork {
    variables: Vec<Variable>,
    dag: Dag,
    cpts: Vec<Cpt>,
}

impl BayesianNetwork {
    pub fn new(variables: Vec<Variable>, dag: Dag, cpts: Vec<Cpt>) -> Result<Self> {
        if variables.len() != dag.n_nodes() || cpts.len() != dag.n_nodes() {
            return Err(Error::Data(format!(
                "network has {} variables, {} nodes and {} cpts",
                variables.len(),
                dag.n_nodes(),
                cpts.len()
            )));
        }
        for (v, cpt) in cpts.iter().enumerate() {
            if cpt.node != v || cpt.parents != dag.parents(v) {
                return Err(Error::Data(format!(
                    "cpt for `{}` does not match the graph's parents",
                    variables[v].name()
                )));
            }
            if cpt.card != variables[v].cardinality() {
                return Err(Error::Data(format!(
                    "cpt for `{}` has the wrong cardinality",
                    variables[v].name()
                )));
            }
            let expected: Vec<usize> = cpt
                .parents
                .iter()
                .map(|&p| variables[p].cardinality())
                .collect();
            if expected != cpt.parent_cards {
                return Err(Error::Data(format!(
                    "cpt for `{}` has wrong parent cardinalities",
                    variables[v].name()
                )));
            }
        }
        Ok(BayesianNetwork {
            variables,
            dag,
            cpts,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, node: usize) -> &Variable {
        &self.variables[node]
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn cpt(&self, node: usize) -> &Cpt {
        &self.cpts[node]
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    /// Replaces one CPT row; the row must be a distribution over the node's states.
    pub fn set_cpt_row(&mut self, node: usize, config: usize, row: &[f64]) -> Result<()> {
        let cpt = &mut self.cpts[node];
        if config >= cpt.n_rows() || row.len() != cpt.card {
            return Err(Error::Data(format!(
                "row {config} of node {node} does not exist or has the wrong width"
            )));
        }
        if row.iter().any(|p| !(*p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE
        {
            return Err(Error::Data(format!(
                "row {config} of node {node} is not a distribution"
            )));
        }
        cpt.set_row(config, row);
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.variables.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        index_by_name(&self.variables, name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Product of CPT entries for a full assignment.
    pub fn joint_probability(&self, assignment: &[State]) -> f64 {
        assert_eq!(assignment.len(), self.n_nodes(), "assignment must be full");
        self.cpts.iter().map(|c| c.prob(assignment)).product()
    }

    pub fn log_joint(&self, assignment: &[State]) -> f64 {
        self.cpts.iter().map(|c| c.prob(assignment).ln()).sum()
    }

    /// Total number of free parameters, `Σ (r - 1) · q`.
    pub fn free_parameters(&self) -> usize {
        self.cpts.iter().map(|c| (c.card - 1) * c.n_rows()).sum()
    }

    pub fn to_file(&self) -> NetworkFile {
        let mut edges = Vec::new();
        let mut cpts = BTreeMap::new();
        for (v, cpt) in self.cpts.iter().enumerate() {
            for &p in &cpt.parents {
                edges.push([
                    self.variables[p].name().to_string(),
                    self.variables[v].name().to_string(),
                ]);
            }
            cpts.insert(self.variables[v].name().to_string(), cpt.rows());
        }
        NetworkFile {
            variables: self
                .variables
                .iter()
                .map(|v| VariableSpec {
                    name: v.name().to_string(),
                    states: v.states().to_vec(),
                })
                .collect(),
            edges,
            cpts,
        }
    }

    pub fn from_file(file: &NetworkFile) -> Result<Self> {
        let schema = |location: String, message: String| Error::Schema { location, message };
        let mut variables = Vec::with_capacity(file.variables.len());
        for (i, v) in file.variables.iter().enumerate() {
            let var = Variable::new(v.name.clone(), v.states.clone())
                .map_err(|e| schema(format!("variables[{i}]"), e.to_string()))?;
            variables.push(var);
        }
        let names: BTreeSet<&str> = variables.iter().map(|v| v.name()).collect();
        if names.len() != variables.len() {
            return Err(schema(
                "variables".into(),
                "duplicate variable names".into(),
            ));
        }
        let lookup = |name: &str, loc: String| {
            variables
                .iter()
                .position(|v| v.name() == name)
                .ok_or_else(|| schema(loc, format!("unknown variable `{name}`")))
        };
        let mut dag = Dag::new(variables.len());
        for (i, [p, c]) in file.edges.iter().enumerate() {
            let pi = lookup(p, format!("edges[{i}]"))?;
            let ci = lookup(c, format!("edges[{i}]"))?;
            dag.add_edge(pi, ci)
                .map_err(|e| schema(format!("edges[{i}]"), e.to_string()))?;
        }
        for name in file.cpts.keys() {
            lookup(name, format!("cpts.{name}"))?;
        }
        let mut cpts = Vec::with_capacity(variables.len());
        for (v, var) in variables.iter().enumerate() {
            let rows = file
                .cpts
                .get(var.name())
                .ok_or_else(|| schema(format!("cpts.{}", var.name()), "missing cpt".into()))?;
            let parents = dag.parents(v).to_vec();
            let cards = parents
                .iter()
                .map(|&p| variables[p].cardinality())
                .collect();
            let cpt = Cpt::new(v, var.cardinality(), parents, cards, renormalize(rows))
                .map_err(|e| schema(format!("cpts.{}", var.name()), e.to_string()))?;
            cpts.push(cpt);
        }
        BayesianNetwork::new(variables, dag, cpts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::Schema {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        Self::from_file(&file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Schema { location, message } => Error::Schema {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })
    }

    /// The bundled 37-node ALARM monitoring network.
    pub fn alarm() -> Self {
        Self::from_json(ALARM_JSON).expect("bundled ALARM network is valid")
    }

    /// Resolves `alarm` to the bundled network, anything else as a file path.
    pub fn by_name_or_path(spec: &str) -> Result<Self> {
        if spec.eq_ignore_ascii_case("alarm") {
            Ok(Self::alarm())
        } else {
            Self::load(spec)
        }
    }
}

impl Serialize for BayesianNetwork {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BayesianNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = NetworkFile::deserialize(d)?;
        BayesianNetwork::from_file(&file).map_err(serde::de::Error::custom)
    }
}

/// On-disk network format.
///
/// Parent order for a node is the order its incoming edges appear in
/// `edges`; CPT rows follow that order with the first parent most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub variables: Vec<VariableSpec>,
    pub edges: Vec<[String; 2]>,
    pub cpts: BTreeMap<String, Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub states: Vec<String>,
}
