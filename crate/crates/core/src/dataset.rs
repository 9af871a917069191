//! Categorical tables: ingestion, discretization, splitting and marginals.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Index of a variable (column) within a [`Dataset`].
pub type VarId = usize;
/// Index of a state within a [`Variable`].
pub type State = u32;

/// Columns with more distinct numeric values than this are treated as
/// continuous when no schema is declared.
pub const MAX_CATEGORICAL_STATES: usize = 20;

/// Default number of equal-width bins for continuous columns.
pub const DEFAULT_BINS: usize = 20;

pub(crate) const SENTINEL_STATE: &str = "<unobserved>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    #[default]
    Categorical,
    /// Raw numeric column awaiting [`discretize`]. State labels are the
    /// distinct observed values in ascending order.
    Numeric,
}

/// A named discrete random variable with ordered state labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    name: String,
    states: Vec<String>,
    #[serde(default, skip_serializing_if = "is_categorical")]
    kind: VariableKind,
}

fn is_categorical(kind: &VariableKind) -> bool {
    *kind == VariableKind::Categorical
}

impl Variable {
    pub fn new(name: impl Into<String>, states: Vec<String>) -> Result<Self> {
        Self::with_kind(name, states, VariableKind::Categorical)
    }

    pub fn with_kind(
        name: impl Into<String>,
        states: Vec<String>,
        kind: VariableKind,
    ) -> Result<Self> {
        let name = name.into();
        if states.len() < 2 {
            return Err(Error::Data(format!(
                "variable `{name}` needs at least 2 states, got {}",
                states.len()
            )));
        }
        let unique: BTreeSet<&String> = states.iter().collect();
        if unique.len() != states.len() {
            return Err(Error::Data(format!(
                "variable `{name}` has duplicate state labels"
            )));
        }
        Ok(Variable { name, states, kind })
    }

    /// Binary variable with states `"0"` and `"1"`.
    pub fn binary(name: impl Into<String>) -> Self {
        Self::with_cardinality(name, 2)
    }

    /// Variable with states `"0"`, `"1"`, ... `"card-1"`.
    pub fn with_cardinality(name: impl Into<String>, card: usize) -> Self {
        let states = (0..card.max(2)).map(|s| s.to_string()).collect();
        Variable {
            name: name.into(),
            states,
            kind: VariableKind::Categorical,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn cardinality(&self) -> usize {
        self.states.len()
    }

    pub fn kind(&self) -> VariableKind {
        self.kind
    }

    pub fn state_index(&self, label: &str) -> Option<State> {
        self.states
            .iter()
            .position(|s| s == label)
            .map(|i| i as State)
    }

    pub fn state_label(&self, state: State) -> &str {
        &self.states[state as usize]
    }
}

/// An immutable table of state indices, one column per [`Variable`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    variables: Vec<Variable>,
    cells: Vec<State>,
    n_rows: usize,
}

impl Dataset {
    /// Builds a dataset from row-major cells, validating every cell.
    pub fn new(variables: Vec<Variable>, cells: Vec<State>) -> Result<Self> {
        let width = variables.len();
        if width == 0 {
            return Err(Error::Empty("dataset has no variables".into()));
        }
        if cells.len() % width != 0 {
            return Err(Error::Data(format!(
                "cell count {} is not a multiple of width {width}",
                cells.len()
            )));
        }
        let names: BTreeSet<&str> = variables.iter().map(|v| v.name()).collect();
        if names.len() != width {
            return Err(Error::Data("duplicate variable names".into()));
        }
        let n_rows = cells.len() / width;
        for (i, &cell) in cells.iter().enumerate() {
            let var = &variables[i % width];
            if cell as usize >= var.cardinality() {
                return Err(Error::Data(format!(
                    "row {} column `{}`: state {cell} out of range (cardinality {})",
                    i / width,
                    var.name(),
                    var.cardinality()
                )));
            }
        }
        Ok(Dataset {
            variables,
            cells,
            n_rows,
        })
    }

    pub fn from_rows(variables: Vec<Variable>, rows: &[Vec<State>]) -> Result<Self> {
        let width = variables.len();
        let mut cells = Vec::with_capacity(rows.len() * width);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Parse {
                    row: r,
                    message: format!("expected {width} values, got {}", row.len()),
                });
            }
            cells.extend_from_slice(row);
        }
        Self::new(variables, cells)
    }

    /// Empty dataset with the given schema.
    pub fn empty(variables: Vec<Variable>) -> Self {
        Dataset {
            variables,
            cells: Vec::new(),
            n_rows: 0,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id]
    }

    pub fn cardinality(&self, id: VarId) -> usize {
        self.variables[id].cardinality()
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name()).collect()
    }

    pub fn row(&self, r: usize) -> &[State] {
        let w = self.n_vars();
        &self.cells[r * w..(r + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[State]> {
        self.cells.chunks_exact(self.n_vars())
    }

    #[inline]
    pub fn get(&self, r: usize, c: VarId) -> State {
        self.cells[r * self.variables.len() + c]
    }

    pub fn column(&self, c: VarId) -> Vec<State> {
        self.rows().map(|row| row[c]).collect()
    }

    /// Looks up a variable by exact name, falling back to a unique
    /// case-insensitive match.
    pub fn index_of(&self, name: &str) -> Option<VarId> {
        index_by_name(&self.variables, name)
    }

    pub fn require(&self, name: &str) -> Result<VarId> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let mut cells = Vec::with_capacity(indices.len() * self.n_vars());
        for &i in indices {
            cells.extend_from_slice(self.row(i));
        }
        Dataset {
            variables: self.variables.clone(),
            cells,
            n_rows: indices.len(),
        }
    }

    /// Projects onto `columns`, in the given order.
    pub fn select_columns(&self, columns: &[VarId]) -> Dataset {
        let variables = columns.iter().map(|&c| self.variables[c].clone()).collect();
        let mut cells = Vec::with_capacity(self.n_rows * columns.len());
        for row in self.rows() {
            cells.extend(columns.iter().map(|&c| row[c]));
        }
        Dataset {
            variables,
            cells,
            n_rows: self.n_rows,
        }
    }

    /// Drops one column.
    pub fn without_column(&self, drop: VarId) -> Dataset {
        let keep: Vec<VarId> = (0..self.n_vars()).filter(|&c| c != drop).collect();
        self.select_columns(&keep)
    }

    /// Appends a column, returning a new dataset.
    pub fn with_column(&self, variable: Variable, values: &[State]) -> Result<Dataset> {
        if values.len() != self.n_rows {
            return Err(Error::Data(format!(
                "new column `{}` has {} values for {} rows",
                variable.name(),
                values.len(),
                self.n_rows
            )));
        }
        let mut variables = self.variables.clone();
        variables.push(variable);
        let mut cells = Vec::with_capacity(self.n_rows * variables.len());
        for (row, &v) in self.rows().zip(values) {
            cells.extend_from_slice(row);
            cells.push(v);
        }
        Dataset::new(variables, cells)
    }

    /// Maps this dataset's labels onto another schema with the same variable
    /// names (e.g. a test split loaded separately from its training split).
    pub fn conform_to(&self, schema: &[Variable]) -> Result<Dataset> {
        let mut maps = Vec::with_capacity(schema.len());
        for target in schema {
            let src = self.require(target.name())?;
            let table: Vec<Option<State>> = self.variables[src]
                .states()
                .iter()
                .map(|label| target.state_index(label))
                .collect();
            maps.push((src, table));
        }
        let mut cells = Vec::with_capacity(self.n_rows * schema.len());
        for (r, row) in self.rows().enumerate() {
            for (target, (src, table)) in schema.iter().zip(&maps) {
                let state = table[row[*src] as usize].ok_or_else(|| Error::Parse {
                    row: r + 2,
                    message: format!(
                        "value `{}` of `{}` is not a known state",
                        self.variables[*src].state_label(row[*src]),
                        target.name()
                    ),
                })?;
                cells.push(state);
            }
        }
        Dataset::new(schema.to_vec(), cells)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
            .map_err(|e| match e {
                Error::Io { source, .. } => Error::io(path, source),
                other => other,
            })
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let csv_err = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
        w.write_record(self.variables.iter().map(|v| v.name()))
            .map_err(csv_err)?;
        for row in self.rows() {
            w.write_record(
                row.iter()
                    .zip(&self.variables)
                    .map(|(&s, v)| v.state_label(s)),
            )
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("labels are utf-8")
    }
}

pub(crate) fn index_by_name(variables: &[Variable], name: &str) -> Option<VarId> {
    if let Some(i) = variables.iter().position(|v| v.name() == name) {
        return Some(i);
    }
    let mut hits = variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.name().eq_ignore_ascii_case(name));
    match (hits.next(), hits.next()) {
        (Some((i, _)), None) => Some(i),
        _ => None,
    }
}

/// Declared column types; undeclared columns are inferred.
pub type Schema = BTreeMap<String, VariableKind>;

/// Reads a CSV file with a header row.
///
/// A column is numeric when every value parses as a number and it has more
/// than [`MAX_CATEGORICAL_STATES`] distinct values, unless `schema` says
/// otherwise. Empty cells are rejected.
pub fn load_csv(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: Option<&Schema>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Empty("csv has no header".into()));
    }
    let width = headers.len();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); width];
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row: line,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                row: line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let field = field.trim();
            if field.is_empty() {
                return Err(Error::Parse {
                    row: line,
                    message: format!("missing value in column `{}`", headers[c]),
                });
            }
            raw[c].push(field.to_string());
        }
    }
    let n_rows = raw[0].len();
    if n_rows == 0 {
        return Err(Error::Empty("csv has a header but no rows".into()));
    }

    let mut variables = Vec::with_capacity(width);
    let mut columns: Vec<Vec<State>> = Vec::with_capacity(width);
    for (name, values) in headers.iter().zip(&raw) {
        let declared = schema.and_then(|s| s.get(name)).copied();
        let (variable, column) = encode_column(name, values, declared)?;
        variables.push(variable);
        columns.push(column);
    }
    let mut cells = Vec::with_capacity(n_rows * width);
    for r in 0..n_rows {
        cells.extend(columns.iter().map(|col| col[r]));
    }
    Dataset::new(variables, cells)
}

fn encode_column(
    name: &str,
    values: &[String],
    declared: Option<VariableKind>,
) -> Result<(Variable, Vec<State>)> {
    let numeric: Option<Vec<f64>> = values.iter().map(|v| v.parse::<f64>().ok()).collect();
    let distinct: BTreeSet<&str> = values.iter().map(String::as_str).collect();
    let kind = match declared {
        Some(VariableKind::Numeric) if numeric.is_none() => {
            return Err(Error::Data(format!(
                "column `{name}` declared numeric but has non-numeric values"
            )))
        }
        Some(kind) => kind,
        None if numeric.is_some() && distinct.len() > MAX_CATEGORICAL_STATES => {
            VariableKind::Numeric
        }
        None => VariableKind::Categorical,
    };

    let mut states: Vec<String> = distinct.iter().map(|s| s.to_string()).collect();
    if let Some(nums) = &numeric {
        // numeric-looking labels sort by value
        let mut pairs: Vec<(f64, &String)> = nums.iter().copied().zip(values).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        pairs.dedup_by(|a, b| a.1 == b.1);
        states = pairs.into_iter().map(|(_, s)| s.clone()).collect();
    }
    if states.len() == 1 {
        log::warn!("column `{name}` is constant; adding sentinel state `{SENTINEL_STATE}`");
        states.push(SENTINEL_STATE.to_string());
    }
    let lookup: HashMap<&str, State> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as State))
        .collect();
    let column = values.iter().map(|v| lookup[v.as_str()]).collect();
    Ok((Variable::with_kind(name, states, kind)?, column))
}

/// Equal-width bin edges for each discretized column, keyed by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscretizationSpec {
    pub edges: BTreeMap<String, Vec<f64>>,
}

impl DiscretizationSpec {
    pub fn bins(&self, feature: &str) -> Option<usize> {
        self.edges.get(feature).map(|e| e.len() - 1)
    }

    /// Maps a raw value to its bin, clamping values outside the edges.
    pub fn bin_of(edges: &[f64], value: f64) -> State {
        let bins = edges.len() - 1;
        let lo = edges[0];
        let hi = edges[bins];
        if value.is_nan() || value <= lo {
            return 0;
        }
        if value >= hi {
            return (bins - 1) as State;
        }
        // equal width, but walk the edges to stay exact at boundaries
        let width = (hi - lo) / bins as f64;
        let mut idx = (((value - lo) / width).floor() as usize).min(bins - 1);
        while idx > 0 && value < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < bins && value >= edges[idx + 1] {
            idx += 1;
        }
        idx as State
    }

    /// Applies the stored binning to every matching column whose labels are
    /// numeric. Other columns pass through unchanged.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let mut variables = data.variables().to_vec();
        let mut remap: Vec<Option<Vec<State>>> = vec![None; data.n_vars()];
        for (c, var) in data.variables().iter().enumerate() {
            let Some(edges) = self.edges.get(var.name()) else {
                continue;
            };
            let mut table = Vec::with_capacity(var.cardinality());
            for label in var.states() {
                match label.parse::<f64>() {
                    Ok(v) => table.push(Self::bin_of(edges, v)),
                    Err(_) if label == SENTINEL_STATE => table.push(0),
                    Err(_) => {
                        return Err(Error::Data(format!(
                            "column `{}` value `{label}` is not numeric",
                            var.name()
                        )))
                    }
                }
            }
            variables[c] = Variable::new(var.name(), bin_labels(edges))?;
            remap[c] = Some(table);
        }
        let mut cells = Vec::with_capacity(data.n_rows() * data.n_vars());
        for row in data.rows() {
            for (c, &s) in row.iter().enumerate() {
                cells.push(match &remap[c] {
                    Some(table) => table[s as usize],
                    None => s,
                });
            }
        }
        Dataset::new(variables, cells)
    }
}

fn bin_labels(edges: &[f64]) -> Vec<String> {
    let bins = edges.len() - 1;
    (0..bins)
        .map(|i| {
            let close = if i + 1 == bins { ']' } else { ')' };
            format!("[{},{}{close}", fmt_edge(edges[i]), fmt_edge(edges[i + 1]))
        })
        .collect()
}

fn fmt_edge(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Replaces every numeric column with `bins` equal-width bins over its
/// observed range.
pub fn discretize(data: &Dataset, bins: usize) -> Result<(Dataset, DiscretizationSpec)> {
    if bins < 2 {
        return Err(Error::Config(format!("bins must be >= 2, got {bins}")));
    }
    let mut spec = DiscretizationSpec::default();
    for var in data.variables() {
        if var.kind() != VariableKind::Numeric {
            continue;
        }
        let values: Vec<f64> = var
            .states()
            .iter()
            .filter_map(|s| s.parse::<f64>().ok())
            .collect();
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let edges = if lo < hi {
            let width = (hi - lo) / bins as f64;
            let mut e: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
            e[bins] = hi;
            e
        } else {
            log::warn!(
                "numeric column `{}` is constant; using a 2-state variable with a sentinel bin",
                var.name()
            );
            vec![lo, lo + 1.0, lo + 2.0]
        };
        spec.edges.insert(var.name().to_string(), edges);
    }
    let out = spec.apply(data)?;
    Ok((out, spec))
}

/// Deterministic shuffled split into `(train, test)`.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let (train_idx, test_idx) = split_indices(data.n_rows(), train_fraction, seed);
    Ok((data.select_rows(&train_idx), data.select_rows(&test_idx)))
}

pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let test = idx.split_off(n_train.min(n));
    (idx, test)
}

/// Empirical marginal distribution of every variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub marginals: Vec<Vec<f64>>,
}

impl FrequencyTable {
    pub fn marginal(&self, id: VarId) -> &[f64] {
        &self.marginals[id]
    }

    pub fn n_vars(&self) -> usize {
        self.marginals.len()
    }
}

pub fn frequency_table(data: &Dataset) -> Result<FrequencyTable> {
    if data.n_rows() == 0 {
        return Err(Error::Empty("frequency table of an empty dataset".into()));
    }
    let mut counts: Vec<Vec<u64>> = data
        .variables()
        .iter()
        .map(|v| vec![0; v.cardinality()])
        .collect();
    for row in data.rows() {
        for (c, &s) in row.iter().enumerate() {
            counts[c][s as usize] += 1;
        }
    }
    let k = data.n_rows() as f64;
    let marginals = counts
        .into_iter()
        .map(|col| col.into_iter().map(|n| n as f64 / k).collect())
        .collect();
    Ok(FrequencyTable { marginals })
}
