//! Contingency tables and the Pearson chi-squared conditional-independence test.

mod gamma;

pub use gamma::{chi_square_sf, gamma_p, gamma_q, ln_gamma};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, State, VarId};

/// Significance level used for blanket induction.
pub const DEFAULT_ALPHA: f64 = 0.001;
/// A test is reliable when there are at least this many rows per degree of freedom.
pub const DEFAULT_ROWS_PER_CELL: f64 = 5.0;

const DENSE_LIMIT: usize = 1 << 20;

/// Sparse counts of `(x, y, z-stratum)` triples.
///
/// The stratum is the mixed-radix encoding of the conditioning variables'
/// states, first variable most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    pub x_card: usize,
    pub y_card: usize,
    /// Number of possible strata (product of conditioning cardinalities).
    pub strata: u64,
    /// Non-zero cells sorted by `(stratum, x, y)`.
    entries: Vec<(u64, State, State, u64)>,
    total: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn entries(&self) -> &[(u64, State, State, u64)] {
        &self.entries
    }

    pub fn get(&self, x: State, y: State, stratum: u64) -> u64 {
        self.entries
            .binary_search_by(|e| (e.0, e.1, e.2).cmp(&(stratum, x, y)))
            .map(|i| self.entries[i].3)
            .unwrap_or(0)
    }

    /// Number of strata with at least one row.
    pub fn occupied_strata(&self) -> usize {
        let mut n = 0;
        let mut last = None;
        for e in &self.entries {
            if last != Some(e.0) {
                n += 1;
                last = Some(e.0);
            }
        }
        n
    }

    /// Iterates occupied strata as slices of their non-zero cells.
    fn strata_slices(&self) -> impl Iterator<Item = &[(u64, State, State, u64)]> {
        self.entries.chunk_by(|a, b| a.0 == b.0)
    }
}

/// Builds the table in a single pass over the rows.
pub fn contingency(data: &Dataset, x: VarId, y: VarId, z: &[VarId]) -> ContingencyTable {
    assert_ne!(x, y, "x and y must differ");
    assert!(
        !z.contains(&x) && !z.contains(&y),
        "conditioning set must exclude x and y"
    );
    let x_card = data.cardinality(x);
    let y_card = data.cardinality(y);
    let strata: u64 = z.iter().map(|&v| data.cardinality(v) as u64).product();
    let cell = (x_card * y_card) as u64;
    let key_space = strata.saturating_mul(cell);

    let key_of = |row: &[State]| -> u64 {
        let mut s = 0u64;
        for &v in z {
            s = s * data.cardinality(v) as u64 + row[v] as u64;
        }
        s * cell + row[x] as u64 * y_card as u64 + row[y] as u64
    };

    let mut entries: Vec<(u64, State, State, u64)> = Vec::new();
    let decode = |key: u64, n: u64| {
        let stratum = key / cell;
        let rem = key % cell;
        (
            stratum,
            (rem / y_card as u64) as State,
            (rem % y_card as u64) as State,
            n,
        )
    };
    if key_space <= DENSE_LIMIT as u64 {
        let mut counts = vec![0u64; key_space as usize];
        for row in data.rows() {
            counts[key_of(row) as usize] += 1;
        }
        entries.extend(
            counts
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(|(k, &n)| decode(k as u64, n)),
        );
    } else {
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for row in data.rows() {
            *counts.entry(key_of(row)).or_default() += 1;
        }
        let mut keys: Vec<(u64, u64)> = counts.into_iter().collect();
        keys.sort_unstable();
        entries.extend(keys.into_iter().map(|(k, n)| decode(k, n)));
    }
    ContingencyTable {
        x_card,
        y_card,
        strata,
        entries,
        total: data.n_rows() as u64,
    }
}

/// Outcome of one conditional-independence test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiTestResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub independent: bool,
    pub reliable: bool,
}

/// Pearson chi-squared CI test configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub alpha: f64,
    /// Minimum rows per degree of freedom of the full table; below this the
    /// test is unreliable and reports independence.
    pub rows_per_cell: f64,
}

impl Default for ChiSquareTest {
    fn default() -> Self {
        ChiSquareTest {
            alpha: DEFAULT_ALPHA,
            rows_per_cell: DEFAULT_ROWS_PER_CELL,
        }
    }
}

impl ChiSquareTest {
    pub fn new(alpha: f64) -> Self {
        ChiSquareTest {
            alpha,
            ..Default::default()
        }
    }

    /// Tests `x ⊥ y | z`. Symmetric in `x` and `y` bit for bit.
    pub fn test(&self, data: &Dataset, x: VarId, y: VarId, z: &[VarId]) -> CiTestResult {
        let (x, y) = if x < y { (x, y) } else { (y, x) };
        let table = contingency(data, x, y, z);
        self.evaluate(&table)
    }

    pub fn evaluate(&self, table: &ContingencyTable) -> CiTestResult {
        let full_dof = ((table.x_card - 1) * (table.y_card - 1)) as f64 * table.strata as f64;
        let reliable_rows = table.total as f64 >= self.rows_per_cell * full_dof;

        let mut statistic = 0.0;
        let mut dof = 0usize;
        let mut row_m = vec![0u64; table.x_card];
        let mut col_m = vec![0u64; table.y_card];
        let mut dense = vec![0u64; table.x_card * table.y_card];
        for stratum in table.strata_slices() {
            row_m.iter_mut().for_each(|v| *v = 0);
            col_m.iter_mut().for_each(|v| *v = 0);
            dense.iter_mut().for_each(|v| *v = 0);
            let mut n = 0u64;
            for &(_, xs, ys, c) in stratum {
                row_m[xs as usize] += c;
                col_m[ys as usize] += c;
                dense[xs as usize * table.y_card + ys as usize] = c;
                n += c;
            }
            let rx = row_m.iter().filter(|&&c| c > 0).count();
            let ry = col_m.iter().filter(|&&c| c > 0).count();
            if rx < 2 || ry < 2 {
                continue;
            }
            dof += (rx - 1) * (ry - 1);
            let n = n as f64;
            for (xs, &rm) in row_m.iter().enumerate() {
                if rm == 0 {
                    continue;
                }
                for (ys, &cm) in col_m.iter().enumerate() {
                    if cm == 0 {
                        continue;
                    }
                    let expected = rm as f64 * cm as f64 / n;
                    let diff = dense[xs * table.y_card + ys] as f64 - expected;
                    statistic += diff * diff / expected;
                }
            }
        }

        if dof == 0 {
            return CiTestResult {
                statistic: 0.0,
                dof: 0,
                p_value: 1.0,
                independent: true,
                reliable: false,
            };
        }
        let p_value = chi_square_sf(statistic, dof as f64);
        CiTestResult {
            statistic,
            dof,
            p_value,
            independent: !reliable_rows || p_value > self.alpha,
            reliable: reliable_rows,
        }
    }
}

/// Convenience wrapper using the default reliability heuristic.
pub fn chi_square_ci(data: &Dataset, x: VarId, y: VarId, z: &[VarId], alpha: f64) -> CiTestResult {
    ChiSquareTest::new(alpha).test(data, x, y, z)
}
