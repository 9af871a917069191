//! Markov-blanket induction with IPC-MB.
//!
//! [`recognize_pc`] starts from "everything is adjacent" and removes a
//! candidate as soon as some conditioning set of the current size separates
//! it from the target, growing the set size level by level. [`ipc_mb`] runs
//! it for the target and for each surviving neighbour, keeps neighbours that
//! see the target back (AND rule), and recovers spouses through collider
//! tests on the cached separating sets.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, VarId};
use crate::stats::ChiSquareTest;

pub const DEFAULT_MAX_COND: usize = 3;

/// Separating sets keyed by unordered variable pair.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SepsetCache {
    sets: BTreeMap<(VarId, VarId), Vec<VarId>>,
}

impl SepsetCache {
    fn key(a: VarId, b: VarId) -> (VarId, VarId) {
        (a.min(b), a.max(b))
    }

    /// Records the first separating set found; later ones are ignored.
    pub fn insert(&mut self, a: VarId, b: VarId, set: Vec<VarId>) {
        debug_assert!(!set.contains(&a) && !set.contains(&b));
        self.sets.entry(Self::key(a, b)).or_insert(set);
    }

    pub fn get(&self, a: VarId, b: VarId) -> Option<&[VarId]> {
        self.sets.get(&Self::key(a, b)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Parents/children and spouses of a target variable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkovBlanket {
    pub target: VarId,
    pub pc: BTreeSet<VarId>,
    pub spouses: BTreeSet<VarId>,
    #[serde(skip)]
    pub sepsets: SepsetCache,
}

impl MarkovBlanket {
    pub fn empty(target: VarId) -> Self {
        MarkovBlanket {
            target,
            pc: BTreeSet::new(),
            spouses: BTreeSet::new(),
            sepsets: SepsetCache::default(),
        }
    }

    pub fn blanket(&self) -> BTreeSet<VarId> {
        self.pc.union(&self.spouses).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.pc.len() + self.spouses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pc.is_empty() && self.spouses.is_empty()
    }

    pub fn named(&self, data: &Dataset) -> NamedBlanket {
        let names = |set: &BTreeSet<VarId>| {
            set.iter()
                .map(|&v| data.variable(v).name().to_string())
                .collect()
        };
        NamedBlanket {
            target: data.variable(self.target).name().to_string(),
            pc: names(&self.pc),
            spouses: names(&self.spouses),
        }
    }
}

/// Name-based blanket, the exchange form written to JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedBlanket {
    pub target: String,
    pub pc: Vec<String>,
    pub spouses: Vec<String>,
}

impl NamedBlanket {
    /// Blanket members in pc-then-spouse order.
    pub fn features(&self) -> Vec<String> {
        self.pc.iter().chain(&self.spouses).cloned().collect()
    }
}

/// Search settings shared by [`recognize_pc`] and [`ipc_mb`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MbConfig {
    pub test: ChiSquareTest,
    pub max_cond: usize,
}

impl Default for MbConfig {
    fn default() -> Self {
        MbConfig {
            test: ChiSquareTest::default(),
            max_cond: DEFAULT_MAX_COND,
        }
    }
}

impl MbConfig {
    pub fn new(alpha: f64, max_cond: usize) -> Self {
        MbConfig {
            test: ChiSquareTest::new(alpha),
            max_cond,
        }
    }
}

/// Calls `f` on each `k`-subset of `items` in lexicographic order until it returns true.
fn find_subset(items: &[VarId], k: usize, mut f: impl FnMut(&[VarId]) -> bool) -> bool {
    if k > items.len() {
        return false;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut subset: Vec<VarId> = Vec::with_capacity(k);
    loop {
        subset.clear();
        subset.extend(idx.iter().map(|&i| items[i]));
        if f(&subset) {
            return true;
        }
        // advance the rightmost index that still has room
        let n = items.len();
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return false;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Backward elimination of false-positive neighbours of `target`.
pub fn recognize_pc(
    data: &Dataset,
    target: VarId,
    candidates: &[VarId],
    cfg: &MbConfig,
) -> (BTreeSet<VarId>, SepsetCache) {
    debug_assert!(!candidates.contains(&target));
    let mut adj: Vec<VarId> = candidates.to_vec();
    adj.sort_unstable();
    adj.dedup();
    let mut sepsets = SepsetCache::default();
    let mut k = 0;
    while k <= cfg.max_cond && k < adj.len() {
        let snapshot = adj.clone();
        for x in snapshot {
            let Some(pos) = adj.iter().position(|&v| v == x) else {
                continue;
            };
            let others: Vec<VarId> = adj.iter().copied().filter(|&v| v != x).collect();
            let mut found = None;
            find_subset(&others, k, |s| {
                if cfg.test.test(data, target, x, s).independent {
                    found = Some(s.to_vec());
                    true
                } else {
                    false
                }
            });
            if let Some(set) = found {
                adj.remove(pos);
                sepsets.insert(target, x, set);
            }
        }
        k += 1;
    }
    (adj.into_iter().collect(), sepsets)
}

/// IPC-MB blanket of `target`.
pub fn ipc_mb(data: &Dataset, target: VarId, cfg: &MbConfig) -> MarkovBlanket {
    let all: Vec<VarId> = (0..data.n_vars()).filter(|&v| v != target).collect();
    let (pc0, sepsets) = recognize_pc(data, target, &all, cfg);

    let neighbours: Vec<(VarId, BTreeSet<VarId>)> = pc0
        .par_iter()
        .map(|&x| {
            let others: Vec<VarId> = (0..data.n_vars()).filter(|&v| v != x).collect();
            (x, recognize_pc(data, x, &others, cfg).0)
        })
        .collect();

    let pc: BTreeSet<VarId> = neighbours
        .iter()
        .filter(|(_, pcx)| pcx.contains(&target))
        .map(|(x, _)| *x)
        .collect();

    let mut spouses = BTreeSet::new();
    for (x, pcx) in neighbours.iter().filter(|(x, _)| pc.contains(x)) {
        for &y in pcx {
            if y == target || pc.contains(&y) || spouses.contains(&y) {
                continue;
            }
            let Some(sep) = sepsets.get(target, y) else {
                log::debug!(
                    "no separating set for ({}, {}); skipping spouse candidate",
                    data.variable(target).name(),
                    data.variable(y).name()
                );
                continue;
            };
            let mut z = sep.to_vec();
            if !z.contains(x) {
                z.push(*x);
            }
            if !cfg.test.test(data, target, y, &z).independent {
                spouses.insert(y);
            }
        }
    }

    MarkovBlanket {
        target,
        pc,
        spouses,
        sepsets,
    }
}

/// Convenience wrapper with explicit alpha and conditioning cap.
pub fn ipc_mb_with(data: &Dataset, target: VarId, alpha: f64, max_cond: usize) -> MarkovBlanket {
    ipc_mb(data, target, &MbConfig::new(alpha, max_cond))
}
