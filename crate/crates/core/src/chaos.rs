//! Multi-indices and the Legendre side of the discretisation.
//!
//! Parameters `y_m` are indexed from 1. The chaos polynomials are products of
//! univariate Legendre polynomials normalised against the uniform probability
//! density 1/2 on [-1, 1], so `psi_0 = 1` and `<psi_j, psi_k> = delta_jk`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// A finitely supported multi-index `mu = (mu_1, mu_2, ...)`.
///
/// Only nonzero degrees are stored, as `(position, degree)` pairs sorted by
/// position, so structural equality coincides with equality of the sequences.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex {
    entries: Vec<(u32, u32)>,
}

impl MultiIndex {
    /// The zero multi-index, i.e. the mean mode.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds from dense degrees, `dense[0]` being the degree in `y_1`.
    pub fn from_dense(dense: &[u32]) -> Self {
        let entries = dense
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .map(|(i, &d)| (i as u32 + 1, d))
            .collect();
        Self { entries }
    }

    /// Builds from `(position, degree)` pairs. Zero degrees are dropped;
    /// positions must be >= 1 and distinct.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<Self> {
        let mut entries: Vec<(u32, u32)> = pairs.iter().copied().filter(|&(_, d)| d > 0).collect();
        entries.sort_unstable_by_key(|&(p, _)| p);
        if entries.iter().any(|&(p, _)| p == 0) {
            return Err(Error::Config("multi-index positions are 1-based".into()));
        }
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("repeated position in multi-index".into()));
        }
        Ok(Self { entries })
    }

    /// The `(position, degree)` pairs of the support.
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn degree(&self, position: u32) -> u32 {
        match self.entries.binary_search_by_key(&position, |&(p, _)| p) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    pub fn total_degree(&self) -> u32 {
        self.entries.iter().map(|&(_, d)| d).sum()
    }

    /// Largest position in the support, 0 for the zero index.
    pub fn max_position(&self) -> u32 {
        self.entries.last().map_or(0, |&(p, _)| p)
    }

    /// Dense degrees padded with zeros to `len` (truncated if the support is longer).
    pub fn dense(&self, len: usize) -> Vec<u32> {
        let mut out = vec![0; len];
        for &(p, d) in &self.entries {
            if (p as usize) <= len {
                out[p as usize - 1] = d;
            }
        }
        out
    }

    /// `mu + e^m`.
    pub fn raised(&self, position: u32) -> Self {
        debug_assert!(position >= 1);
        let mut entries = self.entries.clone();
        match entries.binary_search_by_key(&position, |&(p, _)| p) {
            Ok(i) => entries[i].1 += 1,
            Err(i) => entries.insert(i, (position, 1)),
        }
        Self { entries }
    }

    /// `mu - e^m`, or `None` when `mu_m = 0`.
    pub fn lowered(&self, position: u32) -> Option<Self> {
        let i = self.entries.binary_search_by_key(&position, |&(p, _)| p).ok()?;
        let mut entries = self.entries.clone();
        if entries[i].1 == 1 {
            entries.remove(i);
        } else {
            entries[i].1 -= 1;
        }
        Some(Self { entries })
    }
}

/// Graded lexicographic order: total degree first, then the sequence with
/// the larger degree at the first differing position comes first, so that
/// `(1) < (0,1) < (0,0,1)`.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.total_degree().cmp(&other.total_degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        for (&(pa, da), &(pb, db)) in self.entries.iter().zip(&other.entries) {
            if pa != pb {
                // the index that is nonzero at the earlier position is larger there
                return pa.cmp(&pb);
            }
            if da != db {
                return db.cmp(&da);
            }
        }
        self.entries.len().cmp(&other.entries.len())
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Prints the dense form over the support, e.g. `(0 2 1)`.
impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let len = (self.max_position() as usize).max(1);
        let parts: Vec<String> = self.dense(len).iter().map(u32::to_string).collect();
        write!(f, "({})", parts.join(" "))
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = Vec::<(u32, u32)>::deserialize(deserializer)?;
        MultiIndex::from_pairs(&pairs).map_err(serde::de::Error::custom)
    }
}

/// An ordered set of distinct multi-indices with ordinal lookup.
#[derive(Clone, Default)]
pub struct IndexSet {
    items: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

impl IndexSet {
    /// Keeps the given order; fails on duplicates.
    pub fn new(items: Vec<MultiIndex>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(items.len());
        for (i, mu) in items.iter().enumerate() {
            if lookup.insert(mu.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate multi-index {mu}")));
            }
        }
        Ok(Self { items, lookup })
    }

    /// Deduplicates and sorts in graded lexicographic order.
    pub fn sorted(mut items: Vec<MultiIndex>) -> Self {
        items.sort();
        items.dedup();
        Self::new(items).expect("deduplicated")
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, mu: &MultiIndex) -> bool {
        self.lookup.contains_key(mu)
    }

    pub fn position(&self, mu: &MultiIndex) -> Option<usize> {
        self.lookup.get(mu).copied()
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.items[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.items.iter()
    }

    pub fn as_slice(&self) -> &[MultiIndex] {
        &self.items
    }
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.items).finish()
    }
}

impl PartialEq for IndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
    }
}

impl Serialize for IndexSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.items.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IndexSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let items = Vec::<MultiIndex>::deserialize(deserializer)?;
        IndexSet::new(items).map_err(serde::de::Error::custom)
    }
}

impl<'a> IntoIterator for &'a IndexSet {
    type Item = &'a MultiIndex;
    type IntoIter = std::slice::Iter<'a, MultiIndex>;
    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// `<y psi_n, psi_{n+1}>` for Legendre polynomials orthonormal under dy/2.
pub fn recurrence_coeff(n: u32) -> f64 {
    let n = n as f64;
    (n + 1.0) / ((2.0 * n + 1.0) * (2.0 * n + 3.0)).sqrt()
}

/// `<y_m psi_mu, psi_nu>` over the full parameter domain.
pub fn triple_product(m: u32, mu: &MultiIndex, nu: &MultiIndex) -> f64 {
    let (a, b) = (mu.degree(m), nu.degree(m));
    if a.abs_diff(b) != 1 {
        return 0.0;
    }
    let differs_elsewhere = |x: &MultiIndex, y: &MultiIndex| {
        x.pairs().iter().any(|&(p, d)| p != m && y.degree(p) != d)
    };
    if differs_elsewhere(mu, nu) || differs_elsewhere(nu, mu) {
        return 0.0;
    }
    recurrence_coeff(a.min(b))
}

/// Sparse `G_m` restricted to `rows x cols`.
#[derive(Clone, Debug)]
pub struct CouplingMatrix {
    pub m: u32,
    pub nrows: usize,
    pub ncols: usize,
    /// `(row, col, value)` sorted by row then column.
    pub entries: Vec<(usize, usize, f64)>,
}

impl CouplingMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries
            .iter()
            .find(|&&(r, c, _)| r == row && c == col)
            .map_or(0.0, |&(_, _, v)| v)
    }

    pub fn row_nnz(&self, row: usize) -> usize {
        self.entries.iter().filter(|&&(r, _, _)| r == row).count()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for &(r, c, v) in &self.entries {
            out[r][c] = v;
        }
        out
    }
}

/// `[G_m]_{mu nu} = <y_m psi_mu psi_nu>` (`m >= 1`), or the identity pattern for `m = 0`.
pub fn build_coupling(m: u32, rows: &IndexSet, cols: &IndexSet) -> CouplingMatrix {
    let mut entries = Vec::new();
    for (i, mu) in rows.iter().enumerate() {
        if m == 0 {
            if let Some(j) = cols.position(mu) {
                entries.push((i, j, 1.0));
            }
            continue;
        }
        let mut row: Vec<(usize, usize, f64)> = [mu.lowered(m), Some(mu.raised(m))]
            .into_iter()
            .flatten()
            .filter_map(|nu| {
                let j = cols.position(&nu)?;
                Some((i, j, recurrence_coeff(mu.degree(m).min(nu.degree(m)))))
            })
            .collect();
        row.sort_unstable_by_key(|&(_, j, _)| j);
        entries.extend(row);
    }
    CouplingMatrix { m, nrows: rows.len(), ncols: cols.len(), entries }
}

/// Number of active parameters: the largest position used by any member.
pub fn active_dimension(set: &IndexSet) -> u32 {
    set.iter().map(MultiIndex::max_position).max().unwrap_or(0)
}

/// Neighbouring indices `mu +- e^m` of `jp` that are not in `jp`, restricted
/// to positions `m <= M + delta_m`, in graded lexicographic order.
pub fn neighbor_set(jp: &IndexSet, delta_m: u32) -> IndexSet {
    let limit = active_dimension(jp) + delta_m;
    let mut out = Vec::new();
    for mu in jp {
        for m in 1..=limit {
            if let Some(nu) = mu.lowered(m) {
                if !jp.contains(&nu) {
                    out.push(nu);
                }
            }
            let nu = mu.raised(m);
            if !jp.contains(&nu) {
                out.push(nu);
            }
        }
    }
    IndexSet::sorted(out)
}
