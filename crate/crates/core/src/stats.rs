//! Rank correlation, quartile labelling and the difficulty/confidence grid.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("paired lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two pairs, got {0}")]
    TooShort(usize),
    #[error("values must not be NaN")]
    NotANumber,
    #[error("one of the variables is constant; tau-b is undefined")]
    Degenerate,
}

/// Kendall's tau-b with tie correction, in O(n log n) (Knight's method).
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::TooShort(n));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(StatsError::NotANumber);
    }

    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let n1 = tied_pairs(pairs.iter().map(|p| p.0), |a, b| a == b);
    let n3 = tied_pairs(pairs.iter().copied(), |a, b| a == b);

    let mut ys_sorted: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = ys_sorted.clone();
    let swaps = merge_count(&mut ys_sorted, &mut buf);
    let n2 = tied_pairs(ys_sorted.iter().copied(), |a, b| a == b);

    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return Err(StatsError::Degenerate);
    }
    let s = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    Ok(s as f64 / denom)
}

/// Pairs within runs of equal adjacent items of an already sorted sequence.
fn tied_pairs<T: Copy>(items: impl Iterator<Item = T>, eq: impl Fn(T, T) -> bool) -> u64 {
    let mut total = 0;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for item in items {
        match prev {
            Some(p) if eq(p, item) => run += 1,
            _ => {
                total += run * (run + 1) / 2;
                run = 0;
            }
        }
        prev = Some(item);
    }
    total + run * (run + 1) / 2
}

/// Stable merge sort that returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quartile {
    Q1 = 1,
    Q2 = 2,
    Q3 = 3,
    Q4 = 4,
}

impl Quartile {
    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Quartile> {
        match n {
            1 => Some(Quartile::Q1),
            2 => Some(Quartile::Q2),
            3 => Some(Quartile::Q3),
            4 => Some(Quartile::Q4),
            _ => None,
        }
    }
}

/// Nearest-rank cut points: the k-th cut is the value at rank ceil(k*n/4).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartileCuts {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl QuartileCuts {
    pub fn from_values(values: &[f64]) -> Option<QuartileCuts> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let at = |k: usize| sorted[(k * n).div_ceil(4).max(1) - 1];
        Some(QuartileCuts {
            q1: at(1),
            q2: at(2),
            q3: at(3),
        })
    }

    /// A value equal to a cut point belongs to the lower quartile.
    pub fn label(&self, v: f64) -> Quartile {
        if v <= self.q1 {
            Quartile::Q1
        } else if v <= self.q2 {
            Quartile::Q2
        } else if v <= self.q3 {
            Quartile::Q3
        } else {
            Quartile::Q4
        }
    }
}

pub fn quartile_partition(values: &[f64]) -> Vec<Quartile> {
    match QuartileCuts::from_values(values) {
        Some(cuts) => values.iter().map(|&v| cuts.label(v)).collect(),
        None => Vec::new(),
    }
}

/// Answer counts over confidence 0..=5 (rows) by difficulty 1..=5 (columns).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusCells {
    pub counts: [[usize; 5]; 6],
    pub total: usize,
    /// Smallest count that reaches the 1/30 share, for reporting.
    pub threshold: usize,
    /// Selected (confidence, difficulty) cells.
    pub selected: BTreeSet<(u8, u8)>,
}

impl ConsensusCells {
    pub fn contains(&self, confidence: u8, difficulty: u8) -> bool {
        self.selected.contains(&(confidence, difficulty))
    }
}

/// Cells holding more answers than a uniform spread over the 30 cells would.
/// Pairs outside the grid are ignored.
pub fn consensus_cells(pairs: impl IntoIterator<Item = (u8, u8)>) -> ConsensusCells {
    let mut counts = [[0usize; 5]; 6];
    let mut total = 0;
    for (confidence, difficulty) in pairs {
        if confidence <= 5 && (1..=5).contains(&difficulty) {
            counts[confidence as usize][difficulty as usize - 1] += 1;
            total += 1;
        }
    }
    let mut selected = BTreeSet::new();
    for (c, row) in counts.iter().enumerate() {
        for (d, &count) in row.iter().enumerate() {
            if count * 30 > total {
                selected.insert((c as u8, d as u8 + 1));
            }
        }
    }
    ConsensusCells {
        counts,
        total,
        threshold: total.div_ceil(30),
        selected,
    }
}
