//! Kendall rank correlation, tau-b and tau-c, with tie handling.
//!
//! Pair counts come from Knight's `O(n log n)` method: sort by
//! `(metric, human)`, count tie runs, then count the remaining inversions in
//! the human axis with a merge sort.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub metric_score: f64,
    pub human_score: f64,
}

impl ScoredPair {
    pub fn new(metric_score: f64, human_score: f64) -> Self {
        ScoredPair {
            metric_score,
            human_score,
        }
    }
}

/// Classification of all `n (n - 1) / 2` unordered index pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub n: u64,
    pub concordant: u64,
    pub discordant: u64,
    /// Tied in the metric score only.
    pub metric_ties: u64,
    /// Tied in the human score only.
    pub human_ties: u64,
    /// Tied in both.
    pub joint_ties: u64,
    pub distinct_metric: u64,
    pub distinct_human: u64,
}

fn tie_pairs(run: u64) -> u64 {
    run * (run.saturating_sub(1)) / 2
}

/// Sums `t (t - 1) / 2` over runs of equal adjacent elements, and counts runs.
fn runs<T>(items: &[T], eq: impl Fn(&T, &T) -> bool) -> (u64, u64) {
    if items.is_empty() {
        return (0, 0);
    }
    let (mut ties, mut distinct, mut run) = (0, 1, 1u64);
    for w in items.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            ties += tie_pairs(run);
            distinct += 1;
            run = 1;
        }
    }
    (ties + tie_pairs(run), distinct)
}

/// Stable merge sort of `v` returning the number of strict inversions.
fn sort_counting_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps =
        sort_counting_inversions(&mut v[..mid], buf) + sort_counting_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

pub fn pair_counts(pairs: &[ScoredPair]) -> Result<PairCounts> {
    // `+ 0.0` folds -0.0 into +0.0 so total_cmp treats them as tied.
    let mut xy: Vec<(f64, f64)> = pairs
        .iter()
        .map(|p| (p.metric_score + 0.0, p.human_score + 0.0))
        .collect();
    if xy.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonFiniteValue("score in rank correlation"));
    }
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = xy.len() as u64;
    let (x_ties, distinct_metric) = runs(&xy, |a, b| a.0 == b.0);
    let (joint, _) = runs(&xy, |a, b| a == b);

    let mut ys: Vec<f64> = xy.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let discordant = sort_counting_inversions(&mut ys, &mut buf);
    let (y_ties, distinct_human) = runs(&ys, |a, b| a.total_cmp(b) == Ordering::Equal);

    let total = tie_pairs(n);
    let concordant = total + joint - x_ties - y_ties - discordant;
    Ok(PairCounts {
        n,
        concordant,
        discordant,
        metric_ties: x_ties - joint,
        human_ties: y_ties - joint,
        joint_ties: joint,
        distinct_metric,
        distinct_human,
    })
}

/// `(C - D) / sqrt((C + D + Tx) (C + D + Ty))`.
pub fn kendall_tau_b(pairs: &[ScoredPair]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::UndefinedStatistic("tau-b needs at least two pairs"));
    }
    let c = pair_counts(pairs)?;
    if c.distinct_metric < 2 || c.distinct_human < 2 {
        return Err(Error::UndefinedStatistic(
            "tau-b: one axis is entirely tied",
        ));
    }
    let cd = (c.concordant + c.discordant) as f64;
    let num = c.concordant as f64 - c.discordant as f64;
    Ok(num / ((cd + c.metric_ties as f64) * (cd + c.human_ties as f64)).sqrt())
}

/// `2 m (C - D) / (n^2 (m - 1))` with `m` the smaller number of distinct
/// values on either axis.
pub fn kendall_tau_c(pairs: &[ScoredPair]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::UndefinedStatistic("tau-c needs at least two pairs"));
    }
    let c = pair_counts(pairs)?;
    let m = c.distinct_metric.min(c.distinct_human);
    if m < 2 {
        return Err(Error::UndefinedStatistic(
            "tau-c: one axis is entirely tied",
        ));
    }
    let n = c.n as f64;
    let m = m as f64;
    Ok(2.0 * m * (c.concordant as f64 - c.discordant as f64) / (n * n * (m - 1.0)))
}
