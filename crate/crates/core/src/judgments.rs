//! Human judgment ingestion: five-point ratings are min-max normalized to
//! `[0, 1]`, unreliable evaluators are filtered out, and the surviving
//! ratings are averaged per caption and split into train/valid/test.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embed_io::{DatasetSplit, SplitName};
use crate::error::{Error, Result};
use crate::util::{parse_jsonl, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub sample_id: String,
    pub evaluator_id: String,
    pub rating: i64,
    /// Seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_time: Option<f64>,
}

pub fn read_judgments(path: impl AsRef<Path>) -> Result<Vec<JudgmentRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let records: Vec<JudgmentRecord> = parse_jsonl(&text)?;
    for r in &records {
        normalize_rating(r.rating)?;
        if let Some(t) = r.response_time {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::NonFiniteValue("response time"));
            }
        }
    }
    Ok(records)
}

/// `(rating - 1) / 4`.
pub fn normalize_rating(rating: i64) -> Result<f64> {
    if !(1..=5).contains(&rating) {
        return Err(Error::RatingOutOfRange(rating));
    }
    Ok((rating - 1) as f64 / 4.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterThresholds {
    /// Seconds; evaluators answering faster than this on median are dropped.
    pub min_median_response_time: f64,
    /// A run of this many identical consecutive ratings drops the evaluator.
    pub max_constant_run: usize,
    /// Evaluators with at least 10 judgments need this many distinct ratings.
    pub min_distinct_ratings: usize,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            min_median_response_time: 2.0,
            max_constant_run: 20,
            min_distinct_ratings: 2,
        }
    }
}

const DIVERSITY_MIN_JUDGMENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    ResponseTime,
    ConstantRatings,
    LowDiversity,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::ResponseTime => "response time",
            ExclusionReason::ConstantRatings => "constant ratings",
            ExclusionReason::LowDiversity => "low rating diversity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluatorProfile {
    pub evaluator_id: String,
    pub judgment_count: usize,
    pub median_response_time: Option<f64>,
    pub distinct_ratings: usize,
    /// Longest run of identical consecutive ratings, in input order.
    pub max_constant_run: usize,
    pub reasons: Vec<ExclusionReason>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Per-evaluator statistics with the rules they trip, sorted by evaluator id.
pub fn evaluator_profiles(
    records: &[JudgmentRecord],
    thresholds: &FilterThresholds,
) -> Vec<EvaluatorProfile> {
    let mut by_eval: BTreeMap<&str, Vec<&JudgmentRecord>> = BTreeMap::new();
    for r in records {
        by_eval.entry(&r.evaluator_id).or_default().push(r);
    }
    by_eval
        .into_iter()
        .map(|(id, recs)| {
            let mut times: Vec<f64> = recs.iter().filter_map(|r| r.response_time).collect();
            let median_response_time = median(&mut times);
            let distinct_ratings = recs.iter().map(|r| r.rating).collect::<BTreeSet<_>>().len();
            let mut max_run = 0;
            let mut run = 0;
            for (k, r) in recs.iter().enumerate() {
                run = if k > 0 && recs[k - 1].rating == r.rating {
                    run + 1
                } else {
                    1
                };
                max_run = max_run.max(run);
            }
            let mut reasons = Vec::new();
            if median_response_time.is_some_and(|m| m < thresholds.min_median_response_time) {
                reasons.push(ExclusionReason::ResponseTime);
            }
            if max_run >= thresholds.max_constant_run {
                reasons.push(ExclusionReason::ConstantRatings);
            }
            if recs.len() >= DIVERSITY_MIN_JUDGMENTS
                && distinct_ratings < thresholds.min_distinct_ratings
            {
                reasons.push(ExclusionReason::LowDiversity);
            }
            EvaluatorProfile {
                evaluator_id: id.to_string(),
                judgment_count: recs.len(),
                median_response_time,
                distinct_ratings,
                max_constant_run: max_run,
                reasons,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// Records of kept evaluators, in input order.
    pub kept: Vec<JudgmentRecord>,
    pub excluded: Vec<EvaluatorProfile>,
}

pub fn filter_evaluators(
    records: &[JudgmentRecord],
    thresholds: &FilterThresholds,
) -> FilterOutcome {
    let excluded: Vec<EvaluatorProfile> = evaluator_profiles(records, thresholds)
        .into_iter()
        .filter(|p| !p.reasons.is_empty())
        .collect();
    let dropped: BTreeSet<&str> = excluded.iter().map(|p| p.evaluator_id.as_str()).collect();
    let kept = records
        .iter()
        .filter(|r| !dropped.contains(r.evaluator_id.as_str()))
        .cloned()
        .collect();
    FilterOutcome { kept, excluded }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedScore {
    pub sample_id: String,
    pub score: f64,
    pub evaluators: usize,
}

/// One score per sample id present in `records`, sorted by id.
pub fn aggregate_scores(
    records: &[JudgmentRecord],
    how: Aggregation,
) -> Result<Vec<AggregatedScore>> {
    let mut by_sample: BTreeMap<&str, Vec<i64>> = BTreeMap::new();
    for r in records {
        normalize_rating(r.rating)?;
        by_sample.entry(&r.sample_id).or_default().push(r.rating);
    }
    Ok(by_sample
        .into_iter()
        .map(|(id, mut ratings)| {
            let n = ratings.len();
            // integer arithmetic keeps the result independent of record order
            let score = match how {
                Aggregation::Mean => {
                    ratings.iter().map(|r| r - 1).sum::<i64>() as f64 / (4 * n) as f64
                }
                Aggregation::Median => {
                    ratings.sort_unstable();
                    let twice = if n % 2 == 1 {
                        2 * (ratings[n / 2] - 1)
                    } else {
                        ratings[n / 2 - 1] + ratings[n / 2] - 2
                    };
                    twice as f64 / 8.0
                }
            };
            AggregatedScore {
                sample_id: id.to_string(),
                score,
                evaluators: n,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationOutcome {
    pub scores: Vec<AggregatedScore>,
    /// Samples in `all_ids` left without any surviving judgment.
    pub unscored: Vec<String>,
}

/// [`aggregate_scores`] over `kept`, reporting every id of `all_ids` that
/// lost all of its judgments.
pub fn aggregate_with_coverage(
    all_ids: &[String],
    kept: &[JudgmentRecord],
    how: Aggregation,
) -> Result<AggregationOutcome> {
    let scores = aggregate_scores(kept, how)?;
    let have: BTreeSet<&str> = scores.iter().map(|s| s.sample_id.as_str()).collect();
    let unscored = all_ids
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|id| !have.contains(id.as_str()))
        .cloned()
        .collect();
    Ok(AggregationOutcome { scores, unscored })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitRequest {
    /// Train, valid, test fractions summing to 1.
    Ratios([f64; 3]),
    Explicit(Vec<(String, SplitName)>),
}

/// Partitions `ids` into train/valid/test.
///
/// Ratio splits sort the ids, shuffle them with `seed` and cut at sizes
/// rounded by largest remainder, so sizes always sum to `ids.len()`.
pub fn make_splits(ids: &[String], request: &SplitRequest, seed: u64) -> Result<[DatasetSplit; 3]> {
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::InvalidSplit("duplicate sample ids".into()));
    }
    let mut parts: [Vec<String>; 3] = Default::default();
    match request {
        SplitRequest::Ratios(ratios) => {
            if ratios.iter().any(|r| r.is_nan() || *r < 0.0)
                || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(Error::InvalidSplit(format!(
                    "ratios {ratios:?} must be non-negative and sum to 1"
                )));
            }
            let sizes = largest_remainder(ids.len(), ratios);
            let mut order: Vec<String> = unique.into_iter().cloned().collect();
            order.shuffle(&mut stream_rng(seed, 0x5917));
            let mut rest = order.into_iter();
            for (part, size) in parts.iter_mut().zip(sizes) {
                part.extend(rest.by_ref().take(size));
            }
        }
        SplitRequest::Explicit(assign) => {
            let mut seen: HashMap<&str, SplitName> = HashMap::new();
            for (id, split) in assign {
                if seen.insert(id, *split).is_some() {
                    return Err(Error::SplitOverlap(id.clone()));
                }
                if !unique.contains(id) {
                    return Err(Error::InvalidSplit(format!(
                        "assignment names unknown id {id:?}"
                    )));
                }
            }
            for id in ids {
                let split = seen
                    .get(id.as_str())
                    .ok_or_else(|| Error::InvalidSplit(format!("id {id:?} has no assignment")))?;
                parts[*split as usize].push(id.clone());
            }
        }
    }
    let [train, valid, test] = parts;
    Ok([
        DatasetSplit {
            name: SplitName::Train,
            sample_ids: train,
        },
        DatasetSplit {
            name: SplitName::Valid,
            sample_ids: valid,
        },
        DatasetSplit {
            name: SplitName::Test,
            sample_ids: test,
        },
    ])
}

fn largest_remainder(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut left = n.saturating_sub(sizes.iter().sum());
    let mut by_fraction: Vec<usize> = (0..3).collect();
    by_fraction
        .sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &k in by_fraction.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[k] += 1;
        left -= 1;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreHistogram {
    /// Bin `k` covers `[k/10, (k+1)/10)`; the last bin includes 1.0.
    pub counts: [usize; 10],
    pub edges: [f64; 11],
    pub count: usize,
    /// Non-finite or outside `[0, 1]`; not binned.
    pub out_of_range: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub median: Option<f64>,
}

pub fn score_distribution(scores: &[f64]) -> ScoreHistogram {
    let mut counts = [0usize; 10];
    let mut valid: Vec<f64> = Vec::with_capacity(scores.len());
    for &s in scores {
        if (0.0..=1.0).contains(&s) {
            counts[((s * 10.0).floor() as usize).min(9)] += 1;
            valid.push(s);
        }
    }
    let n = valid.len();
    let mean = (n > 0).then(|| valid.iter().sum::<f64>() / n as f64);
    let std =
        mean.map(|m| (valid.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / n as f64).sqrt());
    let min = valid.iter().copied().reduce(f64::min);
    let max = valid.iter().copied().reduce(f64::max);
    ScoreHistogram {
        counts,
        edges: std::array::from_fn(|k| k as f64 / 10.0),
        count: n,
        out_of_range: scores.len() - n,
        mean,
        std,
        min,
        max,
        median: median(&mut valid),
    }
}
