//! Benchmark protocols and their JSON reports.

pub mod kendall;
mod pairwise;
mod protocol;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed_io::EmbeddingSample;
use crate::error::{Error, Result};
use crate::head::{score_parallel, HeadConfig, HeadParams};

pub use kendall::{kendall_tau_b, kendall_tau_c, pair_counts, PairCounts, ScoredPair};
pub use pairwise::{
    draw_references, foil_accuracy, foil_accuracy_jobs, pascal_accuracy, pascal_accuracy_jobs,
    pascal_accuracy_repeated, CaptionEmbedding, CategoryAccuracy, FoilAccuracy, FoilPair,
    PascalCategory, PascalPair, PascalResult, Winner,
};
pub use protocol::{foil_pairs, pascal_pairs, read_protocol, write_protocol, ProtocolEntry};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    TauB,
    TauC,
}

impl Statistic {
    pub fn compute(self, pairs: &[ScoredPair]) -> Result<f64> {
        match self {
            Statistic::TauB => kendall_tau_b(pairs),
            Statistic::TauC => kendall_tau_c(pairs),
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::TauB => "tau_b",
            Statistic::TauC => "tau_c",
        })
    }
}

impl FromStr for Statistic {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tau_b" => Ok(Statistic::TauB),
            "tau_c" => Ok(Statistic::TauC),
            _ => Err(format!("statistic must be tau_b or tau_c, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset: String,
    /// `tau_b`, `tau_c`, `pascal_accuracy` or `foil_accuracy`.
    pub statistic: String,
    /// The statistic itself; the category mean for `pascal_accuracy` and
    /// the pooled accuracy for `foil_accuracy`.
    pub value: f64,
    pub sample_count: usize,
    pub seed: u64,
    pub config: HeadConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub breakdown: BTreeMap<String, f64>,
    /// Ablation cell label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<String>,
}

impl EvalReport {
    pub fn new(
        dataset: &str,
        statistic: &str,
        value: f64,
        sample_count: usize,
        seed: u64,
        config: &HeadConfig,
    ) -> Self {
        EvalReport {
            schema_version: SCHEMA_VERSION,
            dataset: dataset.to_string(),
            statistic: statistic.to_string(),
            value,
            sample_count,
            seed,
            config: config.clone(),
            breakdown: BTreeMap::new(),
            cell: None,
        }
    }

    /// Checks value ranges: τ in `[-1, 1]`, accuracies in `[0, 1]`.
    pub fn is_well_formed(&self) -> bool {
        let in_range = |v: f64, lo: f64| v.is_finite() && (lo..=1.0).contains(&v);
        let lo = if self.statistic.starts_with("tau") {
            -1.0
        } else {
            0.0
        };
        self.schema_version == SCHEMA_VERSION
            && in_range(self.value, lo)
            && self.breakdown.values().all(|&v| in_range(v, lo))
    }
}

/// Scores every sample and correlates with its human score.
pub fn correlation_report(
    samples: &[EmbeddingSample],
    params: &HeadParams,
    config: &HeadConfig,
    statistic: Statistic,
    dataset: &str,
    seed: u64,
    jobs: usize,
) -> Result<EvalReport> {
    let human = samples
        .iter()
        .map(|s| {
            s.score
                .map(f64::from)
                .ok_or_else(|| Error::MissingScore(s.sample_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let pred = score_parallel(samples, params, config, jobs)?;
    let pairs: Vec<ScoredPair> = pred
        .iter()
        .zip(&human)
        .map(|(p, &h)| ScoredPair::new(p.y_hat, h))
        .collect();
    let value = statistic.compute(&pairs)?;
    Ok(EvalReport::new(
        dataset,
        &statistic.to_string(),
        value,
        samples.len(),
        seed,
        config,
    ))
}

pub fn pascal_report(
    result: &PascalResult,
    pairs: usize,
    dataset: &str,
    seed: u64,
    config: &HeadConfig,
) -> EvalReport {
    let mut r = EvalReport::new(dataset, "pascal_accuracy", result.mean, pairs, seed, config);
    for (cat, acc) in &result.per_category {
        r.breakdown.insert(cat.to_string(), acc.accuracy);
    }
    r.breakdown.insert("mean".into(), result.mean);
    r
}

pub fn foil_report(
    results: &[FoilAccuracy],
    dataset: &str,
    seed: u64,
    config: &HeadConfig,
) -> EvalReport {
    let correct: usize = results.iter().map(|r| r.correct).sum();
    let total: usize = results.iter().map(|r| r.total).sum();
    let pooled = if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    };
    let mut r = EvalReport::new(dataset, "foil_accuracy", pooled, total, seed, config);
    for res in results {
        r.breakdown
            .insert(format!("{}-ref", res.refs), res.accuracy);
    }
    r
}
