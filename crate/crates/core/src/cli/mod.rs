//! The `polos` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.
//! Diagnostics go to stderr; `--json` puts machine-readable output on stdout.

pub mod ablate;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::embed_io::synth::{synthetic_samples, SynthSpec};
use crate::embed_io::{read_bundle, validate_bundle, write_bundle, DatasetSplit};
use crate::error::Error;
use crate::eval::{
    correlation_report, foil_accuracy_jobs, foil_pairs, foil_report, pascal_accuracy_repeated,
    pascal_pairs, pascal_report, read_protocol, Statistic,
};
use crate::head::checkpoint::Checkpoint;
use crate::head::score_parallel;
use crate::judgments::{
    aggregate_with_coverage, filter_evaluators, make_splits, read_judgments, score_distribution,
    Aggregation, FilterThresholds, SplitRequest,
};
use crate::optim::{fit, RunConfig};
use crate::util::write_atomic;

pub use ablate::{ablate, parse_grid, standard_grid, CellOutcome, GridCell};

pub const SCHEMA_VERSION: u32 = crate::eval::SCHEMA_VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "polos",
    version,
    about = "Learned caption evaluation: train, score and benchmark"
)]
pub struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound on parallel scoring threads. Training is always sequential.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a bundle's structure and invariants.
    Validate { bundle: PathBuf },
    /// Write a seeded synthetic bundle.
    Synth(SynthArgs),
    /// Fit a head with early stopping on validation tau-c.
    Train(TrainArgs),
    /// Score every sample of a bundle.
    Score(ScoreArgs),
    /// Rank correlation between head scores and human scores.
    EvalCorr(CorrArgs),
    /// Pairwise preference accuracy with drawn references.
    EvalPascal(PascalArgs),
    /// True-versus-foil caption accuracy.
    EvalFoil(FoilArgs),
    /// Normalize, filter, aggregate and split raw human judgments.
    Judgments(JudgmentArgs),
    /// Train and evaluate one head per configuration cell.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 512)]
    pub d_clip: usize,
    #[arg(long, default_value_t = 1024)]
    pub d_rb: usize,
    #[arg(long, default_value_t = 1)]
    pub min_refs: usize,
    #[arg(long, default_value_t = 5)]
    pub max_refs: usize,
    #[arg(long)]
    pub no_scores: bool,
    /// Plant a candidate-reference similarity signal in the scores.
    #[arg(long)]
    pub learnable: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output checkpoint path.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Per-epoch JSONL log; defaults to `<checkpoint>.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Include wall-clock times in the log (makes it run-dependent).
    #[arg(long)]
    pub log_timing: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "tau_c")]
    pub statistic: Statistic,
    /// Dataset tag recorded in the report.
    #[arg(long, default_value = "unnamed")]
    pub dataset: String,
}

#[derive(Debug, Args)]
pub struct PascalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Protocol manifest (JSONL).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// References drawn per pair.
    #[arg(long, default_value_t = 5)]
    pub draws: usize,
    /// Independent draws averaged (seeds `seed`, `seed + 1`, ...).
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value = "pascal50s")]
    pub dataset: String,
}

#[derive(Debug, Args)]
pub struct FoilArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Only evaluate pairs with this many references.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["1", "4"]))]
    pub refs: Option<String>,
    #[arg(long, default_value = "foil")]
    pub dataset: String,
}

#[derive(Debug, Args)]
pub struct JudgmentArgs {
    /// JSONL judgment records.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Train, valid and test fractions.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub ratios: String,
    #[arg(long, default_value = "mean")]
    pub aggregation: String,
    #[arg(long, default_value_t = 2.0)]
    pub min_median_response_time: f64,
    #[arg(long, default_value_t = 20)]
    pub max_constant_run: usize,
    #[arg(long, default_value_t = 2)]
    pub min_distinct_ratings: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// `standard`, or axes like `fusion_mode,aggregate` or `use_image=false`.
    #[arg(long)]
    pub grid: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Evaluation bundle; the validation bundle is used when absent.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "unnamed")]
    pub dataset: String,
    /// Also write the outcomes as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_with(argv, &mut out, &mut err)
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> CliResult<()> {
    let mut v = serde_json::to_value(value).map_err(Error::from)?;
    if let serde_json::Value::Object(map) = &mut v {
        map.entry("schema_version").or_insert(json!(SCHEMA_VERSION));
    }
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&v).map_err(Error::from)?
    )
    .map_err(Error::from)?;
    Ok(())
}

fn load_run_config(path: Option<&Path>, seed: u64) -> CliResult<RunConfig> {
    let cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::file(p, e))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    Ok(cfg.with_seed(seed))
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<i32> {
    let jobs = cli.jobs.max(1);
    match &cli.command {
        Command::Validate { bundle } => {
            let samples = read_bundle(bundle)?;
            let report = validate_bundle(&samples);
            if cli.json {
                emit(out, &report)?;
            } else {
                let dim = |d: Option<usize>| d.map_or("-".to_string(), |d| d.to_string());
                let _ = writeln!(
                    out,
                    "{}: {} samples, d_clip={}, d_rb={}, {} findings",
                    bundle.display(),
                    report.sample_count,
                    dim(report.d_clip),
                    dim(report.d_rb),
                    report.findings.len()
                );
                for f in &report.findings {
                    let _ = writeln!(out, "  {f}");
                }
            }
            Ok(if report.is_clean() {
                EXIT_OK
            } else {
                EXIT_DATA
            })
        }

        Command::Synth(a) => {
            if a.min_refs == 0
                || a.min_refs > a.max_refs
                || a.count == 0
                || a.d_clip == 0
                || a.d_rb == 0
            {
                return Err(Failure::Usage(
                    "need count, dims, min_refs >= 1 and min_refs <= max_refs".into(),
                ));
            }
            let samples = synthetic_samples(&SynthSpec {
                count: a.count,
                d_clip: a.d_clip,
                d_rb: a.d_rb,
                min_refs: a.min_refs,
                max_refs: a.max_refs,
                with_scores: !a.no_scores,
                learnable: a.learnable,
                seed: cli.seed,
            });
            let bytes = write_bundle(&samples, &a.out)?;
            if cli.json {
                emit(
                    out,
                    &json!({"path": a.out, "samples": samples.len(), "bytes": bytes}),
                )?;
            } else {
                let _ = writeln!(
                    out,
                    "wrote {} samples ({bytes} bytes) to {}",
                    samples.len(),
                    a.out.display()
                );
            }
            Ok(EXIT_OK)
        }

        Command::Train(a) => {
            let cfg = load_run_config(a.config.as_deref(), cli.seed)?;
            let train = read_bundle(&a.data)?;
            let valid = read_bundle(&a.val)?;
            let fitted = fit(&train, &valid, &cfg.train, &cfg.head)?;
            let mut ck = Checkpoint::new(cfg.head.clone(), fitted.params);
            ck.header.train = Some(cfg.train.clone());
            ck.header.epoch = Some(fitted.log.best_epoch);
            ck.save(&a.checkpoint)?;
            let log_path = a.log.clone().unwrap_or_else(|| {
                let mut p = a.checkpoint.clone().into_os_string();
                p.push(".log.jsonl");
                PathBuf::from(p)
            });
            write_atomic(&log_path, fitted.log.to_jsonl(a.log_timing)?.as_bytes())?;
            let summary = json!({
                "checkpoint": a.checkpoint,
                "log": log_path,
                "epochs": fitted.log.epochs.len(),
                "best_epoch": fitted.log.best_epoch,
                "best_tau": fitted.log.best_tau,
            });
            if cli.json {
                emit(out, &summary)?;
            } else {
                let _ = writeln!(
                    out,
                    "trained {} epochs; best tau-c {:.4} at epoch {}; checkpoint {}",
                    fitted.log.epochs.len(),
                    fitted.log.best_tau,
                    fitted.log.best_epoch,
                    a.checkpoint.display()
                );
            }
            Ok(EXIT_OK)
        }

        Command::Score(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            let samples = read_bundle(&a.data)?;
            let scores = score_parallel(&samples, &ck.params, &ck.header.head, jobs)?;
            if cli.json {
                let rows: Vec<_> = samples
                    .iter()
                    .zip(&scores)
                    .map(|(s, o)| {
                        json!({"sample_id": s.sample_id, "y_hat": o.y_hat,
                               "per_ref_scores": o.per_ref_scores, "argmax_ref": o.argmax_ref})
                    })
                    .collect();
                emit(out, &json!({"scores": rows}))?;
            } else {
                for (s, o) in samples.iter().zip(&scores) {
                    let _ = writeln!(out, "{}\t{:.6}", s.sample_id, o.y_hat);
                }
            }
            Ok(EXIT_OK)
        }

        Command::EvalCorr(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            let samples = read_bundle(&a.data)?;
            let report = correlation_report(
                &samples,
                &ck.params,
                &ck.header.head,
                a.statistic,
                &a.dataset,
                cli.seed,
                jobs,
            )?;
            if cli.json {
                emit(out, &report)?;
            } else {
                let _ = writeln!(
                    out,
                    "{} {} = {:.4} over {} samples",
                    a.dataset, a.statistic, report.value, report.sample_count
                );
            }
            Ok(EXIT_OK)
        }

        Command::EvalPascal(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            let samples = read_bundle(&a.data)?;
            let pairs = pascal_pairs(&read_protocol(&a.manifest)?, &samples)?;
            let result = pascal_accuracy_repeated(
                &pairs,
                &ck.params,
                &ck.header.head,
                a.draws,
                cli.seed,
                a.repeats,
                jobs,
            )?;
            let report = pascal_report(&result, pairs.len(), &a.dataset, cli.seed, &ck.header.head);
            if cli.json {
                emit(out, &report)?;
            } else {
                for (cat, acc) in &result.per_category {
                    let _ = writeln!(out, "{cat}\t{:.4}\t({} pairs)", acc.accuracy, acc.pairs);
                }
                let _ = writeln!(out, "mean\t{:.4}", result.mean);
            }
            Ok(EXIT_OK)
        }

        Command::EvalFoil(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            let samples = read_bundle(&a.data)?;
            let mut pairs = foil_pairs(&read_protocol(&a.manifest)?, &samples)?;
            if let Some(r) = &a.refs {
                let r: usize = r.parse().expect("restricted by clap");
                pairs.retain(|p| p.n_refs() == r);
            }
            let results = foil_accuracy_jobs(&pairs, &ck.params, &ck.header.head, jobs)?;
            let report = foil_report(&results, &a.dataset, cli.seed, &ck.header.head);
            if cli.json {
                emit(out, &report)?;
            } else {
                for r in &results {
                    let _ = writeln!(
                        out,
                        "{}-ref\t{:.4}\t({}/{})",
                        r.refs, r.accuracy, r.correct, r.total
                    );
                }
            }
            Ok(EXIT_OK)
        }

        Command::Judgments(a) => run_judgments(a, cli, out, err),

        Command::Ablate(a) => {
            let cfg = load_run_config(a.config.as_deref(), cli.seed)?;
            let cells = parse_grid(&a.grid, &cfg.head).map_err(Failure::Usage)?;
            let train = read_bundle(&a.data)?;
            let valid = read_bundle(&a.val)?;
            let test = match &a.test {
                Some(p) => read_bundle(p)?,
                None => valid.clone(),
            };
            let outcomes = ablate(&cells, &train, &valid, &test, &cfg.train, &a.dataset, jobs);
            if let Some(path) = &a.out {
                write_atomic(
                    path,
                    serde_json::to_string_pretty(&outcomes)
                        .map_err(Error::from)?
                        .as_bytes(),
                )?;
            }
            if cli.json {
                emit(out, &json!({"cells": outcomes}))?;
            } else {
                for o in &outcomes {
                    match (&o.report, &o.error) {
                        (Some(r), _) => {
                            let _ = writeln!(out, "{}\ttau_c={:.4}", o.cell, r.value);
                        }
                        (_, Some(e)) => {
                            let _ = writeln!(out, "{}\terror: {e}", o.cell);
                        }
                        _ => {}
                    }
                }
            }
            for o in outcomes.iter().filter(|o| o.error.is_some()) {
                let _ = writeln!(
                    err,
                    "cell {} failed: {}",
                    o.cell,
                    o.error.as_deref().unwrap_or("")
                );
            }
            Ok(EXIT_OK)
        }
    }
}

fn parse_ratios(text: &str) -> CliResult<[f64; 3]> {
    let v: Vec<f64> = text
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("cannot parse ratios `{text}`")))?;
    v.try_into()
        .map_err(|_| Failure::Usage("ratios need exactly three values".into()))
}

fn run_judgments(
    a: &JudgmentArgs,
    cli: &Cli,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<i32> {
    let ratios = parse_ratios(&a.ratios)?;
    let how = match a.aggregation.as_str() {
        "mean" => Aggregation::Mean,
        "median" => Aggregation::Median,
        other => {
            return Err(Failure::Usage(format!(
                "aggregation must be mean or median, got `{other}`"
            )))
        }
    };
    let thresholds = FilterThresholds {
        min_median_response_time: a.min_median_response_time,
        max_constant_run: a.max_constant_run,
        min_distinct_ratings: a.min_distinct_ratings,
    };
    if thresholds.min_median_response_time.is_nan()
        || thresholds.min_median_response_time <= 0.0
        || thresholds.max_constant_run == 0
        || thresholds.min_distinct_ratings == 0
    {
        return Err(Failure::Usage("thresholds must be positive".into()));
    }

    let records = read_judgments(&a.input)?;
    let filtered = filter_evaluators(&records, &thresholds);
    for p in &filtered.excluded {
        let reasons: Vec<String> = p.reasons.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(
            err,
            "excluded evaluator {}: {}",
            p.evaluator_id,
            reasons.join(", ")
        );
    }
    let all_ids: Vec<String> = records.iter().map(|r| r.sample_id.clone()).collect();
    let agg = aggregate_with_coverage(&all_ids, &filtered.kept, how)?;
    let ids: Vec<String> = agg.scores.iter().map(|s| s.sample_id.clone()).collect();
    let splits = make_splits(&ids, &SplitRequest::Ratios(ratios), cli.seed)?;
    DatasetSplit::check_partition(&splits)?;
    let hist = score_distribution(&agg.scores.iter().map(|s| s.score).collect::<Vec<_>>());

    fs::create_dir_all(&a.out_dir).map_err(|e| Error::file(&a.out_dir, e))?;
    let jsonl = |items: &mut dyn Iterator<Item = serde_json::Value>| -> String {
        items.map(|v| v.to_string() + "\n").collect()
    };
    let scores_text = jsonl(&mut agg.scores.iter().map(|s| serde_json::to_value(s).unwrap()));
    write_atomic(&a.out_dir.join("scores.jsonl"), scores_text.as_bytes())?;
    let split_text = jsonl(&mut splits.iter().flat_map(|s| {
        s.sample_ids
            .iter()
            .map(move |id| json!({"sample_id": id, "split": s.name, "source": "judgments"}))
    }));
    write_atomic(&a.out_dir.join("splits.jsonl"), split_text.as_bytes())?;
    let hist_json = serde_json::to_string_pretty(&hist).map_err(Error::from)?;
    write_atomic(&a.out_dir.join("histogram.json"), hist_json.as_bytes())?;
    let excluded_json = serde_json::to_string_pretty(&filtered.excluded).map_err(Error::from)?;
    write_atomic(&a.out_dir.join("excluded.json"), excluded_json.as_bytes())?;

    let summary = json!({
        "records": records.len(),
        "kept_records": filtered.kept.len(),
        "excluded_evaluators": filtered.excluded,
        "scored_samples": agg.scores.len(),
        "unscored_samples": agg.unscored,
        "split_sizes": splits.iter().map(|s| (s.name.to_string(), s.sample_ids.len())).collect::<std::collections::BTreeMap<_, _>>(),
        "histogram": hist,
    });
    if cli.json {
        emit(out, &summary)?;
    } else {
        let _ = writeln!(
            out,
            "{} records, {} evaluators excluded, {} samples scored, {} unscored; splits {}/{}/{}",
            records.len(),
            filtered.excluded.len(),
            agg.scores.len(),
            agg.unscored.len(),
            splits[0].sample_ids.len(),
            splits[1].sample_ids.len(),
            splits[2].sample_ids.len()
        );
    }
    Ok(if agg.unscored.is_empty() {
        EXIT_OK
    } else {
        EXIT_DATA
    })
}
