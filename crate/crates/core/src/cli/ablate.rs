//! Ablation sweeps over head configuration switches.

use serde::Serialize;

use crate::embed_io::EmbeddingSample;
use crate::error::Result;
use crate::eval::{correlation_report, EvalReport, Statistic};
use crate::head::{Aggregate, FusionMode, HeadConfig};
use crate::optim::config::{aggregate_name, fusion_name, parse_aggregate, parse_fusion};
use crate::optim::{fit, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub label: String,
    pub config: HeadConfig,
}

const AXES: [&str; 5] = [
    "fusion_mode",
    "aggregate",
    "use_image",
    "use_clip_text",
    "use_roberta",
];

fn domain(axis: &str) -> Vec<&'static str> {
    match axis {
        "fusion_mode" => vec!["full", "concat_only"],
        "aggregate" => vec!["max", "mean"],
        _ => vec!["true", "false"],
    }
}

fn apply(config: &mut HeadConfig, axis: &str, value: &str) -> std::result::Result<(), String> {
    let flag = || {
        value
            .parse::<bool>()
            .map_err(|_| format!("{axis} takes true or false, got `{value}`"))
    };
    match axis {
        "fusion_mode" => config.fusion_mode = parse_fusion(value)?,
        "aggregate" => config.aggregate = parse_aggregate(value)?,
        "use_image" => config.use_image = flag()?,
        "use_clip_text" => config.use_clip_text = flag()?,
        "use_roberta" => config.use_roberta = flag()?,
        _ => {
            return Err(format!(
                "`{axis}` is not a grid axis; expected one of {}",
                AXES.join(", ")
            ))
        }
    }
    Ok(())
}

/// Parses `standard`, or a comma-separated list of axes such as
/// `fusion_mode,aggregate` or `use_image=false,aggregate=max|mean`.
///
/// Cells enumerate the cartesian product with the last axis varying fastest.
/// A bare axis name sweeps its whole domain.
pub fn parse_grid(spec: &str, base: &HeadConfig) -> std::result::Result<Vec<GridCell>, String> {
    if spec.trim() == "standard" {
        return Ok(standard_grid(base));
    }
    let mut axes: Vec<(&str, Vec<&str>)> = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, values) = match part.split_once('=') {
            Some((n, v)) => (n.trim(), v.split('|').map(str::trim).collect()),
            None => (part, domain(part)),
        };
        if !AXES.contains(&name) {
            return Err(format!(
                "`{name}` is not a grid axis; expected one of {}",
                AXES.join(", ")
            ));
        }
        if axes.iter().any(|(n, _)| *n == name) {
            return Err(format!("axis `{name}` given twice"));
        }
        let mut probe = base.clone();
        for v in &values {
            apply(&mut probe, name, v)?;
        }
        axes.push((name, values));
    }
    if axes.is_empty() {
        return Err("empty grid".into());
    }

    let mut cells = vec![(Vec::<String>::new(), base.clone())];
    for (name, values) in &axes {
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for (labels, cfg) in &cells {
            for v in values {
                let mut cfg = cfg.clone();
                apply(&mut cfg, name, v).expect("values checked above");
                let mut labels = labels.clone();
                labels.push(format!("{name}={v}"));
                next.push((labels, cfg));
            }
        }
        cells = next;
    }
    Ok(cells
        .into_iter()
        .map(|(labels, config)| GridCell {
            label: labels.join(","),
            config,
        })
        .collect())
}

/// The six standard ablation rows: concatenation-only fusion, each stream
/// removed in turn, mean aggregation, and the unmodified configuration.
pub fn standard_grid(base: &HeadConfig) -> Vec<GridCell> {
    let with = |label: &str, f: &dyn Fn(&mut HeadConfig)| {
        let mut config = base.clone();
        f(&mut config);
        GridCell {
            label: label.to_string(),
            config,
        }
    };
    vec![
        with("i:fusion_mode=concat_only", &|c| {
            c.fusion_mode = FusionMode::ConcatOnly
        }),
        with("ii:use_image=false", &|c| c.use_image = false),
        with("iii:use_clip_text=false", &|c| c.use_clip_text = false),
        with("iv:use_roberta=false", &|c| c.use_roberta = false),
        with("v:aggregate=mean", &|c| c.aggregate = Aggregate::Mean),
        with("vi:full", &|_| {}),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOutcome {
    pub cell: String,
    pub aggregate: &'static str,
    pub fusion_mode: &'static str,
    pub use_image: bool,
    pub use_clip_text: bool,
    pub use_roberta: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Trains and evaluates one head per cell with a shared seed. A failing
/// cell records its error and the sweep continues.
pub fn ablate(
    cells: &[GridCell],
    train: &[EmbeddingSample],
    valid: &[EmbeddingSample],
    test: &[EmbeddingSample],
    train_config: &TrainConfig,
    dataset: &str,
    jobs: usize,
) -> Vec<CellOutcome> {
    cells
        .iter()
        .map(|cell| {
            let run = || -> Result<EvalReport> {
                cell.config.validate()?;
                let fitted = fit(train, valid, train_config, &cell.config)?;
                let mut report = correlation_report(
                    test,
                    &fitted.params,
                    &cell.config,
                    Statistic::TauC,
                    dataset,
                    train_config.seed,
                    jobs,
                )?;
                report.cell = Some(cell.label.clone());
                Ok(report)
            };
            let (report, error) = match run() {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let c = &cell.config;
            CellOutcome {
                cell: cell.label.clone(),
                aggregate: aggregate_name(c.aggregate),
                fusion_mode: fusion_name(c.fusion_mode),
                use_image: c.use_image,
                use_clip_text: c.use_clip_text,
                use_roberta: c.use_roberta,
                report,
                error,
            }
        })
        .collect()
}
