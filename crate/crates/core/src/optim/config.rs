//! Flat `key = value` run configuration covering [`TrainConfig`] and
//! [`HeadConfig`]. Blank lines and `#` comments are ignored; unknown keys are
//! errors.
//!
//! ```text
//! learning_rate = 3e-5
//! batch_size = 64
//! aggregate = max
//! fusion_mode = full
//! mlp1_hidden = 1024
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::head::{Activation, Aggregate, FusionMode, HeadConfig};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub head: HeadConfig,
}

impl RunConfig {
    /// Sets both the training and the initialization seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.head.seed = seed;
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Config {
                line: n + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.train.validate()?;
        cfg.head.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let t = &mut self.train;
        let h = &mut self.head;
        match key {
            "learning_rate" => t.learning_rate = parse(value)?,
            "beta1" => t.beta1 = parse(value)?,
            "beta2" => t.beta2 = parse(value)?,
            "epsilon" => t.epsilon = parse(value)?,
            "batch_size" => t.batch_size = parse(value)?,
            "patience" => t.patience = parse(value)?,
            "max_epochs" => t.max_epochs = parse(value)?,
            "shuffle" => t.shuffle = parse(value)?,
            "seed" => {
                t.seed = parse(value)?;
                h.seed = t.seed;
            }
            "aggregate" => h.aggregate = parse_aggregate(value)?,
            "fusion_mode" => h.fusion_mode = parse_fusion(value)?,
            "use_image" => h.use_image = parse(value)?,
            "use_clip_text" => h.use_clip_text = parse(value)?,
            "use_roberta" => h.use_roberta = parse(value)?,
            "d_h" => h.d_h = parse(value)?,
            "mlp1_hidden" => h.mlp1_hidden = parse_list(value)?,
            "mlp2_hidden" => h.mlp2_hidden = parse_list(value)?,
            "activation" => h.activation = parse_activation(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let (t, h) = (&self.train, &self.head);
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "learning_rate = {:e}", t.learning_rate);
        let _ = writeln!(s, "beta1 = {}", t.beta1);
        let _ = writeln!(s, "beta2 = {}", t.beta2);
        let _ = writeln!(s, "epsilon = {:e}", t.epsilon);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "patience = {}", t.patience);
        let _ = writeln!(s, "max_epochs = {}", t.max_epochs);
        let _ = writeln!(s, "shuffle = {}", t.shuffle);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "aggregate = {}", aggregate_name(h.aggregate));
        let _ = writeln!(s, "fusion_mode = {}", fusion_name(h.fusion_mode));
        let _ = writeln!(s, "use_image = {}", h.use_image);
        let _ = writeln!(s, "use_clip_text = {}", h.use_clip_text);
        let _ = writeln!(s, "use_roberta = {}", h.use_roberta);
        let _ = writeln!(s, "d_h = {}", h.d_h);
        let _ = writeln!(s, "mlp1_hidden = {}", list(&h.mlp1_hidden));
        let _ = writeln!(s, "mlp2_hidden = {}", list(&h.mlp2_hidden));
        let _ = writeln!(s, "activation = {}", activation_name(h.activation));
        s
    }
}

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}`"))
}

fn parse_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(v.trim())).collect()
}

pub(crate) fn parse_aggregate(value: &str) -> std::result::Result<Aggregate, String> {
    match value {
        "max" => Ok(Aggregate::Max),
        "mean" => Ok(Aggregate::Mean),
        _ => Err(format!("aggregate must be max or mean, got `{value}`")),
    }
}

pub(crate) fn parse_fusion(value: &str) -> std::result::Result<FusionMode, String> {
    match value {
        "full" => Ok(FusionMode::Full),
        "concat_only" => Ok(FusionMode::ConcatOnly),
        _ => Err(format!(
            "fusion_mode must be full or concat_only, got `{value}`"
        )),
    }
}

fn parse_activation(value: &str) -> std::result::Result<Activation, String> {
    match value {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        "identity" => Ok(Activation::Identity),
        _ => Err(format!("unknown activation `{value}`")),
    }
}

pub(crate) fn aggregate_name(a: Aggregate) -> &'static str {
    match a {
        Aggregate::Max => "max",
        Aggregate::Mean => "mean",
    }
}

pub(crate) fn fusion_name(f: FusionMode) -> &'static str {
    match f {
        FusionMode::Full => "full",
        FusionMode::ConcatOnly => "concat_only",
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
        Activation::Identity => "identity",
    }
}
