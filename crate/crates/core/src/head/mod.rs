//! The scoring head.
//!
//! For every reference `i` of a sample the head builds
//! `h_inter = [F(c_clip, r_clip_i); F(c_clip, v); F(c_rb, r_rb_i)]`, maps it
//! through MLP1 to `h_i`, through MLP2 to a logit and a sigmoid to a
//! per-reference score. The sample score aggregates the per-reference scores
//! with max or mean.
//!
//! Computation is in `f64` even though bundles store `f32`.

pub mod checkpoint;
mod fusion;
mod mlp;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed_io::EmbeddingSample;
use crate::error::{Error, Result};
use crate::util::stream_rng;

pub use fusion::{build_h_inter, fuse, h_inter_len, FusionMode, FusionVector};
pub use mlp::{Activation, Layer};

use fusion::{check_sample_dims, fill_h_inter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub aggregate: Aggregate,
    pub fusion_mode: FusionMode,
    pub use_image: bool,
    pub use_clip_text: bool,
    pub use_roberta: bool,
    /// Width of `h_i`, the output of MLP1.
    pub d_h: usize,
    pub mlp1_hidden: Vec<usize>,
    pub mlp2_hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            aggregate: Aggregate::Max,
            fusion_mode: FusionMode::Full,
            use_image: true,
            use_clip_text: true,
            use_roberta: true,
            d_h: 512,
            mlp1_hidden: vec![1024],
            mlp2_hidden: vec![128],
            activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.use_clip_text && !self.use_roberta {
            return Err(Error::InvalidHeadConfig(
                "at least one of use_clip_text and use_roberta must be enabled".into(),
            ));
        }
        if self.d_h == 0 || self.mlp1_hidden.contains(&0) || self.mlp2_hidden.contains(&0) {
            return Err(Error::InvalidHeadConfig("zero-width layer".into()));
        }
        Ok(())
    }

    pub fn input_len(&self, dims: InputDims) -> usize {
        h_inter_len(self, dims.d_clip, dims.d_rb)
    }

    /// Widths `[in, hidden.., d_h]` of MLP1 and `[d_h, hidden.., 1]` of MLP2.
    fn layer_widths(&self, dims: InputDims) -> (Vec<usize>, Vec<usize>) {
        let mut first = vec![self.input_len(dims)];
        first.extend(&self.mlp1_hidden);
        first.push(self.d_h);
        let mut second = vec![self.d_h];
        second.extend(&self.mlp2_hidden);
        second.push(1);
        (first, second)
    }
}

/// Encoder output dimensions a head was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub d_clip: usize,
    pub d_rb: usize,
}

impl InputDims {
    pub fn of(sample: &EmbeddingSample) -> Self {
        InputDims {
            d_clip: sample.d_clip(),
            d_rb: sample.d_rb(),
        }
    }
}

/// Weights of both MLPs. The same shape doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub dims: InputDims,
    layers: Vec<Layer>,
    mlp1_len: usize,
}

impl HeadParams {
    pub fn new(dims: InputDims, mlp1: Vec<Layer>, mlp2: Vec<Layer>) -> Result<Self> {
        if mlp1.is_empty() || mlp2.is_empty() {
            return Err(Error::InvalidHeadConfig(
                "both MLPs need at least one layer".into(),
            ));
        }
        let mlp1_len = mlp1.len();
        let layers: Vec<Layer> = mlp1.into_iter().chain(mlp2).collect();
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::DimensionMismatch {
                    what: "layer chain",
                    expected: pair[0].outputs(),
                    got: pair[1].inputs(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::DimensionMismatch {
                    what: "bias",
                    expected: l.outputs(),
                    got: l.bias.len(),
                });
            }
        }
        let out = layers.last().unwrap().outputs();
        if out != 1 {
            return Err(Error::DimensionMismatch {
                what: "head output",
                expected: 1,
                got: out,
            });
        }
        Ok(HeadParams {
            dims,
            layers,
            mlp1_len,
        })
    }

    pub fn mlp1(&self) -> &[Layer] {
        &self.layers[..self.mlp1_len]
    }

    pub fn mlp2(&self) -> &[Layer] {
        &self.layers[self.mlp1_len..]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn zeros_like(&self) -> Self {
        HeadParams {
            dims: self.dims,
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs(), l.outputs(), l.activation))
                .collect(),
            mlp1_len: self.mlp1_len,
        }
    }

    pub fn same_shape(&self, other: &HeadParams) -> bool {
        self.mlp1_len == other.mlp1_len
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Every parameter tensor as a flat slice, weights then bias per layer.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn check_against(&self, config: &HeadConfig, sample: &EmbeddingSample) -> Result<()> {
        let dims = InputDims::of(sample);
        if dims.d_clip != self.dims.d_clip {
            return Err(Error::DimensionMismatch {
                what: "sample d_clip vs head",
                expected: self.dims.d_clip,
                got: dims.d_clip,
            });
        }
        if dims.d_rb != self.dims.d_rb {
            return Err(Error::DimensionMismatch {
                what: "sample d_rb vs head",
                expected: self.dims.d_rb,
                got: dims.d_rb,
            });
        }
        let expected = config.input_len(dims);
        if expected != self.input_len() {
            return Err(Error::DimensionMismatch {
                what: "head input width",
                expected,
                got: self.input_len(),
            });
        }
        Ok(())
    }
}

/// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
pub fn init_params(config: &HeadConfig, dims: InputDims) -> Result<HeadParams> {
    config.validate()?;
    let (w1, w2) = config.layer_widths(dims);
    if w1[0] == 0 {
        return Err(Error::InvalidHeadConfig("zero-width input".into()));
    }
    let mut rng = stream_rng(config.seed, 0x1417);
    let mut build = |widths: &[usize], last_activation: Activation| -> Vec<Layer> {
        widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                let activation = if k + 2 == widths.len() {
                    last_activation
                } else {
                    config.activation
                };
                Layer {
                    weight: Array2::from_shape_simple_fn((fan_out, fan_in), || {
                        dist.sample(&mut rng)
                    }),
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect()
    };
    let mlp1 = build(&w1, config.activation);
    let mlp2 = build(&w2, Activation::Identity);
    HeadParams::new(dims, mlp1, mlp2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreOutput {
    pub y_hat: f64,
    pub per_ref_scores: Vec<f64>,
    /// Index of the highest per-reference score (lowest index on ties);
    /// `None` under mean aggregation.
    pub argmax_ref: Option<usize>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Reduces per-reference scores to a sample score.
pub fn aggregate(per_ref: Vec<f64>, how: Aggregate) -> ScoreOutput {
    match how {
        Aggregate::Max => {
            let k = argmax(&per_ref);
            ScoreOutput {
                y_hat: per_ref[k],
                per_ref_scores: per_ref,
                argmax_ref: Some(k),
            }
        }
        Aggregate::Mean => ScoreOutput {
            y_hat: per_ref.iter().sum::<f64>() / per_ref.len() as f64,
            per_ref_scores: per_ref,
            argmax_ref: None,
        },
    }
}

/// Stacks `h_inter` rows for every reference of every sample.
fn stack_rows(
    samples: &[&EmbeddingSample],
    params: &HeadParams,
    config: &HeadConfig,
) -> Result<Array2<f64>> {
    let mut rows = 0;
    for s in samples {
        check_sample_dims(s)?;
        params.check_against(config, s)?;
        if s.n_refs() == 0 {
            return Err(Error::NoReferences(s.sample_id.clone()));
        }
        rows += s.n_refs();
    }
    let width = params.input_len();
    let mut h = Array2::zeros((rows, width));
    let mut r = 0;
    for s in samples {
        for i in 0..s.n_refs() {
            let mut row = h.row_mut(r);
            fill_h_inter(row.as_slice_mut().expect("standard layout"), s, i, config);
            r += 1;
        }
    }
    Ok(h)
}

fn finite_logits(logits: &Array2<f64>) -> Result<()> {
    if logits.iter().all(|z| z.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteValue("logit"))
    }
}

pub fn score(
    sample: &EmbeddingSample,
    params: &HeadParams,
    config: &HeadConfig,
) -> Result<ScoreOutput> {
    Ok(score_batch(std::slice::from_ref(sample), params, config)?.remove(0))
}

/// Scores many samples, stacking their references into one matrix per chunk.
pub fn score_batch(
    samples: &[EmbeddingSample],
    params: &HeadParams,
    config: &HeadConfig,
) -> Result<Vec<ScoreOutput>> {
    config.validate()?;
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(CHUNK) {
        let refs: Vec<&EmbeddingSample> = chunk.iter().collect();
        let h = stack_rows(&refs, params, config)?;
        let logits = mlp::forward(params.layers(), h);
        finite_logits(&logits)?;
        let mut r = 0;
        for s in chunk {
            let n = s.n_refs();
            let per_ref: Vec<f64> = (r..r + n).map(|k| sigmoid(logits[[k, 0]])).collect();
            r += n;
            out.push(aggregate(per_ref, config.aggregate));
        }
    }
    Ok(out)
}

/// [`score_batch`] spread over at most `jobs` threads. Output order and
/// values do not depend on `jobs`.
pub fn score_parallel(
    samples: &[EmbeddingSample],
    params: &HeadParams,
    config: &HeadConfig,
    jobs: usize,
) -> Result<Vec<ScoreOutput>> {
    if jobs <= 1 || samples.len() < 128 {
        return score_batch(samples, params, config);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidHeadConfig(format!("thread pool: {e}")))?;
    let per_job = samples.len().div_ceil(jobs).max(64);
    let parts: Vec<Result<Vec<ScoreOutput>>> = pool.install(|| {
        samples
            .par_chunks(per_job)
            .map(|c| score_batch(c, params, config))
            .collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Loss and parameter gradient averaged over a batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub mean_loss: f64,
    pub per_sample_loss: Vec<f64>,
    pub grads: HeadParams,
}

/// Squared error `(y_hat - y)^2` and its exact gradient for one sample.
///
/// Under max aggregation only the argmax reference receives gradient; under
/// mean each reference receives `1/N` of it.
pub fn score_gradient(
    sample: &EmbeddingSample,
    target_y: f64,
    params: &HeadParams,
    config: &HeadConfig,
) -> Result<(f64, HeadParams)> {
    let g = batch_gradient(&[(sample, target_y)], params, config)?;
    Ok((g.mean_loss, g.grads))
}

/// Mean squared error over `batch` and the mean of the per-sample gradients.
pub fn batch_gradient(
    batch: &[(&EmbeddingSample, f64)],
    params: &HeadParams,
    config: &HeadConfig,
) -> Result<BatchGradient> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    for &(_, y) in batch {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::ScoreOutOfRange {
                sample_id: String::new(),
                score: y,
            });
        }
    }
    let samples: Vec<&EmbeddingSample> = batch.iter().map(|(s, _)| *s).collect();
    let h = stack_rows(&samples, params, config)?;
    let trace = mlp::forward_traced(params.layers(), h);
    let logits = trace.output(params.layers());
    finite_logits(&logits)?;

    let scale = 1.0 / batch.len() as f64;
    let mut per_sample_loss = Vec::with_capacity(batch.len());
    let mut rows = Vec::new();
    let mut d_logits = Vec::new();
    let mut r = 0;
    for &(s, y) in batch {
        let n = s.n_refs();
        let per_ref: Vec<f64> = (r..r + n).map(|k| sigmoid(logits[[k, 0]])).collect();
        let out = aggregate(per_ref, config.aggregate);
        let residual = out.y_hat - y;
        per_sample_loss.push(residual * residual);
        let d_yhat = 2.0 * residual * scale;
        match out.argmax_ref {
            Some(k) => {
                let p = out.per_ref_scores[k];
                rows.push(r + k);
                d_logits.push(d_yhat * p * (1.0 - p));
            }
            None => {
                for (k, p) in out.per_ref_scores.iter().enumerate() {
                    rows.push(r + k);
                    d_logits.push(d_yhat * p * (1.0 - p) / n as f64);
                }
            }
        }
        r += n;
    }

    let mut grads = params.zeros_like();
    let trace = if rows.len() == logits.nrows() {
        trace
    } else {
        trace.select_rows(&rows)
    };
    let d_out = Array2::from_shape_vec((d_logits.len(), 1), d_logits).expect("column shape");
    mlp::backward(params.layers(), &trace, d_out, grads.layers_mut());
    if !grads.is_finite() {
        return Err(Error::NonFiniteValue("gradient"));
    }
    let mean_loss = per_sample_loss.iter().sum::<f64>() * scale;
    Ok(BatchGradient {
        mean_loss,
        per_sample_loss,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_io::synth::{synthetic_samples, SynthSpec};

    fn small_config() -> HeadConfig {
        HeadConfig {
            d_h: 6,
            mlp1_hidden: vec![7],
            mlp2_hidden: vec![5],
            ..HeadConfig::default()
        }
    }

    fn samples(n_refs: usize, count: usize, seed: u64) -> Vec<EmbeddingSample> {
        synthetic_samples(&SynthSpec {
            count,
            d_clip: 3,
            d_rb: 4,
            min_refs: n_refs,
            max_refs: n_refs,
            with_scores: true,
            learnable: false,
            seed,
        })
    }

    #[test]
    fn h_inter_lengths_for_default_dims() {
        let dims = (512, 1024);
        let len = |c: HeadConfig| h_inter_len(&c, dims.0, dims.1);
        assert_eq!(len(HeadConfig::default()), 8192);
        assert_eq!(
            len(HeadConfig {
                use_image: false,
                ..HeadConfig::default()
            }),
            6144
        );
        assert_eq!(
            len(HeadConfig {
                fusion_mode: FusionMode::ConcatOnly,
                ..HeadConfig::default()
            }),
            4096
        );
    }

    #[test]
    fn aggregation_of_explicit_scores() {
        let max = aggregate(vec![0.2, 0.7, 0.5], Aggregate::Max);
        assert_eq!(max.y_hat, 0.7);
        assert_eq!(max.argmax_ref, Some(1));
        let mean = aggregate(vec![0.2, 0.7, 0.5], Aggregate::Mean);
        assert!((mean.y_hat - 0.4666667).abs() < 1e-7);
        assert_eq!(mean.argmax_ref, None);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(
            aggregate(vec![0.3, 0.9, 0.9], Aggregate::Max).argmax_ref,
            Some(1)
        );
    }

    #[test]
    fn zero_parameters_score_one_half() {
        let s = samples(3, 4, 1);
        let mut params = init_params(&small_config(), InputDims::of(&s[0])).unwrap();
        for t in params.tensors_mut() {
            t.fill(0.0);
        }
        for out in score_batch(&s, &params, &small_config()).unwrap() {
            assert_eq!(out.y_hat, 0.5);
            assert!(out.per_ref_scores.iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let dims = InputDims { d_clip: 3, d_rb: 4 };
        let a = init_params(&small_config(), dims).unwrap();
        let b = init_params(&small_config(), dims).unwrap();
        assert_eq!(a, b);
        let c = init_params(
            &HeadConfig {
                seed: 2,
                ..small_config()
            },
            dims,
        )
        .unwrap();
        let a1 = init_params(
            &HeadConfig {
                seed: 1,
                ..small_config()
            },
            dims,
        )
        .unwrap();
        assert_ne!(a1, c);
        for l in a.layers() {
            let bound = 1.0 / (l.inputs() as f64).sqrt();
            assert!(l.weight.iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.mlp2().last().unwrap().activation, Activation::Identity);
        assert_eq!(a.mlp1().last().unwrap().activation, Activation::Relu);
    }

    #[test]
    fn zero_width_layer_is_rejected() {
        let cfg = HeadConfig {
            mlp1_hidden: vec![0],
            ..small_config()
        };
        assert!(init_params(&cfg, InputDims { d_clip: 3, d_rb: 4 }).is_err());
    }

    #[test]
    fn batch_and_single_scores_agree() {
        let s = samples(3, 70, 4);
        let params = init_params(&small_config(), InputDims::of(&s[0])).unwrap();
        let batch = score_batch(&s, &params, &small_config()).unwrap();
        for (sample, b) in s.iter().zip(&batch) {
            let single = score(sample, &params, &small_config()).unwrap();
            assert!((single.y_hat - b.y_hat).abs() < 1e-12);
        }
        let par = score_parallel(&s, &params, &small_config(), 3).unwrap();
        assert_eq!(
            par,
            score_parallel(&s, &params, &small_config(), 3).unwrap()
        );
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let s = samples(2, 1, 5);
        let params = init_params(&small_config(), InputDims::of(&s[0])).unwrap();
        let y = score(&s[0], &params, &small_config()).unwrap().y_hat;
        let (loss, grads) = score_gradient(&s[0], y, &params, &small_config()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.tensors().iter().all(|t| t.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn mismatched_head_is_rejected() {
        let s = samples(2, 1, 5);
        let params = init_params(&small_config(), InputDims { d_clip: 5, d_rb: 4 }).unwrap();
        assert!(matches!(
            score(&s[0], &params, &small_config()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
