//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use polos::embed_io::synth::{random_vector, synthetic_samples, SynthSpec};
use polos::head::{Activation, Layer};
use polos::{build_h_inter, Aggregate, EmbeddingSample, HeadConfig, HeadParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_head() -> HeadConfig {
    HeadConfig {
        d_h: 6,
        mlp1_hidden: vec![7],
        mlp2_hidden: vec![5],
        ..HeadConfig::default()
    }
}

pub fn samples(
    count: usize,
    d_clip: usize,
    d_rb: usize,
    refs: (usize, usize),
    seed: u64,
) -> Vec<EmbeddingSample> {
    synthetic_samples(&SynthSpec {
        count,
        d_clip,
        d_rb,
        min_refs: refs.0,
        max_refs: refs.1,
        seed,
        ..SynthSpec::default()
    })
}

pub fn learnable(count: usize, d_clip: usize, d_rb: usize, seed: u64) -> Vec<EmbeddingSample> {
    synthetic_samples(&SynthSpec {
        count,
        d_clip,
        d_rb,
        min_refs: 1,
        max_refs: 5,
        learnable: true,
        seed,
        ..SynthSpec::default()
    })
}

/// Every valid combination of fusion mode, aggregation and stream switches
/// (at least one text stream on): 24 configurations.
pub fn all_ablation_configs(base: &HeadConfig) -> Vec<HeadConfig> {
    let mut out = Vec::new();
    for fusion_mode in [polos::FusionMode::Full, polos::FusionMode::ConcatOnly] {
        for aggregate in [Aggregate::Max, Aggregate::Mean] {
            for mask in (1u8..8).filter(|m| m & 6 != 0) {
                out.push(HeadConfig {
                    fusion_mode,
                    aggregate,
                    use_image: mask & 1 != 0,
                    use_clip_text: mask & 2 != 0,
                    use_roberta: mask & 4 != 0,
                    ..base.clone()
                });
            }
        }
    }
    out
}

/// Adds uniform noise of `scale` to every parameter, biases included.
pub fn jitter(params: &mut HeadParams, rng: &mut ChaCha8Rng, scale: f64) {
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x += rng.gen_range(-scale..scale);
        }
    }
}

// ---- naive forward pass -------------------------------------------------

pub struct NaiveForward {
    pub per_ref: Vec<f64>,
    pub y_hat: f64,
    /// Smallest |pre-activation| over all ReLU units, every reference.
    pub relu_margin: f64,
    /// Gap between the largest and second-largest per-reference score.
    pub max_margin: f64,
}

fn layer_naive(layer: &Layer, x: &[f64], margin: &mut f64) -> Vec<f64> {
    let (out, inp) = layer.weight.dim();
    assert_eq!(inp, x.len());
    (0..out)
        .map(|o| {
            let mut z = layer.bias[o];
            for (i, xi) in x.iter().enumerate() {
                z += layer.weight[[o, i]] * xi;
            }
            match layer.activation {
                Activation::Relu => {
                    *margin = margin.min(z.abs());
                    z.max(0.0)
                }
                Activation::Tanh => z.tanh(),
                Activation::Identity => z,
            }
        })
        .collect()
}

/// Scalar-loop forward pass, written without the library's batching.
pub fn naive_forward(
    sample: &EmbeddingSample,
    params: &HeadParams,
    config: &HeadConfig,
) -> NaiveForward {
    let mut relu_margin = f64::INFINITY;
    let per_ref: Vec<f64> = (0..sample.n_refs())
        .map(|i| {
            let mut x = build_h_inter(sample, i, config).unwrap();
            for layer in params.layers() {
                x = layer_naive(layer, &x, &mut relu_margin);
            }
            1.0 / (1.0 + (-x[0]).exp())
        })
        .collect();
    let y_hat = match config.aggregate {
        Aggregate::Max => per_ref.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        Aggregate::Mean => per_ref.iter().sum::<f64>() / per_ref.len() as f64,
    };
    let mut sorted = per_ref.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let max_margin = if sorted.len() > 1 {
        sorted[0] - sorted[1]
    } else {
        f64::INFINITY
    };
    NaiveForward {
        per_ref,
        y_hat,
        relu_margin,
        max_margin,
    }
}

pub fn naive_loss(
    sample: &EmbeddingSample,
    y: f64,
    params: &HeadParams,
    config: &HeadConfig,
) -> f64 {
    let r = naive_forward(sample, params, config).y_hat - y;
    r * r
}

/// Central differences of the squared-error loss for every parameter, in
/// the order of `HeadParams::tensors`.
pub fn finite_difference(
    sample: &EmbeddingSample,
    y: f64,
    params: &HeadParams,
    config: &HeadConfig,
    step: f64,
) -> Vec<Vec<f64>> {
    let mut p = params.clone();
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (t, &len) in shapes.iter().enumerate() {
        let mut g = Vec::with_capacity(len);
        for j in 0..len {
            let orig = p.tensors()[t][j];
            p.tensors_mut()[t][j] = orig + step;
            let up = naive_loss(sample, y, &p, config);
            p.tensors_mut()[t][j] = orig - step;
            let down = naive_loss(sample, y, &p, config);
            p.tensors_mut()[t][j] = orig;
            g.push((up - down) / (2.0 * step));
        }
        out.push(g);
    }
    out
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

// ---- Kendall brute force ------------------------------------------------

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct BruteCounts {
    pub concordant: u64,
    pub discordant: u64,
    pub x_only: u64,
    pub y_only: u64,
    pub both: u64,
}

pub fn brute_counts(x: &[f64], y: &[f64]) -> BruteCounts {
    let mut c = BruteCounts::default();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            match (dx == 0.0, dy == 0.0) {
                (true, true) => c.both += 1,
                (true, false) => c.x_only += 1,
                (false, true) => c.y_only += 1,
                _ if (dx > 0.0) == (dy > 0.0) => c.concordant += 1,
                _ => c.discordant += 1,
            }
        }
    }
    c
}

fn distinct(v: &[f64]) -> usize {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s.dedup();
    s.len()
}

/// tau-b from the textbook definition; `None` when an axis is constant.
pub fn brute_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let c = brute_counts(x, y);
    let n0 = (x.len() * (x.len() - 1) / 2) as f64;
    let n1 = (c.x_only + c.both) as f64;
    let n2 = (c.y_only + c.both) as f64;
    let denom = ((n0 - n1) * (n0 - n2)).sqrt();
    (denom > 0.0).then(|| (c.concordant as f64 - c.discordant as f64) / denom)
}

/// Stuart's tau-c; `None` when either axis has fewer than two values.
pub fn brute_tau_c(x: &[f64], y: &[f64]) -> Option<f64> {
    let c = brute_counts(x, y);
    let n = x.len() as f64;
    let m = distinct(x).min(distinct(y)) as f64;
    (m >= 2.0).then(|| 2.0 * m * (c.concordant as f64 - c.discordant as f64) / (n * n * (m - 1.0)))
}

/// A dataset that is heavily tied on some draws and untied on others.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let levels = |rng: &mut ChaCha8Rng| -> Option<u32> {
        match rng.gen_range(0..4) {
            0 => None,
            1 => Some(2),
            2 => Some(5),
            _ => Some(rng.gen_range(2..20)),
        }
    };
    let draw = |rng: &mut ChaCha8Rng, k: Option<u32>| -> Vec<f64> {
        (0..n)
            .map(|_| match k {
                None => rng.gen::<f64>(),
                Some(k) => f64::from(rng.gen_range(0..k)) / f64::from(k),
            })
            .collect()
    };
    let (kx, ky) = (levels(rng), levels(rng));
    let x = draw(rng, kx);
    let mut y = draw(rng, ky);
    if rng.gen_bool(0.5) {
        // add some association so the statistics are not all near zero
        for (yi, xi) in y.iter_mut().zip(&x) {
            if rng.gen_bool(0.6) {
                *yi = *xi;
            }
        }
    }
    (x, y)
}

// ---- permutation test ---------------------------------------------------

/// Two-sided p-value of `stat(x, y)` against `shuffles` random permutations
/// of `y`, with the usual +1 correction.
pub fn permutation_p_value<F>(x: &[f64], y: &[f64], shuffles: usize, seed: u64, stat: F) -> f64
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let observed = stat(x, y).abs();
    let mut rng = rng(seed);
    let mut perm = y.to_vec();
    let mut extreme = 0usize;
    for _ in 0..shuffles {
        perm.shuffle(&mut rng);
        if stat(x, &perm).abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (shuffles + 1) as f64
}

pub fn vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    random_vector(rng, d)
}

// ---- gradient check -----------------------------------------------------

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error. Entries whose analytic and
/// numeric values are both below it are compared on an absolute scale of
/// `GRAD_REL_TOL * GRAD_FLOOR`, which is still above the rounding noise of
/// a central difference at `FD_STEP`.
pub const GRAD_FLOOR: f64 = 1e-6;

pub struct GradCheck {
    pub entries: usize,
    pub worst: f64,
}

/// Compares `score_gradient` with central differences of the naive forward
/// pass for every parameter entry.
pub fn check_gradient(
    sample: &EmbeddingSample,
    y: f64,
    params: &HeadParams,
    config: &HeadConfig,
) -> GradCheck {
    let (loss, analytic) = polos::score_gradient(sample, y, params, config).unwrap();
    assert!((loss - naive_loss(sample, y, params, config)).abs() < 1e-12);
    let numeric = finite_difference(sample, y, params, config, FD_STEP);
    let mut worst = 0.0f64;
    let mut entries = 0;
    for (a, n) in analytic.tensors().iter().zip(&numeric) {
        for (&a, &n) in a.iter().zip(n) {
            worst = worst.max(relative_error(a, n, GRAD_FLOOR));
            entries += 1;
        }
    }
    GradCheck { entries, worst }
}

/// A random (sample, params, target) draw away from the ReLU and max kinks,
/// where the loss is differentiable and central differences are meaningful.
pub fn gradient_draw(
    config: &HeadConfig,
    rng: &mut ChaCha8Rng,
) -> (EmbeddingSample, HeadParams, f64) {
    loop {
        let d_clip = rng.gen_range(2..6);
        let d_rb = rng.gen_range(2..6);
        let n = rng.gen_range(1..5);
        let sample = samples(1, d_clip, d_rb, (n, n), rng.gen()).remove(0);
        let config = HeadConfig {
            seed: rng.gen(),
            ..config.clone()
        };
        let mut params = polos::init_params(&config, polos::InputDims::of(&sample)).unwrap();
        jitter(&mut params, rng, 0.3);
        let f = naive_forward(&sample, &params, &config);
        if f.relu_margin > 1e-3 && (config.aggregate == Aggregate::Mean || f.max_margin > 1e-3) {
            return (sample, params, rng.gen());
        }
    }
}
