//! Seeded synthetic bundles for tests, examples and smoke runs.

use rand::Rng;

use super::EmbeddingSample;
use crate::util::stream_rng;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub count: usize,
    pub d_clip: usize,
    pub d_rb: usize,
    pub min_refs: usize,
    pub max_refs: usize,
    pub with_scores: bool,
    /// Make candidates noisy copies of the first reference, with the score
    /// falling as the noise grows, so that a head has something to learn.
    pub learnable: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            count: 100,
            d_clip: 512,
            d_rb: 1024,
            min_refs: 5,
            max_refs: 5,
            with_scores: true,
            learnable: false,
            seed: 0,
        }
    }
}

/// Vectors are uniform in `[-1, 1)`, scores uniform in `[0, 1)`.
pub fn synthetic_samples(spec: &SynthSpec) -> Vec<EmbeddingSample> {
    assert!(spec.min_refs >= 1 && spec.min_refs <= spec.max_refs);
    let mut rng = stream_rng(spec.seed, 0x5e);
    (0..spec.count)
        .map(|i| {
            let n = rng.gen_range(spec.min_refs..=spec.max_refs);
            let mut cand_clip = random_vector(&mut rng, spec.d_clip);
            let mut cand_rb = random_vector(&mut rng, spec.d_rb);
            let refs_clip: Vec<Vec<f32>> = (0..n)
                .map(|_| random_vector(&mut rng, spec.d_clip))
                .collect();
            let refs_rb: Vec<Vec<f32>> =
                (0..n).map(|_| random_vector(&mut rng, spec.d_rb)).collect();
            let img = random_vector(&mut rng, spec.d_clip);
            let score = rng.gen::<f32>();
            if spec.learnable {
                let noise = 1.0 - score;
                blend(&mut cand_clip, &refs_clip[0], noise);
                blend(&mut cand_rb, &refs_rb[0], noise);
            }
            let score = spec.with_scores.then_some(score);
            EmbeddingSample {
                sample_id: format!("syn-{i:06}"),
                cand_clip,
                cand_rb,
                refs_clip,
                refs_rb,
                img,
                score,
            }
        })
        .collect()
}

/// Random vector of length `d` uniform in `[-1, 1)`.
pub fn random_vector<R: Rng>(rng: &mut R, d: usize) -> Vec<f32> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

// `out` holds fresh noise on entry; leaves `(1 - noise) * base + noise * out`.
fn blend(out: &mut [f32], base: &[f32], noise: f32) {
    for (o, b) in out.iter_mut().zip(base) {
        *o = (1.0 - noise) * b + noise * *o;
    }
}
