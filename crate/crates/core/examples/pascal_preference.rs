//! Pairwise caption preference: two candidates for the same image, a pool of
//! references from which five are drawn per pair, accuracy per category.
//!
//!     cargo run --release --example pascal_preference

use polos::embed_io::synth::{random_vector, synthetic_samples, SynthSpec};
use polos::eval::{pascal_accuracy_repeated, CaptionEmbedding, PascalCategory, PascalPair, Winner};
use polos::{fit, HeadConfig, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D_CLIP: usize = 16;
const D_RB: usize = 24;

fn near(rng: &mut ChaCha8Rng, base: &[f32], noise: f32) -> Vec<f32> {
    base.iter()
        .map(|b| (1.0 - noise) * b + noise * rng.gen_range(-1.0f32..1.0))
        .collect()
}

fn caption(rng: &mut ChaCha8Rng, meaning: &(Vec<f32>, Vec<f32>), noise: f32) -> CaptionEmbedding {
    CaptionEmbedding {
        clip: near(rng, &meaning.0, noise),
        rb: near(rng, &meaning.1, noise),
    }
}

fn main() -> polos::Result<()> {
    let spec = |count, seed| SynthSpec {
        count,
        d_clip: D_CLIP,
        d_rb: D_RB,
        min_refs: 1,
        max_refs: 5,
        learnable: true,
        seed,
        ..SynthSpec::default()
    };
    let head = HeadConfig {
        d_h: 32,
        mlp1_hidden: vec![64],
        mlp2_hidden: vec![16],
        ..HeadConfig::default()
    };
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 32,
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let fitted = fit(
        &synthetic_samples(&spec(400, 1)),
        &synthetic_samples(&spec(100, 2)),
        &cfg,
        &head,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pairs = Vec::new();
    for (k, category) in PascalCategory::ALL.into_iter().enumerate() {
        // closer noise levels make the later categories harder
        let (good, bad) = [(0.3, 0.6), (0.4, 0.5), (0.45, 0.5), (0.48, 0.5)][k];
        for i in 0..25 {
            let meaning = (
                random_vector(&mut rng, D_CLIP),
                random_vector(&mut rng, D_RB),
            );
            let pool: Vec<CaptionEmbedding> =
                (0..48).map(|_| caption(&mut rng, &meaning, 0.2)).collect();
            let (a, b) = (
                caption(&mut rng, &meaning, good),
                caption(&mut rng, &meaning, bad),
            );
            let swap = i % 2 == 1;
            pairs.push(PascalPair {
                pair_id: format!("{category}-{i}"),
                image_id: format!("img-{category}-{i}"),
                image: random_vector(&mut rng, D_CLIP),
                caption_a: if swap { b.clone() } else { a.clone() },
                caption_b: if swap { a } else { b },
                pool_clip: pool.iter().map(|c| c.clip.clone()).collect(),
                pool_rb: pool.iter().map(|c| c.rb.clone()).collect(),
                category,
                winner: if swap { Winner::B } else { Winner::A },
            });
        }
    }

    let result = pascal_accuracy_repeated(&pairs, &fitted.params, &head, 5, 0, 5, 1)?;
    for (cat, acc) in &result.per_category {
        println!("{cat}: {:.3} over {} pairs", acc.accuracy, acc.pairs);
    }
    println!("mean: {:.3}", result.mean);
    Ok(())
}
