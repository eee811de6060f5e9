//! True versus foiled captions, with one and with four references.
//!
//!     cargo run --release --example foil_detection

use polos::embed_io::synth::{random_vector, synthetic_samples, SynthSpec};
use polos::eval::{foil_accuracy, foil_report, CaptionEmbedding, FoilPair};
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

fn main() -> polos::Result<()> {
    let spec = |count, seed| SynthSpec {
        count,
        d_clip: D_CLIP,
        d_rb: D_RB,
        min_refs: 1,
        max_refs: 4,
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

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pairs = Vec::new();
    for refs in [1, 4] {
        for i in 0..100 {
            let clip = random_vector(&mut rng, D_CLIP);
            let rb = random_vector(&mut rng, D_RB);
            // the foil changes one word: close to the truth, but not as close
            let true_caption = CaptionEmbedding {
                clip: near(&mut rng, &clip, 0.15),
                rb: near(&mut rng, &rb, 0.15),
            };
            let foil_caption = CaptionEmbedding {
                clip: near(&mut rng, &clip, 0.5),
                rb: near(&mut rng, &rb, 0.5),
            };
            pairs.push(FoilPair {
                pair_id: format!("foil-{refs}-{i}"),
                image_id: format!("img-{refs}-{i}"),
                image: random_vector(&mut rng, D_CLIP),
                true_caption,
                foil_caption,
                refs_clip: (0..refs).map(|_| near(&mut rng, &clip, 0.2)).collect(),
                refs_rb: (0..refs).map(|_| near(&mut rng, &rb, 0.2)).collect(),
            });
        }
    }

    let results = foil_accuracy(&pairs, &fitted.params, &head)?;
    for r in &results {
        println!(
            "{}-ref: {:.3} ({}/{})",
            r.refs, r.accuracy, r.correct, r.total
        );
    }
    let report = foil_report(&results, "synthetic-foil", cfg.seed, &head);
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}
