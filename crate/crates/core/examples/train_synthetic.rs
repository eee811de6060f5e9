//! Train a small head on a learnable synthetic bundle, save a checkpoint and
//! check that the reloaded head scores identically.
//!
//!     cargo run --release --example train_synthetic

use polos::embed_io::synth::{synthetic_samples, SynthSpec};
use polos::eval::{correlation_report, Statistic};
use polos::head::checkpoint::Checkpoint;
use polos::{fit, score, HeadConfig, TrainConfig};

fn bundle(count: usize, seed: u64) -> Vec<polos::EmbeddingSample> {
    synthetic_samples(&SynthSpec {
        count,
        d_clip: 32,
        d_rb: 48,
        min_refs: 1,
        max_refs: 5,
        learnable: true,
        seed,
        ..SynthSpec::default()
    })
}

fn main() -> polos::Result<()> {
    let (train, valid, test) = (bundle(400, 1), bundle(100, 2), bundle(100, 3));
    let head = HeadConfig {
        d_h: 64,
        mlp1_hidden: vec![128],
        mlp2_hidden: vec![32],
        ..HeadConfig::default()
    };
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 32,
        max_epochs: 40,
        ..TrainConfig::default()
    };

    let fitted = fit(&train, &valid, &cfg, &head)?;
    for e in &fitted.log.epochs {
        println!(
            "epoch {:>3}  loss {:.5}  valid tau-c {:.4}",
            e.epoch, e.train_loss, e.valid_tau
        );
    }
    println!(
        "best epoch {} (tau-c {:.4})",
        fitted.log.best_epoch, fitted.log.best_tau
    );

    let report = correlation_report(
        &test,
        &fitted.params,
        &head,
        Statistic::TauC,
        "synthetic",
        cfg.seed,
        1,
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("head.phc");
    Checkpoint::new(head.clone(), fitted.params.clone()).save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    for s in &test[..5] {
        let a = score(s, &fitted.params, &head)?.y_hat;
        let b = score(s, &loaded.params, &loaded.header.head)?.y_hat;
        assert_eq!(a.to_bits(), b.to_bits());
        println!(
            "{}  human {:.3}  head {:.3}",
            s.sample_id,
            s.score.unwrap_or(f32::NAN),
            a
        );
    }
    Ok(())
}
