//! The six-row ablation: concatenation-only fusion, each stream removed,
//! mean aggregation, and the full head, all trained with the same seed.
//!
//!     cargo run --release --example ablation_grid

use polos::cli::{ablate, parse_grid, standard_grid};
use polos::embed_io::synth::{synthetic_samples, SynthSpec};
use polos::{HeadConfig, TrainConfig};

fn main() -> polos::Result<()> {
    let spec = |count, seed| SynthSpec {
        count,
        d_clip: 16,
        d_rb: 24,
        min_refs: 1,
        max_refs: 5,
        learnable: true,
        seed,
        ..SynthSpec::default()
    };
    let (train, valid, test) = (
        synthetic_samples(&spec(300, 1)),
        synthetic_samples(&spec(80, 2)),
        synthetic_samples(&spec(80, 3)),
    );
    let base = HeadConfig {
        d_h: 32,
        mlp1_hidden: vec![64],
        mlp2_hidden: vec![16],
        ..HeadConfig::default()
    };
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 32,
        max_epochs: 20,
        ..TrainConfig::default()
    };

    for o in ablate(
        &standard_grid(&base),
        &train,
        &valid,
        &test,
        &cfg,
        "synthetic",
        1,
    ) {
        match (&o.report, &o.error) {
            (Some(r), _) => println!("{:<28} tau-c {:.4}", o.cell, r.value),
            (_, Some(e)) => println!("{:<28} failed: {e}", o.cell),
            _ => unreachable!(),
        }
    }

    // Any subset of switches can be swept as a cartesian grid.
    let cells = parse_grid("aggregate,use_image", &base).expect("valid grid");
    let labels: Vec<&str> = cells.iter().map(|c| c.label.as_str()).collect();
    println!("{labels:#?}");
    Ok(())
}
