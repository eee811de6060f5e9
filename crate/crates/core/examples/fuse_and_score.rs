//! The fusion features and an untrained head scoring one sample, with each
//! input stream switched off in turn.
//!
//!     cargo run --example fuse_and_score

use polos::embed_io::synth::{synthetic_samples, SynthSpec};
use polos::head::h_inter_len;
use polos::{build_h_inter, fuse, init_params, score, FusionMode, HeadConfig, InputDims};

fn main() -> polos::Result<()> {
    let f = fuse(&[1.0, 2.0], &[3.0, 1.0])?;
    println!("fuse([1,2], [3,1]) = {:?}", f.as_slice());

    let sample = synthetic_samples(&SynthSpec {
        count: 1,
        d_clip: 512,
        d_rb: 1024,
        min_refs: 3,
        max_refs: 3,
        ..SynthSpec::default()
    })
    .remove(0);
    let dims = InputDims::of(&sample);

    let base = HeadConfig::default();
    let variants = [
        ("default", base.clone()),
        (
            "concat only",
            HeadConfig {
                fusion_mode: FusionMode::ConcatOnly,
                ..base.clone()
            },
        ),
        (
            "no image",
            HeadConfig {
                use_image: false,
                ..base.clone()
            },
        ),
        (
            "no clip text",
            HeadConfig {
                use_clip_text: false,
                ..base.clone()
            },
        ),
        (
            "no roberta",
            HeadConfig {
                use_roberta: false,
                ..base.clone()
            },
        ),
    ];
    for (name, config) in variants {
        let h = build_h_inter(&sample, 0, &config)?;
        assert_eq!(h.len(), h_inter_len(&config, dims.d_clip, dims.d_rb));
        let params = init_params(&config, dims)?;
        let out = score(&sample, &params, &config)?;
        println!(
            "{name:>12}: h_inter {:>5}, params {:>8}, per-ref {:.4?}, y_hat {:.4} (ref {:?})",
            h.len(),
            params.param_count(),
            out.per_ref_scores,
            out.y_hat,
            out.argmax_ref
        );
    }
    Ok(())
}
