//! Write a synthetic embedding bundle, read it back, validate it and write a
//! split manifest next to it.
//!
//!     cargo run --example bundle_io

use polos::embed_io::synth::{synthetic_samples, SynthSpec};
use polos::embed_io::{read_manifest, write_manifest, ManifestEntry, SplitName};
use polos::{read_bundle, validate_bundle, write_bundle};

fn main() -> polos::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("toy.peb");

    let samples = synthetic_samples(&SynthSpec {
        count: 12,
        d_clip: 8,
        d_rb: 16,
        min_refs: 1,
        max_refs: 5,
        ..SynthSpec::default()
    });
    let bytes = write_bundle(&samples, &path)?;
    println!("wrote {} samples, {bytes} bytes", samples.len());

    let back = read_bundle(&path)?;
    assert_eq!(back, samples);
    for s in back.iter().take(3) {
        println!("{}: {} refs, score {:?}", s.sample_id, s.n_refs(), s.score);
    }

    let report = validate_bundle(&back);
    println!(
        "refs per sample: min {:?} max {:?} mean {:.2}; clean: {}",
        report.min_refs,
        report.max_refs,
        report.mean_refs,
        report.is_clean()
    );

    let entries: Vec<ManifestEntry> = back
        .iter()
        .enumerate()
        .map(|(i, s)| ManifestEntry {
            sample_id: s.sample_id.clone(),
            split: SplitName::ALL[i % 3],
            source: "synthetic".into(),
        })
        .collect();
    let manifest = dir.path().join("toy.manifest.jsonl");
    write_manifest(&entries, &manifest)?;
    println!(
        "{}",
        std::fs::read_to_string(&manifest)?
            .lines()
            .next()
            .unwrap_or("")
    );
    assert_eq!(read_manifest(&manifest)?, entries);
    Ok(())
}
