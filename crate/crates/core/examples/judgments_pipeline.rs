//! From raw five-point ratings to per-caption scores and splits: normalize,
//! drop unreliable evaluators, average, split, summarize.
//!
//!     cargo run --example judgments_pipeline

use polos::judgments::{
    aggregate_with_coverage, filter_evaluators, make_splits, score_distribution, Aggregation,
    FilterThresholds, JudgmentRecord, SplitRequest,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> polos::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let captions: Vec<String> = (0..40).map(|i| format!("cap-{i:03}")).collect();
    let mut records = Vec::new();
    for e in 0..8 {
        let evaluator = format!("eval-{e}");
        for (i, id) in captions.iter().enumerate() {
            if (i + e) % 3 == 0 {
                continue;
            }
            let (rating, time) = match e {
                // clicks through in under a second
                6 => (rng.gen_range(1..=5), 0.8),
                // always answers 3
                7 => (3, 6.0),
                _ => (
                    1 + ((i * 5 / captions.len()) as i64 + rng.gen_range(-1..=1)).clamp(0, 4),
                    rng.gen_range(3.0..12.0),
                ),
            };
            records.push(JudgmentRecord {
                sample_id: id.clone(),
                evaluator_id: evaluator.clone(),
                rating,
                response_time: Some(time),
            });
        }
    }

    let filtered = filter_evaluators(&records, &FilterThresholds::default());
    for p in &filtered.excluded {
        let why: Vec<String> = p.reasons.iter().map(ToString::to_string).collect();
        println!("excluded {}: {}", p.evaluator_id, why.join(", "));
    }

    let agg = aggregate_with_coverage(&captions, &filtered.kept, Aggregation::Mean)?;
    println!(
        "{} captions scored, {} left unscored",
        agg.scores.len(),
        agg.unscored.len()
    );
    for s in agg.scores.iter().take(4) {
        println!(
            "  {}  {:.3} from {} evaluators",
            s.sample_id, s.score, s.evaluators
        );
    }

    let ids: Vec<String> = agg.scores.iter().map(|s| s.sample_id.clone()).collect();
    for split in make_splits(&ids, &SplitRequest::Ratios([0.7, 0.15, 0.15]), 0)? {
        println!("{}: {} captions", split.name, split.sample_ids.len());
    }

    let hist = score_distribution(&agg.scores.iter().map(|s| s.score).collect::<Vec<_>>());
    println!(
        "histogram {:?}, mean {:.3}",
        hist.counts,
        hist.mean.unwrap_or(f64::NAN)
    );
    Ok(())
}
