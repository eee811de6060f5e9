//! Pairwise protocols: caption preference with drawn references, and true vs
//! foiled caption detection. In both, a pair counts as correct only when the
//! expected caption scores strictly higher; exact ties are wrong.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::embed_io::EmbeddingSample;
use crate::error::{Error, Result};
use crate::head::{score_parallel, HeadConfig, HeadParams};
use crate::util::{stable_hash, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionEmbedding {
    pub clip: Vec<f32>,
    pub rb: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PascalCategory {
    /// Two correct human captions.
    HC,
    /// Two human captions, one of them incorrect.
    HI,
    /// Human vs machine.
    HM,
    /// Machine vs machine.
    MM,
}

impl PascalCategory {
    pub const ALL: [PascalCategory; 4] = [
        PascalCategory::HC,
        PascalCategory::HI,
        PascalCategory::HM,
        PascalCategory::MM,
    ];
}

impl fmt::Display for PascalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PascalPair {
    pub pair_id: String,
    pub image_id: String,
    pub image: Vec<f32>,
    pub caption_a: CaptionEmbedding,
    pub caption_b: CaptionEmbedding,
    pub pool_clip: Vec<Vec<f32>>,
    pub pool_rb: Vec<Vec<f32>>,
    pub category: PascalCategory,
    pub winner: Winner,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryAccuracy {
    pub accuracy: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PascalResult {
    pub per_category: BTreeMap<PascalCategory, CategoryAccuracy>,
    /// Unweighted mean over the categories that have pairs.
    pub mean: f64,
}

fn candidate_sample(
    id: String,
    caption: &CaptionEmbedding,
    image: &[f32],
    refs_clip: Vec<Vec<f32>>,
    refs_rb: Vec<Vec<f32>>,
) -> EmbeddingSample {
    EmbeddingSample {
        sample_id: id,
        cand_clip: caption.clip.clone(),
        cand_rb: caption.rb.clone(),
        refs_clip,
        refs_rb,
        img: image.to_vec(),
        score: None,
    }
}

/// Reference indices drawn for one pair. Depends only on `(seed, pair_id)`,
/// so results do not change when pairs are reordered.
pub fn draw_references(pair_id: &str, pool: usize, draws: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, stable_hash(pair_id));
    let mut idx = index::sample(&mut rng, pool, draws).into_vec();
    idx.sort_unstable();
    idx
}

pub fn pascal_accuracy(
    pairs: &[PascalPair],
    params: &HeadParams,
    config: &HeadConfig,
    draws: usize,
    seed: u64,
) -> Result<PascalResult> {
    pascal_accuracy_jobs(pairs, params, config, draws, seed, 1)
}

pub fn pascal_accuracy_jobs(
    pairs: &[PascalPair],
    params: &HeadParams,
    config: &HeadConfig,
    draws: usize,
    seed: u64,
    jobs: usize,
) -> Result<PascalResult> {
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    if draws == 0 {
        return Err(Error::InvalidPair {
            pair_id: String::new(),
            reason: "draw count must be at least 1".into(),
        });
    }
    let mut samples = Vec::with_capacity(2 * pairs.len());
    for p in pairs {
        if p.pool_clip.len() != p.pool_rb.len() {
            return Err(Error::InvalidPair {
                pair_id: p.pair_id.clone(),
                reason: "clip and roberta pools differ in size".into(),
            });
        }
        if p.pool_clip.len() < draws {
            return Err(Error::PoolTooSmall {
                pair_id: p.pair_id.clone(),
                pool: p.pool_clip.len(),
                draws,
            });
        }
        let idx = draw_references(&p.pair_id, p.pool_clip.len(), draws, seed);
        let refs_clip: Vec<_> = idx.iter().map(|&i| p.pool_clip[i].clone()).collect();
        let refs_rb: Vec<_> = idx.iter().map(|&i| p.pool_rb[i].clone()).collect();
        samples.push(candidate_sample(
            format!("{}/A", p.pair_id),
            &p.caption_a,
            &p.image,
            refs_clip.clone(),
            refs_rb.clone(),
        ));
        samples.push(candidate_sample(
            format!("{}/B", p.pair_id),
            &p.caption_b,
            &p.image,
            refs_clip,
            refs_rb,
        ));
    }
    let scores = score_parallel(&samples, params, config, jobs)?;

    let mut tally: BTreeMap<PascalCategory, (usize, usize)> = BTreeMap::new();
    for (p, s) in pairs.iter().zip(scores.chunks_exact(2)) {
        let (a, b) = (s[0].y_hat, s[1].y_hat);
        let correct = match p.winner {
            Winner::A => a > b,
            Winner::B => b > a,
        };
        let e = tally.entry(p.category).or_default();
        e.0 += usize::from(correct);
        e.1 += 1;
    }
    let per_category: BTreeMap<_, _> = tally
        .into_iter()
        .map(|(cat, (ok, n))| {
            (
                cat,
                CategoryAccuracy {
                    accuracy: ok as f64 / n as f64,
                    pairs: n,
                },
            )
        })
        .collect();
    let mean = per_category.values().map(|c| c.accuracy).sum::<f64>() / per_category.len() as f64;
    Ok(PascalResult { per_category, mean })
}

/// Averages [`pascal_accuracy`] over `repeats` draws seeded `seed`,
/// `seed + 1`, ...
pub fn pascal_accuracy_repeated(
    pairs: &[PascalPair],
    params: &HeadParams,
    config: &HeadConfig,
    draws: usize,
    seed: u64,
    repeats: usize,
    jobs: usize,
) -> Result<PascalResult> {
    if repeats == 0 {
        return Err(Error::InvalidPair {
            pair_id: String::new(),
            reason: "repeats must be at least 1".into(),
        });
    }
    let runs = (0..repeats as u64)
        .map(|r| pascal_accuracy_jobs(pairs, params, config, draws, seed.wrapping_add(r), jobs))
        .collect::<Result<Vec<_>>>()?;
    let mut per_category = runs[0].per_category.clone();
    for (cat, acc) in per_category.iter_mut() {
        acc.accuracy = runs
            .iter()
            .map(|r| r.per_category[cat].accuracy)
            .sum::<f64>()
            / repeats as f64;
    }
    let mean = runs.iter().map(|r| r.mean).sum::<f64>() / repeats as f64;
    Ok(PascalResult { per_category, mean })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoilPair {
    pub pair_id: String,
    pub image_id: String,
    pub image: Vec<f32>,
    pub true_caption: CaptionEmbedding,
    pub foil_caption: CaptionEmbedding,
    pub refs_clip: Vec<Vec<f32>>,
    pub refs_rb: Vec<Vec<f32>>,
}

impl FoilPair {
    pub fn n_refs(&self) -> usize {
        self.refs_clip.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoilAccuracy {
    /// Reference setting: 1 or 4.
    pub refs: usize,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

/// Accuracy per reference setting, ordered by setting.
pub fn foil_accuracy(
    pairs: &[FoilPair],
    params: &HeadParams,
    config: &HeadConfig,
) -> Result<Vec<FoilAccuracy>> {
    foil_accuracy_jobs(pairs, params, config, 1)
}

pub fn foil_accuracy_jobs(
    pairs: &[FoilPair],
    params: &HeadParams,
    config: &HeadConfig,
    jobs: usize,
) -> Result<Vec<FoilAccuracy>> {
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let mut samples = Vec::with_capacity(2 * pairs.len());
    for p in pairs {
        if !matches!(p.n_refs(), 1 | 4) || p.refs_rb.len() != p.n_refs() {
            return Err(Error::InvalidPair {
                pair_id: p.pair_id.clone(),
                reason: format!("reference count must be 1 or 4, got {}", p.n_refs()),
            });
        }
        for (tag, caption) in [("true", &p.true_caption), ("foil", &p.foil_caption)] {
            samples.push(candidate_sample(
                format!("{}/{tag}", p.pair_id),
                caption,
                &p.image,
                p.refs_clip.clone(),
                p.refs_rb.clone(),
            ));
        }
    }
    let scores = score_parallel(&samples, params, config, jobs)?;
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (p, s) in pairs.iter().zip(scores.chunks_exact(2)) {
        let e = tally.entry(p.n_refs()).or_default();
        e.0 += usize::from(s[0].y_hat > s[1].y_hat);
        e.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(refs, (correct, total))| FoilAccuracy {
            refs,
            accuracy: correct as f64 / total as f64,
            correct,
            total,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_io::synth::random_vector;
    use crate::head::{init_params, InputDims};
    use crate::util::stream_rng;

    const DC: usize = 3;
    const DR: usize = 4;

    fn head() -> (HeadConfig, HeadParams) {
        let cfg = HeadConfig {
            d_h: 4,
            mlp1_hidden: vec![6],
            mlp2_hidden: vec![],
            ..HeadConfig::default()
        };
        let params = init_params(
            &cfg,
            InputDims {
                d_clip: DC,
                d_rb: DR,
            },
        )
        .unwrap();
        (cfg, params)
    }

    fn caption(rng: &mut rand_chacha::ChaCha8Rng) -> CaptionEmbedding {
        CaptionEmbedding {
            clip: random_vector(rng, DC),
            rb: random_vector(rng, DR),
        }
    }

    fn pascal_pair(id: &str, identical: bool, category: PascalCategory) -> PascalPair {
        let mut rng = stream_rng(stable_hash(id), 0);
        let a = caption(&mut rng);
        let b = if identical {
            a.clone()
        } else {
            caption(&mut rng)
        };
        PascalPair {
            pair_id: id.into(),
            image_id: "img".into(),
            image: random_vector(&mut rng, DC),
            caption_a: a,
            caption_b: b,
            pool_clip: (0..8).map(|_| random_vector(&mut rng, DC)).collect(),
            pool_rb: (0..8).map(|_| random_vector(&mut rng, DR)).collect(),
            category,
            winner: Winner::A,
        }
    }

    #[test]
    fn identical_captions_count_as_wrong() {
        let (cfg, params) = head();
        let pairs: Vec<_> = (0..6)
            .map(|i| pascal_pair(&format!("p{i}"), true, PascalCategory::HC))
            .collect();
        let r = pascal_accuracy(&pairs, &params, &cfg, 5, 1).unwrap();
        assert_eq!(r.per_category[&PascalCategory::HC].accuracy, 0.0);
    }

    #[test]
    fn constant_metric_scores_zero() {
        let (cfg, mut params) = head();
        for t in params.tensors_mut() {
            t.fill(0.0);
        }
        let pairs: Vec<_> = PascalCategory::ALL
            .iter()
            .enumerate()
            .map(|(i, &c)| pascal_pair(&format!("q{i}"), false, c))
            .collect();
        let r = pascal_accuracy(&pairs, &params, &cfg, 5, 1).unwrap();
        assert_eq!(r.per_category.len(), 4);
        assert!(r.per_category.values().all(|c| c.accuracy == 0.0));
        assert_eq!(r.mean, 0.0);
    }

    #[test]
    fn pool_must_cover_the_draws() {
        let (cfg, params) = head();
        let err = pascal_accuracy(
            &[pascal_pair("x", false, PascalCategory::HM)],
            &params,
            &cfg,
            9,
            0,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::PoolTooSmall {
                pool: 8,
                draws: 9,
                ..
            }
        ));
    }

    #[test]
    fn draws_are_distinct_and_keyed_by_pair_id() {
        let a = draw_references("pair-1", 48, 5, 3);
        assert_eq!(a, draw_references("pair-1", 48, 5, 3));
        let mut d = a.clone();
        d.dedup();
        assert_eq!(d.len(), 5);
        assert!(a.iter().all(|&i| i < 48));
        assert_ne!(a, draw_references("pair-1", 48, 5, 4));
    }

    #[test]
    fn pair_order_does_not_matter() {
        let (cfg, params) = head();
        let mut pairs: Vec<_> = (0..12)
            .map(|i| pascal_pair(&format!("r{i}"), false, PascalCategory::ALL[i % 4]))
            .collect();
        let fwd = pascal_accuracy(&pairs, &params, &cfg, 3, 5).unwrap();
        pairs.reverse();
        assert_eq!(pascal_accuracy(&pairs, &params, &cfg, 3, 5).unwrap(), fwd);
    }

    #[test]
    fn foil_identical_captions_are_wrong() {
        let (cfg, params) = head();
        let mut rng = stream_rng(1, 1);
        let c = caption(&mut rng);
        let pair = FoilPair {
            pair_id: "f".into(),
            image_id: "i".into(),
            image: random_vector(&mut rng, DC),
            true_caption: c.clone(),
            foil_caption: c,
            refs_clip: vec![random_vector(&mut rng, DC)],
            refs_rb: vec![random_vector(&mut rng, DR)],
        };
        let acc = foil_accuracy(&[pair], &params, &cfg).unwrap();
        assert_eq!(acc.len(), 1);
        assert_eq!((acc[0].refs, acc[0].accuracy), (1, 0.0));
    }

    #[test]
    fn foil_rejects_empty_and_bad_settings() {
        let (cfg, params) = head();
        let err = foil_accuracy(&[], &params, &cfg).unwrap_err();
        assert_eq!(err.to_string(), "no pairs");
        let mut rng = stream_rng(2, 1);
        let pair = FoilPair {
            pair_id: "f".into(),
            image_id: "i".into(),
            image: random_vector(&mut rng, DC),
            true_caption: caption(&mut rng),
            foil_caption: caption(&mut rng),
            refs_clip: (0..2).map(|_| random_vector(&mut rng, DC)).collect(),
            refs_rb: (0..2).map(|_| random_vector(&mut rng, DR)).collect(),
        };
        assert!(matches!(
            foil_accuracy(&[pair], &params, &cfg),
            Err(Error::InvalidPair { .. })
        ));
    }
}
