use serde::{Deserialize, Serialize};

use super::HeadConfig;
use crate::embed_io::EmbeddingSample;
use crate::error::{Error, Result};

/// How a (candidate, other) vector pair is turned into features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `[c; r; |c - r|; c * r]`
    Full,
    /// `[c; r]`
    ConcatOnly,
}

impl FusionMode {
    pub fn width(self, d: usize) -> usize {
        match self {
            FusionMode::Full => 4 * d,
            FusionMode::ConcatOnly => 2 * d,
        }
    }
}

/// Output of [`fuse`]: `[c; r; |c - r|; c * r]`, length `4 d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionVector(Vec<f64>);

impl FusionVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn fuse(c: &[f64], r: &[f64]) -> Result<FusionVector> {
    if c.len() != r.len() {
        return Err(Error::DimensionMismatch {
            what: "fusion operands",
            expected: c.len(),
            got: r.len(),
        });
    }
    let mut out = vec![0.0; 4 * c.len()];
    fuse_into(
        &mut out,
        c.iter().copied(),
        r.iter().copied(),
        FusionMode::Full,
    );
    Ok(FusionVector(out))
}

/// Writes the fusion of `c` and `r` into `out`, which must be exactly
/// `mode.width(d)` long.
pub(crate) fn fuse_into<C, R>(out: &mut [f64], c: C, r: R, mode: FusionMode)
where
    C: ExactSizeIterator<Item = f64>,
    R: ExactSizeIterator<Item = f64>,
{
    let d = c.len();
    debug_assert_eq!(out.len(), mode.width(d));
    let (cs, rest) = out.split_at_mut(d);
    let (rs, rest) = rest.split_at_mut(d);
    match mode {
        FusionMode::ConcatOnly => {
            for (i, (a, b)) in c.zip(r).enumerate() {
                cs[i] = a;
                rs[i] = b;
            }
        }
        FusionMode::Full => {
            let (diff, prod) = rest.split_at_mut(d);
            for (i, (a, b)) in c.zip(r).enumerate() {
                cs[i] = a;
                rs[i] = b;
                diff[i] = (a - b).abs();
                prod[i] = a * b;
            }
        }
    }
}

fn widen(v: &[f32]) -> impl ExactSizeIterator<Item = f64> + '_ {
    v.iter().map(|&x| f64::from(x))
}

/// Length of the per-reference feature vector for this configuration.
pub fn h_inter_len(config: &HeadConfig, d_clip: usize, d_rb: usize) -> usize {
    let m = config.fusion_mode;
    let mut n = 0;
    if config.use_clip_text {
        n += m.width(d_clip);
    }
    if config.use_image {
        n += m.width(d_clip);
    }
    if config.use_roberta {
        n += m.width(d_rb);
    }
    n
}

/// Per-reference features: CLIP text-text, CLIP text-image and RoBERTa
/// text-text fusions, in that order, each present only if its stream is on.
pub fn build_h_inter(
    sample: &EmbeddingSample,
    ref_index: usize,
    config: &HeadConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if ref_index >= sample.n_refs() || ref_index >= sample.refs_rb.len() {
        return Err(Error::DimensionMismatch {
            what: "reference index",
            expected: sample.n_refs(),
            got: ref_index,
        });
    }
    check_sample_dims(sample)?;
    let mut row = vec![0.0; h_inter_len(config, sample.d_clip(), sample.d_rb())];
    fill_h_inter(&mut row, sample, ref_index, config);
    Ok(row)
}

pub(crate) fn check_sample_dims(sample: &EmbeddingSample) -> Result<()> {
    let (dc, dr) = (sample.d_clip(), sample.d_rb());
    if sample.refs_clip.len() != sample.refs_rb.len() {
        return Err(Error::RefCountMismatch {
            sample_id: sample.sample_id.clone(),
            clip: sample.refs_clip.len(),
            roberta: sample.refs_rb.len(),
        });
    }
    for v in sample.refs_clip.iter().chain(std::iter::once(&sample.img)) {
        if v.len() != dc {
            return Err(Error::DimensionMismatch {
                what: "clip vector",
                expected: dc,
                got: v.len(),
            });
        }
    }
    for v in &sample.refs_rb {
        if v.len() != dr {
            return Err(Error::DimensionMismatch {
                what: "roberta vector",
                expected: dr,
                got: v.len(),
            });
        }
    }
    Ok(())
}

/// Unchecked fill; `row` must have length [`h_inter_len`].
pub(crate) fn fill_h_inter(
    row: &mut [f64],
    sample: &EmbeddingSample,
    i: usize,
    config: &HeadConfig,
) {
    let m = config.fusion_mode;
    let mut rest = row;
    if config.use_clip_text {
        let (block, tail) = rest.split_at_mut(m.width(sample.d_clip()));
        fuse_into(
            block,
            widen(&sample.cand_clip),
            widen(&sample.refs_clip[i]),
            m,
        );
        rest = tail;
    }
    if config.use_image {
        let (block, tail) = rest.split_at_mut(m.width(sample.d_clip()));
        fuse_into(block, widen(&sample.cand_clip), widen(&sample.img), m);
        rest = tail;
    }
    if config.use_roberta {
        let (block, tail) = rest.split_at_mut(m.width(sample.d_rb()));
        fuse_into(block, widen(&sample.cand_rb), widen(&sample.refs_rb[i]), m);
        rest = tail;
    }
    debug_assert!(rest.is_empty());
}
