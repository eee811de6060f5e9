//! JSONL protocol manifests that group bundle samples into benchmark pairs.
//!
//! ```text
//! {"kind":"pascal","pair_id":"p1","a":"s1","b":"s2","category":"HM","winner":"A"}
//! {"kind":"foil","pair_id":"f1","true":"s3","foil":"s4"}
//! ```
//!
//! Both samples of a pair must share the image embedding and the references;
//! for PASCAL pairs the references are the pool to draw from.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CaptionEmbedding, FoilPair, PascalCategory, PascalPair, Winner};
use crate::embed_io::EmbeddingSample;
use crate::error::{Error, Result};
use crate::util::{parse_jsonl, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolEntry {
    Pascal {
        pair_id: String,
        a: String,
        b: String,
        category: PascalCategory,
        winner: Winner,
    },
    Foil {
        pair_id: String,
        #[serde(rename = "true")]
        true_id: String,
        foil: String,
    },
}

pub fn read_protocol(path: impl AsRef<Path>) -> Result<Vec<ProtocolEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_jsonl(&text)
}

pub fn write_protocol(entries: &[ProtocolEntry], path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    write_atomic(path.as_ref(), &out)
}

fn index(samples: &[EmbeddingSample]) -> HashMap<&str, &EmbeddingSample> {
    samples.iter().map(|s| (s.sample_id.as_str(), s)).collect()
}

fn lookup<'a>(idx: &HashMap<&str, &'a EmbeddingSample>, id: &str) -> Result<&'a EmbeddingSample> {
    idx.get(id)
        .copied()
        .ok_or_else(|| Error::UnknownSample(id.to_string()))
}

fn caption(s: &EmbeddingSample) -> CaptionEmbedding {
    CaptionEmbedding {
        clip: s.cand_clip.clone(),
        rb: s.cand_rb.clone(),
    }
}

fn same_context(pair_id: &str, x: &EmbeddingSample, y: &EmbeddingSample) -> Result<()> {
    if x.img != y.img || x.refs_clip != y.refs_clip || x.refs_rb != y.refs_rb {
        return Err(Error::InvalidPair {
            pair_id: pair_id.to_string(),
            reason: format!(
                "samples {:?} and {:?} do not share image and references",
                x.sample_id, y.sample_id
            ),
        });
    }
    Ok(())
}

pub fn pascal_pairs(
    entries: &[ProtocolEntry],
    samples: &[EmbeddingSample],
) -> Result<Vec<PascalPair>> {
    let idx = index(samples);
    let mut out = Vec::new();
    for e in entries {
        if let ProtocolEntry::Pascal {
            pair_id,
            a,
            b,
            category,
            winner,
        } = e
        {
            let (sa, sb) = (lookup(&idx, a)?, lookup(&idx, b)?);
            same_context(pair_id, sa, sb)?;
            out.push(PascalPair {
                pair_id: pair_id.clone(),
                image_id: sa.sample_id.clone(),
                image: sa.img.clone(),
                caption_a: caption(sa),
                caption_b: caption(sb),
                pool_clip: sa.refs_clip.clone(),
                pool_rb: sa.refs_rb.clone(),
                category: *category,
                winner: *winner,
            });
        }
    }
    Ok(out)
}

pub fn foil_pairs(entries: &[ProtocolEntry], samples: &[EmbeddingSample]) -> Result<Vec<FoilPair>> {
    let idx = index(samples);
    let mut out = Vec::new();
    for e in entries {
        if let ProtocolEntry::Foil {
            pair_id,
            true_id,
            foil,
        } = e
        {
            let (st, sf) = (lookup(&idx, true_id)?, lookup(&idx, foil)?);
            same_context(pair_id, st, sf)?;
            out.push(FoilPair {
                pair_id: pair_id.clone(),
                image_id: st.sample_id.clone(),
                image: st.img.clone(),
                true_caption: caption(st),
                foil_caption: caption(sf),
                refs_clip: st.refs_clip.clone(),
                refs_rb: st.refs_rb.clone(),
            });
        }
    }
    Ok(out)
}
