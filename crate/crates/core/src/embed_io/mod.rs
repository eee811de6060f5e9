//! Embedding bundles (`.peb`): the binary interchange format between the
//! encoder sidecar and the scoring head.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! header  magic "PEB1" | version u16 | d_clip u32 | d_rb u32 | sample_count u64 | flags u32
//! record  id_len u32 | id bytes (UTF-8) | n_refs u32
//!         cand_clip[d_clip] cand_rb[d_rb] refs_clip[n_refs * d_clip]
//!         refs_rb[n_refs * d_rb] img[d_clip] score     (f32 each)
//! ```
//!
//! Flag bit 0 marks that every record carries a score. When it is clear the
//! score slot of every record holds NaN.

mod manifest;
pub mod synth;
mod validate;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::util::write_atomic;

pub use manifest::{read_manifest, write_manifest, DatasetSplit, ManifestEntry, SplitName};
pub use validate::{validate_bundle, Finding, FindingKind, ValidationReport};

pub const MAGIC: [u8; 4] = *b"PEB1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8 + 4;
pub const FLAG_SCORES: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleHeader {
    pub version: u16,
    pub d_clip: u32,
    pub d_rb: u32,
    pub sample_count: u64,
    pub flags: u32,
}

impl BundleHeader {
    pub fn has_scores(&self) -> bool {
        self.flags & FLAG_SCORES != 0
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.d_clip.to_le_bytes());
        out.extend_from_slice(&self.d_rb.to_le_bytes());
        out.extend_from_slice(&self.sample_count.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
    }
}

/// One image with a candidate caption and its references, as encoder vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSample {
    pub sample_id: String,
    /// CLIP text embedding of the candidate.
    pub cand_clip: Vec<f32>,
    /// RoBERTa sentence embedding of the candidate.
    pub cand_rb: Vec<f32>,
    pub refs_clip: Vec<Vec<f32>>,
    pub refs_rb: Vec<Vec<f32>>,
    /// CLIP image embedding.
    pub img: Vec<f32>,
    /// Human judgment in `[0, 1]`.
    pub score: Option<f32>,
}

impl EmbeddingSample {
    pub fn n_refs(&self) -> usize {
        self.refs_clip.len()
    }

    pub fn d_clip(&self) -> usize {
        self.cand_clip.len()
    }

    pub fn d_rb(&self) -> usize {
        self.cand_rb.len()
    }

    /// Checks the per-sample invariants that do not depend on other samples.
    pub fn check(&self) -> Result<()> {
        if self.refs_clip.len() != self.refs_rb.len() {
            return Err(Error::RefCountMismatch {
                sample_id: self.sample_id.clone(),
                clip: self.refs_clip.len(),
                roberta: self.refs_rb.len(),
            });
        }
        if self.refs_clip.is_empty() {
            return Err(Error::NoReferences(self.sample_id.clone()));
        }
        if let Some(field) = self.first_non_finite() {
            return Err(Error::NonFinite {
                sample_id: self.sample_id.clone(),
                field,
            });
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::ScoreOutOfRange {
                    sample_id: self.sample_id.clone(),
                    score: f64::from(s),
                });
            }
        }
        Ok(())
    }

    pub(crate) fn first_non_finite(&self) -> Option<&'static str> {
        let finite = |v: &[f32]| v.iter().all(|x| x.is_finite());
        if !finite(&self.cand_clip) {
            Some("cand_clip")
        } else if !finite(&self.cand_rb) {
            Some("cand_rb")
        } else if !self.refs_clip.iter().all(|r| finite(r)) {
            Some("refs_clip")
        } else if !self.refs_rb.iter().all(|r| finite(r)) {
            Some("refs_rb")
        } else if !finite(&self.img) {
            Some("img")
        } else {
            None
        }
    }

    fn check_dims(&self, d_clip: usize, d_rb: usize) -> Result<()> {
        let clip_vectors = std::iter::once(&self.cand_clip)
            .chain(&self.refs_clip)
            .chain(std::iter::once(&self.img));
        for v in clip_vectors {
            if v.len() != d_clip {
                return Err(Error::DimensionMismatch {
                    what: "clip vector",
                    expected: d_clip,
                    got: v.len(),
                });
            }
        }
        for v in std::iter::once(&self.cand_rb).chain(&self.refs_rb) {
            if v.len() != d_rb {
                return Err(Error::DimensionMismatch {
                    what: "roberta vector",
                    expected: d_rb,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Serializes `samples` into bundle bytes with the given dimensions.
pub fn encode_bundle(samples: &[EmbeddingSample], d_clip: usize, d_rb: usize) -> Result<Vec<u8>> {
    if d_clip == 0 || d_rb == 0 {
        return Err(Error::InvalidHeader("dimensions must be at least 1".into()));
    }
    let with_scores = samples.first().is_some_and(|s| s.score.is_some());
    for s in samples {
        if s.refs_clip.len() != s.refs_rb.len() {
            return Err(Error::RefCountMismatch {
                sample_id: s.sample_id.clone(),
                clip: s.refs_clip.len(),
                roberta: s.refs_rb.len(),
            });
        }
        s.check_dims(d_clip, d_rb)?;
        if s.score.is_some() != with_scores {
            return Err(Error::ScoreFlagMismatch {
                sample_id: s.sample_id.clone(),
            });
        }
    }

    let header = BundleHeader {
        version: VERSION,
        d_clip: to_u32(d_clip, "d_clip")?,
        d_rb: to_u32(d_rb, "d_rb")?,
        sample_count: samples.len() as u64,
        flags: if with_scores { FLAG_SCORES } else { 0 },
    };
    let mut out = Vec::with_capacity(HEADER_LEN);
    header.encode(&mut out);
    for s in samples {
        out.extend_from_slice(&to_u32(s.sample_id.len(), "sample_id length")?.to_le_bytes());
        out.extend_from_slice(s.sample_id.as_bytes());
        out.extend_from_slice(&to_u32(s.n_refs(), "n_refs")?.to_le_bytes());
        let vectors = std::iter::once(&s.cand_clip)
            .chain(std::iter::once(&s.cand_rb))
            .chain(&s.refs_clip)
            .chain(&s.refs_rb)
            .chain(std::iter::once(&s.img));
        for v in vectors {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend_from_slice(&s.score.unwrap_or(f32::NAN).to_le_bytes());
    }
    Ok(out)
}

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidHeader(format!("{what} {n} exceeds u32")))
}

/// Writes a bundle atomically and returns the number of bytes written.
///
/// Dimensions are taken from the first sample; an empty bundle needs
/// [`write_empty_bundle`] since it has nothing to take them from.
pub fn write_bundle(samples: &[EmbeddingSample], path: impl AsRef<Path>) -> Result<u64> {
    let first = samples
        .first()
        .ok_or(Error::Empty("bundle; use write_empty_bundle"))?;
    write_bundle_with_dims(samples, first.d_clip(), first.d_rb(), path)
}

pub fn write_empty_bundle(d_clip: usize, d_rb: usize, path: impl AsRef<Path>) -> Result<u64> {
    write_bundle_with_dims(&[], d_clip, d_rb, path)
}

pub fn write_bundle_with_dims(
    samples: &[EmbeddingSample],
    d_clip: usize,
    d_rb: usize,
    path: impl AsRef<Path>,
) -> Result<u64> {
    let bytes = encode_bundle(samples, d_clip, d_rb)?;
    write_atomic(path.as_ref(), &bytes)?;
    Ok(bytes.len() as u64)
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<Vec<EmbeddingSample>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(decode_bundle(&bytes)?.1)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n - available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or(Error::InvalidHeader("overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<BundleHeader> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let header = BundleHeader {
        version: cur.u16()?,
        d_clip: cur.u32()?,
        d_rb: cur.u32()?,
        sample_count: cur.u64()?,
        flags: cur.u32()?,
    };
    if header.version != VERSION {
        return Err(Error::UnsupportedVersion(header.version));
    }
    if header.d_clip == 0 || header.d_rb == 0 {
        return Err(Error::InvalidHeader("dimensions must be at least 1".into()));
    }
    if header.flags & !FLAG_SCORES != 0 {
        return Err(Error::InvalidHeader(format!(
            "unknown flags {:#x}",
            header.flags
        )));
    }
    Ok(header)
}

/// Parses a complete bundle. Any invariant violation is an error; no
/// partial result is returned.
pub fn decode_bundle(bytes: &[u8]) -> Result<(BundleHeader, Vec<EmbeddingSample>)> {
    let header = decode_header(bytes)?;
    let d_clip = header.d_clip as usize;
    let d_rb = header.d_rb as usize;
    let mut cur = Cursor {
        bytes,
        pos: HEADER_LEN,
    };
    // Every record is at least id_len + n_refs + one float; cap the
    // preallocation so a corrupt count cannot exhaust memory.
    let cap = (header.sample_count as usize).min(bytes.len() / 12);
    let mut samples = Vec::with_capacity(cap);
    for _ in 0..header.sample_count {
        let id_len = cur.u32()? as usize;
        let sample_id = String::from_utf8(cur.take(id_len)?.to_vec())
            .map_err(|_| Error::InvalidHeader(format!("sample id at {} is not UTF-8", cur.pos)))?;
        let n_refs = cur.u32()? as usize;
        let cand_clip = cur.floats(d_clip)?;
        let cand_rb = cur.floats(d_rb)?;
        let refs_clip = (0..n_refs)
            .map(|_| cur.floats(d_clip))
            .collect::<Result<Vec<_>>>()?;
        let refs_rb = (0..n_refs)
            .map(|_| cur.floats(d_rb))
            .collect::<Result<Vec<_>>>()?;
        let img = cur.floats(d_clip)?;
        let raw_score = cur.floats(1)?[0];
        let score = match (header.has_scores(), raw_score.is_nan()) {
            (true, false) => Some(raw_score),
            (false, true) => None,
            _ => return Err(Error::ScoreFlagMismatch { sample_id }),
        };
        let sample = EmbeddingSample {
            sample_id,
            cand_clip,
            cand_rb,
            refs_clip,
            refs_rb,
            img,
            score,
        };
        sample.check()?;
        samples.push(sample);
    }
    let rest = bytes.len() - cur.pos;
    if rest != 0 {
        return Err(Error::TrailingBytes(rest));
    }
    Ok((header, samples))
}
