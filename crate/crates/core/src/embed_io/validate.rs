use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::EmbeddingSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    NonFiniteVector,
    ScoreOutOfRange,
    RefCountMismatch,
    NoReferences,
    DimensionMismatch,
    DuplicateId,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingKind::NonFiniteVector => "non-finite vector",
            FindingKind::ScoreOutOfRange => "score out of range",
            FindingKind::RefCountMismatch => "ref count mismatch",
            FindingKind::NoReferences => "no references",
            FindingKind::DimensionMismatch => "dimension mismatch",
            FindingKind::DuplicateId => "duplicate sample id",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub sample_id: String,
    pub kind: FindingKind,
    pub detail: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.sample_id, self.kind, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub sample_count: usize,
    pub d_clip: Option<usize>,
    pub d_rb: Option<usize>,
    pub min_refs: Option<usize>,
    pub max_refs: Option<usize>,
    pub mean_refs: f64,
    /// Fraction of samples that carry a human score.
    pub score_presence: f64,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Audits a set of samples, reporting every invariant violation by id.
///
/// Dimensions are taken from the first sample; later samples are compared
/// against it.
pub fn validate_bundle(samples: &[EmbeddingSample]) -> ValidationReport {
    let d_clip = samples.first().map(|s| s.d_clip());
    let d_rb = samples.first().map(|s| s.d_rb());
    let mut findings = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |s: &EmbeddingSample, kind, detail: String| {
        findings.push(Finding {
            sample_id: s.sample_id.clone(),
            kind,
            detail,
        })
    };

    for s in samples {
        if !seen.insert(s.sample_id.as_str()) {
            push(s, FindingKind::DuplicateId, String::new());
        }
        if s.refs_clip.len() != s.refs_rb.len() {
            push(
                s,
                FindingKind::RefCountMismatch,
                format!("clip {} vs roberta {}", s.refs_clip.len(), s.refs_rb.len()),
            );
        }
        if s.refs_clip.is_empty() {
            push(s, FindingKind::NoReferences, String::new());
        }
        if let Some(field) = s.first_non_finite() {
            push(s, FindingKind::NonFiniteVector, field.to_string());
        }
        if let Some(score) = s.score {
            if !(0.0..=1.0).contains(&score) {
                push(s, FindingKind::ScoreOutOfRange, score.to_string());
            }
        }
        if let (Some(dc), Some(dr)) = (d_clip, d_rb) {
            let clip_ok = std::iter::once(&s.cand_clip)
                .chain(&s.refs_clip)
                .chain(std::iter::once(&s.img))
                .all(|v| v.len() == dc);
            let rb_ok = std::iter::once(&s.cand_rb)
                .chain(&s.refs_rb)
                .all(|v| v.len() == dr);
            if !(clip_ok && rb_ok) {
                push(
                    s,
                    FindingKind::DimensionMismatch,
                    format!("expected d_clip={dc}, d_rb={dr}"),
                );
            }
        }
    }

    let refs = samples.iter().map(|s| s.n_refs());
    let scored = samples.iter().filter(|s| s.score.is_some()).count();
    let n = samples.len();
    ValidationReport {
        sample_count: n,
        d_clip,
        d_rb,
        min_refs: refs.clone().min(),
        max_refs: refs.clone().max(),
        mean_refs: if n == 0 {
            0.0
        } else {
            refs.sum::<usize>() as f64 / n as f64
        },
        score_presence: if n == 0 {
            0.0
        } else {
            scored as f64 / n as f64
        },
        findings,
    }
}
