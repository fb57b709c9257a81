//! Phoneme-to-viseme map derivation and speaker-dependency experiments for
//! machine lipreading.
//!
//! The pipeline runs in two passes per speaker. A phoneme-level HMM pass
//! produces confusion matrices from held-out recognition output; those
//! matrices are clustered into phoneme-to-viseme maps. A viseme-level pass
//! then trains classifiers labelled by each map and decodes continuous
//! speech against a bigram word network, scoring word correctness.
//!
//! Modules follow the pipeline order:
//!
//! * [`corpus`]: dictionary, utterances, fold splits and a synthetic corpus generator
//! * [`align`]: edit-distance alignment, confusion accumulation and word correctness
//! * [`p2v`]: confusion clustering into viseme maps
//! * [`hmm`]: left-to-right HMMs with diagonal GMM emissions
//! * [`lm`]: add-one smoothed bigram networks
//! * [`decoder`]: token-passing Viterbi decoding
//! * [`harness`]: the experiment grid, weighting table and difference report

pub mod align;
pub mod corpus;
pub mod decoder;
mod error;
pub mod harness;
pub mod hmm;
pub mod lm;
pub mod p2v;

pub use error::{Error, Result};

/// A labelled half-open frame range `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        Span {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// True when `spans` are contiguous and cover exactly `[0, frames)`.
pub fn spans_partition(spans: &[Span], frames: usize) -> bool {
    let mut cursor = 0;
    for s in spans {
        if s.start != cursor || s.end <= s.start {
            return false;
        }
        cursor = s.end;
    }
    cursor == frames
}
