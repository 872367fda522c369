//! Speaker diarization backend built on allocation only.
//!
//! Everything here is pure computation over in-memory annotations, embeddings
//! and frame features: exact millisecond interval algebra, corpus metadata
//! statistics, uniform segmentation, PLDA and cosine scoring, AHC and spectral
//! clustering, GMM and VB-HMM resegmentation, overlap label assignment, strict
//! diarization error rate, and a seeded synthetic corpus generator.
//!
//! File formats, the command line and the batch pipeline live in the `diarkit`
//! companion crate.
#![no_std]
#![forbid(unsafe_code)]
extern crate alloc;

mod error;
pub mod frames;
pub mod linalg;
pub mod timeline;

pub mod clustering;
pub mod metadata;
pub mod metrics;
pub mod reseg;
pub mod scoring;
pub mod segmenter;
pub mod synthgen;

pub use error::{Error, Result};
pub use frames::{FrameFeatures, VadLabels};
pub use timeline::{
    interval_intersection_length, timeline_union, Annotation, EmbeddingSet, Interval, Millis,
    ScoreMatrix, Segment, SpeakerTurn, Timeline,
};
