//! Grounded abstractive summarization for long transcripts.
//!
//! The pipeline tethers every segment of a generated summary to one chunk of
//! the source transcript: transcripts are split into whole-sentence chunks,
//! summary sentences are aligned to chunks with a position-biased coverage
//! score, a chunk selector is trained with a monotonicity regularizer next to
//! a small encoder-decoder generator, and decoding emits summaries whose
//! segments each carry the chunk they were generated from.

pub mod aligner;
pub mod chunker;
pub mod datafilter;
pub mod decode;
pub mod diffkernel;
pub mod evalkit;
pub mod model;
pub mod rng;
pub mod synthcorpus;
pub mod textproc;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
