//! Domain adaptation of WordPiece vocabularies.
//!
//! The pipeline mines domain subword candidates from a corpus, grows a
//! general-domain vocabulary step by step until the corpus occurrence
//! probability P(D) stops improving by more than a relative threshold,
//! initializes embeddings for the new tokens by averaging the embeddings of
//! their old segmentation, and prepares masked-LM data for continual
//! pretraining.
//!
//! ```
//! use vocadapt::corpus::CorpusSample;
//! use vocadapt::expansion::{expand_vocabulary, ExpansionConfig};
//! use vocadapt::tokenizer::Vocabulary;
//!
//! let raw = Vocabulary::from_tokens(["[UNK]", "l", "##y", "##m", "##p", "##h", "##o", "##a"]).unwrap();
//! let sample = CorpusSample::from_sentences(["lymphoma lymph", "lymphoma"]);
//! let config = ExpansionConfig { step: 4, ..Default::default() };
//! let out = expand_vocabulary(&sample, &raw, &config).unwrap();
//! assert_eq!(&out.vocab.entries()[..raw.len()], raw.entries());
//! ```

pub mod analysis;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod expansion;
pub mod metric;
pub mod mlm;
pub mod synth;
pub mod tokenizer;

pub use error::{Error, Result};
