//! Multichannel sequence analysis of coded collaborative-process logs.
//!
//! The toolkit turns coded multichannel event logs into categorical
//! sequences and runs a three-layer analysis over them:
//!
//! 1. **Ingest** ([`scheme`]): a coding scheme (channels and code
//!    alphabets) plus coded events become aligned multichannel sequences,
//!    with [`reliability`] providing Krippendorff's alpha for the coding
//!    itself.
//! 2. **Sequence comparison** ([`seqdist`], [`clustering`]): optimal-matching
//!    edit distances between sequences, then Ward's hierarchical clustering
//!    over the distance matrix with tree cutting and fit diagnostics.
//! 3. **Cluster characterization** ([`stats`], [`ena`], [`hmm`],
//!    [`scoring`]): per-cluster code frequencies with ANOVA / Levene /
//!    Kruskal-Wallis, epistemic network projections of code co-occurrence,
//!    per-cluster hidden Markov models with EM estimation and BIC state
//!    selection, and concept-map performance comparison.
//!
//! [`pipeline`] orchestrates the full run and writes every artifact plus a
//! reproducibility manifest; [`render`] emits the static SVG figures.

pub mod clustering;
pub mod ena;
pub mod hmm;
pub mod io;
pub mod pipeline;
pub mod reliability;
pub mod render;
pub mod scheme;
pub mod scoring;
pub mod seqdist;
pub mod special;
pub mod stats;

pub use clustering::{cut_tree, ward_cluster, Dendrogram, Partition, WardVariant};
pub use scheme::{
    build_sequences, CodedEvent, CodingScheme, ConflictPolicy, Modality, MultichannelSequence,
};
pub use seqdist::{distance_matrix, om_distance, DistanceMatrix};

use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
///
/// The variant split mirrors the process exit-code contract: anything that
/// means "your input is wrong" maps to exit code 1, numeric failures map
/// to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed scheme or file schema (duplicate code, empty alphabet, ...).
    #[error("schema: {0}")]
    Schema(String),

    /// Input data violates a precondition of an operation.
    #[error("validation: {0}")]
    Validation(String),

    /// A numeric routine could not produce a meaningful result.
    #[error("computation: {0}")]
    Computation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: Box<csv::Error>,
    },

    /// A pipeline stage failed; carries the stage name per the run contract.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Exit code for the CLI: 0 is success, 1 validation, 2 computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Computation(_) => 2,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Error {
        Error::Csv {
            path: path.into(),
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
