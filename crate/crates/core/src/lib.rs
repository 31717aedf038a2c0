//! Sparse decomposable structure learning with the maximally filtered clique
//! forest (MFCF) search.
//!
//! The crate builds a clique forest greedily from a data or similarity matrix
//! ([`mfcf`]), turns it into a sparse Gaussian precision matrix with optional
//! shrinkage ([`gaussian`]), and benchmarks the estimates against baselines on
//! synthetic or file-supplied data ([`experiment`]).
//!
//! ```
//! use mfcf::{mfcf::{mfcf, MfcfConfig, SimilarityInput}, gain::GainMode};
//! use nalgebra::DMatrix;
//!
//! let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.1, 0.6, 1.0, 0.4, 0.1, 0.4, 1.0]);
//! let input = SimilarityInput::Similarity { matrix: corr, n_obs: None };
//! let cfg = MfcfConfig::fixed(2, Default::default()).with_mode(GainMode::GaussLoglik);
//! let forest = mfcf(&input, &cfg).unwrap();
//! assert_eq!(forest.cliques().len(), 2);
//! ```

pub mod error;
pub mod experiment;
pub mod gain;
pub mod gaussian;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod mfcf;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use gain::{GainConfig, GainFunction, GainMode, GainResult};
pub use gaussian::{CorrelationMatrix, PrecisionEstimate, TargetKind};
pub use graph::{AdjacencyView, Clique, CliqueForest, Separator, VertexId, VertexSet};
pub use mfcf::{MfcfConfig, SimilarityInput};

pub use nalgebra::DMatrix;
