//! Password corpus analytics and strong/weak password classification.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] parses leak-dump style record files and cleans them down to
//!   a deduplicated multiset of legal passwords.
//! * [`analytics`] ranks popular passwords and computes length and
//!   character-composition distributions.
//! * [`synth`] generates seeded synthetic corpora matching per-dataset
//!   target statistics.
//! * [`features`] turns passwords into eight numeric features, labels them,
//!   standardizes, splits and balances datasets.
//! * [`learn`] holds the six classifiers, evaluation metrics and grid search.
//! * [`pipeline`] ties scaling, balancing and fitting together.
//! * [`model_file`] and [`scoring`] persist trained models and score single
//!   passwords for the HTTP service.

pub mod analytics;
pub mod charclass;
pub mod corpus;
pub mod features;
pub mod io;
pub mod learn;
pub mod matrix;
pub mod model_file;
pub mod pipeline;
pub mod scoring;
pub mod synth;

pub use charclass::CharClass;
pub use corpus::{CleanPassword, CleaningReport, RecordSchema};
pub use features::{Features, LabeledDataset, ScalerParams};
pub use learn::{Hyperparams, ModelKind, TrainedModel};
pub use matrix::Matrix;
pub use model_file::ModelFile;

/// Shortest password kept by the cleaning pipeline.
pub const MIN_LENGTH: usize = 4;
/// Longest password kept by the cleaning pipeline.
pub const MAX_LENGTH: usize = 20;
/// Default seed for every stochastic step.
pub const DEFAULT_SEED: u64 = 42;
