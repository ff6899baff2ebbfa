//! Relevance filtering of social-media posts about water quality.
//!
//! The pipeline ingests posts, cleans their text, balances the training
//! classes by up-sampling, trains up to three binary classifiers, fuses their
//! posterior probabilities and evaluates the resulting labels.

pub mod backends;
pub mod corpus;
pub mod fusion;
pub mod metrics;
pub mod textprep;
pub mod runner;

pub use backends::{
    build, predict_proba, train, BackendError, BackendId, BackendSpec, CacheResolver,
    CheckpointResolver, HyperParams, Model, TrainedModel,
};
pub use corpus::{
    count_classes, generate_synthetic, ingest, split, upsample, ClassCounts, Corpus, CorpusError,
    Format, Label, Role, SocialPost,
};
pub use fusion::{decide, fuse, merit_weights, FusionConfig, FusionError, PosteriorScores};
pub use metrics::{confusion, report, ConfusionMatrix, MetricsError, MetricsReport};
pub use textprep::{clean, clean_corpus, CleanConfig, CleanText, Cleaner};
pub use runner::{compare, execute, Overrides, RunConfig, RunError, RunId, RunManifest, Stage};
