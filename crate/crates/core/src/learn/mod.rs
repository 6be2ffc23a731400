//! Hashed n-gram featurizers, a multinomial logistic head trained by SGD,
//! and the data types they share.

mod data;
mod featurizer;
mod model;
mod text;
mod train;

pub use data::{dataset_hash, LabelMap, LabeledExample};
pub use featurizer::{
    FeatureMatrix, Featurizer, FeaturizerConfig, SparseVector, StopwordPolicy, TokenView,
    VocabularyPolicy, VocabularyPrior,
};
pub use model::{LinearModel, Prediction};
pub use text::{word_shape, words};
pub use train::{evaluate, train, TrainConfig, TrainOutcome};
