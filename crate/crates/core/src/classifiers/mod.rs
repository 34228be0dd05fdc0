//! Boosted stump classifiers: superpixel unaries and component presence.

mod boost;
mod cooccurrence;
mod train;

pub use boost::{auc, boost, boost_with, platt, sigmoid, BoostData, Calibration, RoundSampler, Stump, StumpEnsemble};
pub use cooccurrence::{mine_negatives, CooccurrenceMatrix, MINING_FLOOR};
pub use train::{
    component_examples, component_examples_in, component_feature_dim, component_features, train_presence, train_presence_from,
    train_unaries, train_unaries_on, train_unary, train_unary_from, unary_auc, unary_training_set, PresenceOptions, PresenceScorer,
    PresenceTraining, SuperpixelPool, UnaryOptions,
};
