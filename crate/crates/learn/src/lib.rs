//! Learnable stand-ins trained on the engine's own dialogue logs: a next-action
//! classifier and an entity tagger, with the dataset pipeline and metrics around
//! them.
//!
//! Labels are never annotated by hand. The next action of each user turn and the
//! entity spans come from the rule engine's records, so a dataset can be rebuilt
//! from the exported files and replayed against the engine to check its labels.

pub mod dataset;
pub mod evaluate;
pub mod metrics;
pub mod nap;
mod perceptron;
pub mod ner;

pub use dataset::{build_dataset, build_from_export, BuildOptions, DatasetError, Dialogue, Example, LabeledDataset, SplitRatios};
pub use evaluate::{evaluate, label_mismatches, ConfusionReport, Evaluation, Metrics};
pub use nap::{train_nap, NapModel, NapSetting, TrainConfig, TrainError};
pub use ner::{train_ner, Gazetteer, NerModel};
