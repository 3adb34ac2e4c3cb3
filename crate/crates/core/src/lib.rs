//! Discover, verify and manipulate important neurons across several
//! independently trained models that share one analysis corpus.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dataset;
pub mod erasure;
pub mod error;
pub mod numerics;
pub mod probe;
pub mod ranking;
pub mod synth;
pub mod viz;

pub use error::{Error, Result};
pub use nalgebra;

pub use control::{ControlPlan, SuccessReport, ThresholdDecoder};
pub use dataset::{
    load_dataset, write_dataset, ActivationDataset, ActivationMatrix, AlignmentSet, ModelRecord, PropertyAnnotation,
    Side, TokenCorpus,
};
pub use erasure::{ErasureCurve, ErasureMask, KSpec, Origin, Scorer};
pub use probe::{ClassificationReport, GaussianClassModel, ProbeReport};
pub use ranking::{NeuronRanking, RankMethod};
pub use synth::{GroundTruth, SynthSpec};
pub use viz::HeatmapDoc;
