//! Phenotype-adaptive sleep-apnea screening from SpO2 and respiratory effort.
//!
//! For a new subject the pipeline picks the most similar annotated subjects
//! by phenotype, trains an RBF-kernel SVM on their epoch features, classifies
//! the subject's epochs, and turns the labels into apnea events and a
//! severity grade.

// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod loocv;
pub mod phenotype;
pub mod recording;
pub mod report;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
