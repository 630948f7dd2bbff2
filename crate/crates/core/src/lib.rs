//! Classification of quarter-hour weekly work diaries with a one-dimensional
//! Kohonen string, hierarchical regrouping of its units into superclasses,
//! a multidimensional-scaling check of the string's order, and statistical
//! profiling of the superclasses against a categorical questionnaire.

pub mod data_model;
pub mod error;
pub mod evaluation;
pub mod mds;
pub mod pipeline;
pub mod plot;
pub mod profiling;
pub mod som;
pub mod superclass;

pub use error::{Error, Result};
