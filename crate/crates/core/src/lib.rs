//! Camera pose regression at desk scale.
//!
//! A small reverse-mode autodiff core, quaternion geometry, image
//! pipelines, rotation augmentation with label rewriting, CNN backbones with
//! FC or LSTM heads, pose losses with Adam, dataset ingestion, a synthetic
//! scene renderer and an experiment harness.

// `!(x > 0.0)` is how NaN gets rejected alongside the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augmentation;
pub mod autodiff;
pub mod dataset_io;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod imaging;
pub mod keyvalue;
pub mod loss_optim;
pub mod model;
pub mod synthetic;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/autodiff.md")]
    struct Autodiff;
    #[doc = include_str!("../../../book/src/geometry.md")]
    struct Geometry;
    #[doc = include_str!("../../../book/src/imaging.md")]
    struct Imaging;
    #[doc = include_str!("../../../book/src/augmentation.md")]
    struct Augmentation;
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/loss.md")]
    struct Loss;
    #[doc = include_str!("../../../book/src/datasets.md")]
    struct Datasets;
    #[doc = include_str!("../../../book/src/synthetic.md")]
    struct Synthetic;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
