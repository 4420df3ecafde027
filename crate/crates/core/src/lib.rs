//! Multimodal fusion classifier for volumetric scans plus functional and
//! structural connectivity graphs, with a guided-backpropagation
//! explanation pipeline and nonparametric group statistics.
//!
//! The crate is organized around a small reverse-mode autodiff core
//! ([`tensor`]), graph convolution primitives ([`gnn`]), the three-branch
//! fusion model ([`model`]), a seeded synthetic cohort generator
//! ([`cohort`]), cross-validated training ([`train`]), and the post-hoc
//! analysis stages ([`attribution`], [`connectomics`], [`stats`]).
//!
//! All numerical code is generic over the scalar type through [`Scalar`]
//! (`f32` for training speed, `f64` for gradient verification); concrete
//! aliases for the common instantiations live at the crate root.

pub mod attribution;
pub mod cohort;
pub mod config;
pub mod connectomics;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod manifest;
pub mod mmt1;
pub mod model;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision tensor, the training default.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision tensor, used by gradient verification.
pub type Tensor64 = tensor::Tensor<f64>;
/// Single-precision autodiff tape.
pub type Tape32 = tensor::Tape<f32>;
/// Double-precision autodiff tape.
pub type Tape64 = tensor::Tape<f64>;
/// Single-precision connectivity graph.
pub type ConnGraph32 = graph::ConnGraph<f32>;
/// Double-precision connectivity graph.
pub type ConnGraph64 = graph::ConnGraph<f64>;
/// Single-precision fusion model.
pub type FusionModel32 = model::FusionModel<f32>;
/// Double-precision fusion model.
pub type FusionModel64 = model::FusionModel<f64>;
