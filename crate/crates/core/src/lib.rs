//! Reconstruction of personalized 3D hair strand models from video frames.
//!
//! The pipeline carves a visual hull from silhouettes, traces 2D strands on
//! oriented-filter orientation maps, lifts them to 3D through per-frame
//! depth, retrieves the closest hairstyles from a strand database, deforms
//! the best candidates onto the hull with view-confidence correction, and
//! finally regrows strands from the scalp through a diffused 3D orientation
//! field.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod database;
pub mod deform;
pub mod error;
pub mod geom;
pub mod hull;
pub mod linalg;
pub mod pipeline;
pub mod render;
pub mod scene;
pub mod strands2d;
pub mod strands3d;

pub use config::SceneConfig;
pub use error::{Error, Result};

/// 3-vector in scene units.
pub type Vec3 = nalgebra::Vector3<f64>;
