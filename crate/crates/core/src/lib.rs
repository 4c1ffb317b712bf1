#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod config;
pub mod datagen;
pub mod episode;
pub mod flowmodel;
pub mod error;
pub mod geometry;
pub mod gpc;
pub mod seed;
pub mod spc;
pub mod tasks;

pub use error::{Error, Result};
