//! Multi-phase image segmentation driven by local features.
//!
//! The pipeline extracts a feature vector per pixel ([`features`]), reduces
//! it with PCA ([`pca`]), picks initial segment means by clustering pixels
//! away from region boundaries ([`init`]) and then alternates a convex
//! relaxed partition solve ([`solver`]) with mean updates ([`segment`]).
//! [`synth`] and [`metrics`] provide ground-truthed inputs and scoring.

pub mod error;
pub mod features;
pub mod grid;
pub mod init;
pub mod metrics;
pub mod pca;
pub mod segment;
pub mod simplex;
pub mod solver;
pub mod synth;

pub use error::{Result, SegError};
