//! Camera and geometry recovery from dense point maps, and cloud seeding.

mod focal;
mod global;
mod init;
mod procrustes;

pub use focal::{average_focal, estimate_focal, estimate_focal_detailed, FocalEstimate, MIN_VALID_PIXELS};
pub use global::{global_align, AlignConfig, AlignmentState, EdgeAlignment, EdgeObservation};
pub use init::{init_gaussians_from_points, DEFAULT_CONFIDENCE_THRESHOLD};
pub use procrustes::{umeyama, Similarity};
