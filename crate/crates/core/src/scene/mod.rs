//! Scene domain types: Gaussian primitives, cameras, image-shaped buffers,
//! point maps and the view connectivity graph.

mod buffers;
mod camera;
mod gaussian;
mod graph;
mod params;
pub mod sh;

pub use buffers::{DepthMap, ImageBuffer, PointMap};
pub use camera::{Camera, RigidTransform};
pub use gaussian::{
    covariance_backward, covariance_from_params, evaluate_gaussian, logit, rotation_matrix, rotation_matrix_backward,
    sigmoid, GaussianCloud, GaussianPrimitive, DEFAULT_OPACITY, MAX_SH_DEGREE,
};
pub use graph::ConnectivityGraph;
pub use params::{CloudGradients, ParamGroup, PrimitiveGradient};
pub use sh::sh_to_color;
