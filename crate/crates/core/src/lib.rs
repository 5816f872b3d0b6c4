//! Differentiable 3D Gaussian splatting for sparse-view scene reconstruction.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`align`]: recover per-view focal lengths from dense point maps and
//!    register pairwise point maps into one world frame.
//! 2. [`align::init_gaussians_from_points`]: seed a Gaussian cloud from the
//!    aligned points.
//! 3. [`train`]: optimize the cloud against reference images and depths with
//!    the RGB, depth-correlation and masked gradient-profile losses.
//! 4. [`metrics`]: score renders with PSNR and SSIM.

pub mod align;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod raster;
pub mod scene;
pub mod train;

pub use error::{Error, ErrorKind, Result};
