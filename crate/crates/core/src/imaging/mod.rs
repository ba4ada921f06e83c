//! Image formation: rigid transform, pinhole projection, spherical-harmonics
//! shading, rasterization and image pyramids.

mod camera;
mod frame;
mod pose;
mod pyramid;
mod raster;
mod sample;
mod sh;

pub use camera::{CameraIntrinsics, Z_NEAR};
pub use frame::Frame;
pub use pose::{transform_point, PoseRecord, RigidPose};
pub use pyramid::build_pyramid;
pub use raster::{rasterize, rasterize_surface, RasterOutput, RasterStats, SurfaceState, NO_TRIANGLE};
pub use raster::interpolate_normal_albedo;
pub use sample::sample_bilinear;
pub use sh::{sh_basis, sh_basis_gradient, sh_irradiance, sh_shade, Illumination, SH_COEFFS};
