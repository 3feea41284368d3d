//! Geometry shared by every stage: poses, the pinhole camera and elevation rasters.

mod camera;
mod dsm;
pub mod se3;

pub use camera::{
    attitude, back_project, body_rotation, camera_to_body, extract_pitch, lateral_tilt, pitch,
    pose_from_attitude, project, rotation_from_attitude, Attitude, CameraModel, Pixel2,
};
pub use dsm::DsmRaster;
pub use se3::PoseSE3;

use nalgebra::Vector3;

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("non-finite input")]
    NonFinite,
    #[error("matrix is not a proper rotation")]
    NotARotation,
    #[error("point is behind the camera")]
    BehindCamera,
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("invalid raster: {0}")]
    InvalidRaster(&'static str),
    #[error("({x}, {y}) is outside the raster footprint")]
    OutOfFootprint { x: f64, y: f64 },
    #[error("all raster neighbors of ({x}, {y}) are nodata")]
    AllNoData { x: f64, y: f64 },
    #[error("gimbal lock at pitch {pitch}")]
    GimbalLock { pitch: f64 },
}

/// Point in the local planar frame: meters east, north and up.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl GeoPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn horizontal_distance(&self, other: &GeoPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}
