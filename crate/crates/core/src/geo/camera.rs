//! Pinhole camera and gimbal attitude conventions.
//!
//! World frame is east-north-up. The camera frame is the usual optical frame
//! (x right, y down, z forward). Attitude angles are a Z-Y-X (yaw, pitch, roll)
//! decomposition of the gimbal body frame, which is tied to the camera by a
//! fixed mounting rotation: body x points to the top of the image, body y to
//! the image left and body z opposite to the optical axis. Zero attitude is a
//! nadir camera whose image top faces east; a pure pitch tilts the optical
//! axis about the camera's lateral axis.

use nalgebra::{Matrix3, Vector2, Vector3};

use super::{GeoError, GeoPoint, PoseSE3};

pub type Pixel2 = Vector2<f64>;

const MIN_DEPTH: f64 = 1e-6;
const GIMBAL_LOCK_MARGIN: f64 = 1e-6;

/// Fixed rotation from camera axes to gimbal body axes. It is an involution.
pub fn camera_to_body() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub pitch_prior: f64,
    pub yaw_prior: f64,
    pub altitude_prior: f64,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeoError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pitch_prior: 0.0,
            yaw_prior: 0.0,
            altitude_prior: 0.0,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_priors(mut self, pitch: f64, yaw: f64, altitude: f64) -> Self {
        self.pitch_prior = pitch;
        self.yaw_prior = yaw;
        self.altitude_prior = altitude;
        self
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let vals = [
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.pitch_prior,
            self.yaw_prior,
            self.altitude_prior,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::NonFinite);
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeoError::InvalidCamera("focal lengths must be positive"));
        }
        if self.cx < 0.0
            || self.cx >= self.width as f64
            || self.cy < 0.0
            || self.cy >= self.height as f64
        {
            return Err(GeoError::InvalidCamera("principal point outside the image"));
        }
        Ok(())
    }

    /// Projects a camera-frame point.
    pub fn project_camera(&self, pc: &Vector3<f64>) -> Result<Pixel2, GeoError> {
        if pc.z <= MIN_DEPTH {
            return Err(GeoError::BehindCamera);
        }
        Ok(Pixel2::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ))
    }

    /// Unnormalized viewing ray (z = 1) in the camera frame.
    pub fn ray(&self, px: &Pixel2) -> Vector3<f64> {
        Vector3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, 1.0)
    }

    pub fn bearing(&self, px: &Pixel2) -> Vector3<f64> {
        self.ray(px).normalize()
    }

    /// Horizontal and vertical field of view as tangents of the half-angles
    /// summed over both sides: ground footprint per meter of range.
    pub fn footprint_per_range(&self) -> (f64, f64) {
        (self.width as f64 / self.fx, self.height as f64 / self.fy)
    }
}

/// Pinhole projection of a world point.
pub fn project(pose: &PoseSE3, cam: &CameraModel, p: &GeoPoint) -> Result<Pixel2, GeoError> {
    cam.project_camera(&pose.world_to_camera(&p.to_vector()))
}

/// World point at the given camera-frame depth along the pixel's ray.
pub fn back_project(pose: &PoseSE3, cam: &CameraModel, px: &Pixel2, depth: f64) -> GeoPoint {
    GeoPoint::from_vector(&pose.camera_to_world(&(cam.ray(px) * depth)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Attitude {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

/// Gimbal body rotation (body to world).
pub fn body_rotation(pose: &PoseSE3) -> Matrix3<f64> {
    pose.rotation() * camera_to_body()
}

pub fn attitude(pose: &PoseSE3) -> Attitude {
    let b = body_rotation(pose);
    let pitch = (-b[(2, 0)]).clamp(-1.0, 1.0).asin();
    Attitude {
        yaw: b[(1, 0)].atan2(b[(0, 0)]),
        pitch,
        roll: b[(2, 1)].atan2(b[(2, 2)]),
    }
}

/// Rotation matrix of a Z-Y-X attitude (body to world).
pub fn rotation_from_attitude(att: &Attitude) -> Matrix3<f64> {
    let (sy, cy) = att.yaw.sin_cos();
    let (sp, cp) = att.pitch.sin_cos();
    let (sr, cr) = att.roll.sin_cos();
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    rz * ry * rx
}

/// Camera pose from a gimbal attitude and a camera center.
pub fn pose_from_attitude(att: &Attitude, center: &Vector3<f64>) -> PoseSE3 {
    let r = rotation_from_attitude(att) * camera_to_body();
    PoseSE3::from_parts(r, *center).expect("attitude matrices are rotations")
}

/// Pitch angle used by the gimbal prior, unchecked.
pub fn pitch(pose: &PoseSE3) -> f64 {
    attitude(pose).pitch
}

/// Pitch angle; flags configurations within 1e-6 rad of gimbal lock.
pub fn extract_pitch(pose: &PoseSE3) -> Result<f64, GeoError> {
    let p = pitch(pose);
    if core::f64::consts::FRAC_PI_2 - p.abs() < GIMBAL_LOCK_MARGIN {
        return Err(GeoError::GimbalLock { pitch: p });
    }
    Ok(p)
}

/// Vertical component of the camera's lateral axis; zero for a level gimbal.
pub fn lateral_tilt(pose: &PoseSE3) -> f64 {
    (pose.rotation() * Vector3::x()).z
}
