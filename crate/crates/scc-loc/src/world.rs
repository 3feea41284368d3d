//! Procedural synthetic world: terrain, an optical texture field, its thermal
//! counterpart and a smooth latent field that plants the retrieval signal.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use scc_loc_core::geo::{CameraModel, PoseSE3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Terrain {
    Flat {
        elevation: f64,
    },
    Ramp {
        elevation: f64,
        slope_x: f64,
        slope_y: f64,
    },
    /// Flat west of `hinge_x`, rising eastwards with `slope`.
    FlatRamp {
        elevation: f64,
        hinge_x: f64,
        slope: f64,
    },
    Hills {
        elevation: f64,
        amplitude: f64,
        wavelength: f64,
    },
}

impl Terrain {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match *self {
            Terrain::Flat { elevation } => elevation,
            Terrain::Ramp {
                elevation,
                slope_x,
                slope_y,
            } => elevation + slope_x * x + slope_y * y,
            Terrain::FlatRamp {
                elevation,
                hinge_x,
                slope,
            } => elevation + slope * (x - hinge_x).max(0.0),
            Terrain::Hills {
                elevation,
                amplitude,
                wavelength,
            } => {
                let k = std::f64::consts::TAU / wavelength;
                elevation + amplitude * (k * x).sin() * (k * y).cos()
            }
        }
    }
}

/// Ground intersection of the ray `origin + t * dir` (t > 0) by fixed-point
/// iteration on the height. Converges whenever the terrain slope along the
/// ray is below the ray's steepness, which holds for every shipped terrain.
pub fn ray_cast(
    terrain: &Terrain,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
) -> Option<Vector3<f64>> {
    if dir.z >= -1e-9 {
        return None;
    }
    let mut t = (origin.z - terrain.height(origin.x, origin.y)) / -dir.z;
    for _ in 0..200 {
        let p = origin + dir * t;
        let next = (origin.z - terrain.height(p.x, p.y)) / -dir.z;
        if (next - t).abs() < 1e-10 {
            return (next > 0.0).then(|| origin + dir * next);
        }
        t = next;
    }
    None
}

/// Ground point seen through query pixel `(u, v)`.
pub fn pixel_ground(
    terrain: &Terrain,
    pose: &PoseSE3,
    cam: &CameraModel,
    u: f64,
    v: f64,
) -> Option<Vector3<f64>> {
    let dir = pose.rotation() * cam.ray(&nalgebra::Vector2::new(u, v));
    ray_cast(terrain, pose.translation(), &dir)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream key for `(seed, a, b)`.
pub fn mix(seed: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ a) ^ b.rotate_left(17))
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = mix(seed, ix as u64, iy as u64);
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Value noise in `[-1, 1]` with lattice spacing `wavelength`.
pub fn value_noise(seed: u64, x: f64, y: f64, wavelength: f64) -> f64 {
    let (gx, gy) = (x / wavelength, y / wavelength);
    let (x0, y0) = (gx.floor(), gy.floor());
    let (tx, ty) = (fade(gx - x0), fade(gy - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = lattice(seed, ix, iy) + tx * (lattice(seed, ix + 1, iy) - lattice(seed, ix, iy));
    let b = lattice(seed, ix, iy + 1)
        + tx * (lattice(seed, ix + 1, iy + 1) - lattice(seed, ix, iy + 1));
    a + ty * (b - a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSpec {
    /// Dimension of the planted feature vectors.
    pub latent_dim: usize,
    /// Lattice spacings of the latent field octaves, meters.
    pub latent_wavelengths: Vec<f64>,
    /// Lattice spacings and weights of the texture octaves.
    pub texture_octaves: Vec<(f64, f64)>,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            latent_wavelengths: vec![70.0, 30.0],
            texture_octaves: vec![(40.0, 0.45), (14.0, 0.3), (5.0, 0.15), (2.0, 0.1)],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub seed: u64,
    pub terrain: Terrain,
    pub fields: FieldSpec,
}

const TEXTURE_STREAM: u64 = 1;
const LATENT_STREAM: u64 = 2;

impl World {
    /// Optical reflectance in `[0, 1]`.
    pub fn optical(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        let mut norm = 0.0;
        for (k, &(wl, w)) in self.fields.texture_octaves.iter().enumerate() {
            acc += w * value_noise(mix(self.seed, TEXTURE_STREAM, k as u64), x, y, wl);
            norm += w;
        }
        (0.5 + 0.5 * acc / norm.max(1e-12)).clamp(0.0, 1.0)
    }

    /// Thermal radiance: a contrast-inverting monotone map of reflectance,
    /// so the two modalities share structure but not intensities.
    pub fn thermal(&self, x: f64, y: f64) -> f64 {
        let o = self.optical(x, y);
        0.15 + 0.7 * (1.0 - o).powf(1.4)
    }

    /// Latent semantic vector at a ground location.
    pub fn latent(&self, x: f64, y: f64) -> Vec<f32> {
        let octaves = &self.fields.latent_wavelengths;
        (0..self.fields.latent_dim)
            .map(|d| {
                let mut v = 0.0;
                for (k, &wl) in octaves.iter().enumerate() {
                    let s = mix(self.seed, LATENT_STREAM, (d * octaves.len() + k) as u64);
                    v += value_noise(s, x, y, wl) / (k + 1) as f64;
                }
                v as f32
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use scc_loc_core::geo::{pose_from_attitude, project, Attitude, GeoPoint};

    #[test]
    fn value_noise_is_bounded_and_continuous() {
        let mut prev = value_noise(3, 0.0, 0.5, 10.0);
        for k in 1..2000 {
            let x = k as f64 * 0.01;
            let v = value_noise(3, x, 0.5, 10.0);
            assert!((-1.0..=1.0).contains(&v));
            assert!((v - prev).abs() < 0.01);
            prev = v;
        }
    }

    #[test]
    fn lattice_values_are_hit_exactly() {
        assert_eq!(value_noise(9, 20.0, -30.0, 10.0), lattice(9, 2, -3));
    }

    #[test]
    fn ray_cast_hits_terrain_and_reprojects() {
        let cam = CameraModel::new(400.0, 400.0, 160.0, 128.0, 320, 256).unwrap();
        for terrain in [
            Terrain::Flat { elevation: 12.0 },
            Terrain::Ramp {
                elevation: 5.0,
                slope_x: 0.1,
                slope_y: -0.05,
            },
            Terrain::FlatRamp {
                elevation: 0.0,
                hinge_x: 10.0,
                slope: 0.15,
            },
            Terrain::Hills {
                elevation: 0.0,
                amplitude: 6.0,
                wavelength: 150.0,
            },
        ] {
            let att = Attitude {
                yaw: 0.7,
                pitch: 0.05,
                roll: 0.0,
            };
            let pose = pose_from_attitude(&att, &Vector3::new(3.0, -8.0, 160.0));
            for (u, v) in [(0.0, 0.0), (160.0, 128.0), (319.0, 17.5), (40.0, 250.0)] {
                let g = pixel_ground(&terrain, &pose, &cam, u, v).unwrap();
                assert!((g.z - terrain.height(g.x, g.y)).abs() < 1e-8);
                let px = project(&pose, &cam, &GeoPoint::from_vector(&g)).unwrap();
                assert!((px.x - u).abs() < 1e-6 && (px.y - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn upward_ray_misses() {
        let t = Terrain::Flat { elevation: 0.0 };
        assert!(ray_cast(
            &t,
            &Vector3::new(0.0, 0.0, 10.0),
            &Vector3::new(0.0, 0.0, 1.0)
        )
        .is_none());
    }

    #[test]
    fn modalities_are_anticorrelated() {
        let w = World {
            seed: 4,
            terrain: Terrain::Flat { elevation: 0.0 },
            fields: FieldSpec::default(),
        };
        let pts: Vec<(f64, f64)> = (0..500)
            .map(|k| ((k * 7 % 113) as f64 * 3.1, (k * 13 % 97) as f64 * 2.7))
            .collect();
        let o: Vec<f64> = pts.iter().map(|p| w.optical(p.0, p.1)).collect();
        let t: Vec<f64> = pts.iter().map(|p| w.thermal(p.0, p.1)).collect();
        let mo = o.iter().sum::<f64>() / 500.0;
        let mt = t.iter().sum::<f64>() / 500.0;
        let cov: f64 = o.iter().zip(&t).map(|(a, b)| (a - mo) * (b - mt)).sum();
        assert!(cov < 0.0);
        assert_eq!(w.latent(1.0, 2.0).len(), 32);
        assert_eq!(w.latent(1.0, 2.0), w.latent(1.0, 2.0));
    }
}
