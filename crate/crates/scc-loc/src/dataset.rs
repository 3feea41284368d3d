//! On-disk dataset layout shared by the generator and the pipeline.
//!
//! ```text
//! dataset.json            manifest: camera, map extent, tiles, queries
//! telemetry.json          per-query attitude and altitude priors
//! truth.json              ground truth and match labels (optional)
//! map.pgm  dsm.sccd       ortho-photo and elevation raster of the extent
//! tiles/tNNNN.sccf        database tile features
//! queries/<id>.{pgm,sccf} query image and features
//! matches/<id>/tNNNN.sccm raw matches against a database tile
//! ```
//!
//! Match files store database coordinates in the pixel frame of the stored
//! tile geometry, so they stay valid whatever crop alignment picks later.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scc_loc_core::geo::CameraModel;
use scc_loc_core::image::GrayImage;
use scc_loc_core::retrieval::TileGeometry;

use crate::formats::FormatError;

pub const MANIFEST: &str = "dataset.json";
pub const TELEMETRY: &str = "telemetry.json";
pub const TRUTH: &str = "truth.json";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: String,
        source: image::ImageError,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            fx: 400.0,
            fy: 400.0,
            cx: 160.0,
            cy: 128.0,
            width: 320,
            height: 256,
        }
    }
}

impl CameraSpec {
    pub fn model(&self) -> Result<CameraModel, DatasetError> {
        CameraModel::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            .map_err(|e| DatasetError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
    pub gsd: f64,
}

impl From<&TileGeometry> for Geometry {
    fn from(t: &TileGeometry) -> Self {
        Self {
            center_x: t.center_x,
            center_y: t.center_y,
            width: t.width,
            height: t.height,
            gsd: t.gsd,
        }
    }
}

impl Geometry {
    pub fn tile(&self) -> Result<TileGeometry, DatasetError> {
        TileGeometry::new(
            self.center_x,
            self.center_y,
            self.width,
            self.height,
            self.gsd,
        )
        .map_err(|e| DatasetError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileEntry {
    pub geometry: Geometry,
    pub features: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryEntry {
    pub id: String,
    pub image: String,
    pub features: String,
    pub matches: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub camera: CameraSpec,
    /// Map extent; also the search area.
    pub extent: Geometry,
    pub map_image: String,
    pub dsm: String,
    pub tiles: Vec<TileEntry>,
    pub queries: Vec<QueryEntry>,
}

/// Onboard priors for one query. Angles in degrees, altitude in meters above
/// ground.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Telemetry {
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub altitude: f64,
}

impl Telemetry {
    pub fn apply(&self, cam: CameraModel) -> CameraModel {
        cam.with_priors(
            self.pitch_deg.to_radians(),
            self.yaw_deg.to_radians(),
            self.altitude,
        )
    }
}

/// Per-match labels of one match file: `1` true correspondence, `2`
/// decoy-consistent, `0` outlier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchLabels {
    pub tile: usize,
    pub labels: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryTruthRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    /// Tile with the smallest position deviation.
    pub true_tile: usize,
    pub decoy_tiles: Vec<usize>,
    pub match_labels: Vec<MatchLabels>,
}

pub fn match_file_name(tile: usize) -> String {
    format!("t{tile:04}.sccm")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| DatasetError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn create_dir(path: &Path) -> Result<(), DatasetError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

/// 8-bit grayscale PGM, intensities scaled to `[0, 1]`.
pub fn read_gray(path: &Path) -> Result<GrayImage, DatasetError> {
    let img = image::open(path)
        .map_err(|source| DatasetError::Image {
            path: path.display().to_string(),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|v| v as f32 / 255.0)
        .collect();
    Ok(GrayImage::new(w as usize, h as usize, data).expect("dimensions match"))
}

pub fn write_gray(path: &Path, img: &GrayImage) -> Result<(), DatasetError> {
    let bytes = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("dimensions match");
    buf.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|source| DatasetError::Image {
            path: path.display().to_string(),
            source,
        })
}

/// A dataset directory with its manifest and telemetry loaded.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub telemetry: BTreeMap<String, Telemetry>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self, DatasetError> {
        let manifest: Manifest = read_json(&root.join(MANIFEST))?;
        let telemetry: BTreeMap<String, Telemetry> = read_json(&root.join(TELEMETRY))?;
        if let Some(q) = manifest
            .queries
            .iter()
            .find(|q| !telemetry.contains_key(&q.id))
        {
            return Err(DatasetError::Invalid(format!(
                "query {} has no telemetry",
                q.id
            )));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            telemetry,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn truth(&self) -> Result<Vec<QueryTruthRecord>, DatasetError> {
        read_json(&self.root.join(TRUTH))
    }

    pub fn match_path(&self, query: &QueryEntry, tile: usize) -> PathBuf {
        self.root.join(&query.matches).join(match_file_name(tile))
    }
}
