//! Semantic-guided viewport alignment.
//!
//! The query's global token probes a candidate tile's dense features. The
//! rectified similarity map is treated as a spatial distribution whose
//! centroid shifts the crop and whose spread enlarges it.

use alloc::vec::Vec;

use nalgebra::Vector2;

use crate::retrieval::{FeatureMap, TileGeometry};

const ZERO_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SgvaError {
    #[error("query global token has zero norm")]
    ZeroVector,
    #[error("global token has {found} components, tile features have {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("heatmap has no positive mass")]
    NoSemanticMass,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgvaConfig {
    /// Sensitivity of the uncertainty score to the map spread.
    pub lambda: f64,
    /// Confidence boost of the shifting gain.
    pub alpha: f64,
    /// Field-of-view expansion rate.
    pub beta: f64,
}

impl Default for SgvaConfig {
    fn default() -> Self {
        Self {
            lambda: 5.0,
            alpha: 0.5,
            beta: 0.2,
        }
    }
}

/// Cosine similarity of the query token to every tile token.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticHeatmap {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
    /// Cells whose token had zero norm; they hold 0.
    pub zero_cells: usize,
}

impl SemanticHeatmap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.w + col]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatmapStats {
    /// Centroid in normalized `(x, y)` image coordinates, y pointing down.
    pub mu: Vector2<f64>,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropAdjustment {
    pub offset: Vector2<f64>,
    pub scale: f64,
    pub eta: f64,
    pub gain: f64,
}

impl CropAdjustment {
    /// No shift, no enlargement.
    pub fn identity() -> Self {
        Self {
            offset: Vector2::zeros(),
            scale: 1.0,
            eta: 0.0,
            gain: 1.0,
        }
    }
}

pub fn semantic_heatmap(cls_q: &[f32], tile: &FeatureMap) -> Result<SemanticHeatmap, SgvaError> {
    if cls_q.len() != tile.d() {
        return Err(SgvaError::DimensionMismatch {
            expected: tile.d(),
            found: cls_q.len(),
        });
    }
    let qn = cls_q
        .iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt();
    if qn < ZERO_NORM {
        return Err(SgvaError::ZeroVector);
    }
    let mut values = Vec::with_capacity(tile.h() * tile.w());
    let mut zero_cells = 0;
    for token in tile.iter_tokens() {
        let mut dot = 0.0;
        let mut tn = 0.0;
        for (&a, &b) in cls_q.iter().zip(token) {
            dot += a as f64 * b as f64;
            tn += b as f64 * b as f64;
        }
        let tn = tn.sqrt();
        if tn < ZERO_NORM {
            zero_cells += 1;
            values.push(0.0);
        } else {
            values.push((dot / (qn * tn)).clamp(-1.0, 1.0));
        }
    }
    Ok(SemanticHeatmap {
        h: tile.h(),
        w: tile.w(),
        values,
        zero_cells,
    })
}

/// Centroid and spatial spread of the rectified, normalized heatmap. Cell
/// `(i, j)` sits at `((j + 0.5) / w, (i + 0.5) / h)`.
pub fn heatmap_stats(m: &SemanticHeatmap) -> Result<HeatmapStats, SgvaError> {
    let mass: f64 = m.values.iter().map(|v| v.max(0.0)).sum();
    if mass < 1e-12 {
        return Err(SgvaError::NoSemanticMass);
    }
    let coord = |k: usize| {
        let (i, j) = (k / m.w, k % m.w);
        Vector2::new((j as f64 + 0.5) / m.w as f64, (i as f64 + 0.5) / m.h as f64)
    };
    let mut mu = Vector2::zeros();
    for (k, v) in m.values.iter().enumerate() {
        mu += coord(k) * (v.max(0.0) / mass);
    }
    let mut var = 0.0;
    for (k, v) in m.values.iter().enumerate() {
        var += (v.max(0.0) / mass) * (coord(k) - mu).norm_squared();
    }
    Ok(HeatmapStats {
        mu,
        sigma: var.sqrt(),
    })
}

pub fn compute_adjustment(stats: &HeatmapStats, cfg: &SgvaConfig) -> CropAdjustment {
    let eta = (cfg.lambda * stats.sigma).clamp(0.0, 1.0);
    let gain = 1.0 + cfg.alpha * (1.0 - eta);
    let scale = 1.0 + cfg.beta * eta;
    let offset = (stats.mu - Vector2::new(0.5, 0.5)) * gain;
    CropAdjustment {
        offset,
        scale,
        eta,
        gain,
    }
}

/// Shifted and scaled crop, moved (and only if unavoidable, shrunk) to stay
/// inside `map_extent`. The offset is taken in map axes (x east, y north).
pub fn apply_adjustment(
    tile: &TileGeometry,
    adj: &CropAdjustment,
    map_extent: &TileGeometry,
) -> TileGeometry {
    let width = (tile.width * adj.scale).min(map_extent.width);
    let height = (tile.height * adj.scale).min(map_extent.height);
    let cx = tile.center_x + adj.offset.x * tile.width;
    let cy = tile.center_y + adj.offset.y * tile.height;
    TileGeometry {
        center_x: clamp_center(cx, width, map_extent.min_x(), map_extent.max_x()),
        center_y: clamp_center(cy, height, map_extent.min_y(), map_extent.max_y()),
        width,
        height,
        gsd: tile.gsd,
    }
}

fn clamp_center(c: f64, size: f64, lo: f64, hi: f64) -> f64 {
    let (a, b) = (lo + size / 2.0, hi - size / 2.0);
    if a > b {
        (lo + hi) / 2.0
    } else {
        c.clamp(a, b)
    }
}

/// Diagnostics of one alignment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alignment {
    pub geometry: TileGeometry,
    pub adjustment: CropAdjustment,
    pub stats: Option<HeatmapStats>,
}

/// Full alignment of one candidate. A heatmap without positive mass falls
/// back to the identity adjustment. Heatmap rows run north to south, so the
/// image-frame offset has its y flipped before it moves the crop.
pub fn align_viewport(
    cls_q: &[f32],
    tile_feats: &FeatureMap,
    tile: &TileGeometry,
    map_extent: &TileGeometry,
    cfg: &SgvaConfig,
) -> Result<Alignment, SgvaError> {
    let heat = semantic_heatmap(cls_q, tile_feats)?;
    let (adjustment, stats) = match heatmap_stats(&heat) {
        Ok(s) => {
            let mut adj = compute_adjustment(&s, cfg);
            adj.offset.y = -adj.offset.y;
            (adj, Some(s))
        }
        Err(SgvaError::NoSemanticMass) => (CropAdjustment::identity(), None),
        Err(e) => return Err(e),
    };
    Ok(Alignment {
        geometry: apply_adjustment(tile, &adjustment, map_extent),
        adjustment,
        stats,
    })
}
