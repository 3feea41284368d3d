use alloc::vec::Vec;

use super::{RetrievalConfig, RetrievalError};
use crate::geo::CameraModel;

const EDGE_TOL: f64 = 1e-9;

/// Axis-aligned, north-up ground rectangle sampled at `gsd` meters per pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileGeometry {
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
    pub gsd: f64,
}

impl TileGeometry {
    pub fn new(
        center_x: f64,
        center_y: f64,
        width: f64,
        height: f64,
        gsd: f64,
    ) -> Result<Self, RetrievalError> {
        let t = Self {
            center_x,
            center_y,
            width,
            height,
            gsd,
        };
        if !(width > 0.0 && height > 0.0 && gsd > 0.0)
            || !center_x.is_finite()
            || !center_y.is_finite()
        {
            return Err(RetrievalError::InvalidConfig(
                "tile sizes and gsd must be positive",
            ));
        }
        Ok(t)
    }

    pub fn min_x(&self) -> f64 {
        self.center_x - self.width / 2.0
    }

    pub fn max_x(&self) -> f64 {
        self.center_x + self.width / 2.0
    }

    pub fn min_y(&self) -> f64 {
        self.center_y - self.height / 2.0
    }

    pub fn max_y(&self) -> f64 {
        self.center_y + self.height / 2.0
    }

    pub fn side(&self) -> f64 {
        self.width.max(self.height)
    }

    /// Raster size in pixels (rounded).
    pub fn pixel_dims(&self) -> (usize, usize) {
        (
            (self.width / self.gsd).round().max(1.0) as usize,
            (self.height / self.gsd).round().max(1.0) as usize,
        )
    }

    /// Continuous pixel coordinate (origin at the top-left corner, y down) to
    /// planar meters.
    pub fn pixel_to_world(&self, u: f64, v: f64) -> (f64, f64) {
        (self.min_x() + u * self.gsd, self.max_y() - v * self.gsd)
    }

    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.min_x()) / self.gsd, (self.max_y() - y) / self.gsd)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x() && x <= self.max_x() && y >= self.min_y() && y <= self.max_y()
    }

    pub fn contains_tile(&self, other: &TileGeometry) -> bool {
        other.min_x() >= self.min_x() - EDGE_TOL
            && other.max_x() <= self.max_x() + EDGE_TOL
            && other.min_y() >= self.min_y() - EDGE_TOL
            && other.max_y() <= self.max_y() + EDGE_TOL
    }
}

/// Database tile side: the query's ground footprint at the prior slant range,
/// enlarged by `gsd_scale`.
pub fn tile_side_for(cam: &CameraModel, cfg: &RetrievalConfig) -> f64 {
    let (fw, fh) = cam.footprint_per_range();
    let range = cam.altitude_prior / cam.pitch_prior.cos().max(0.1);
    range * fw.max(fh) * cfg.gsd_scale
}

/// Offsets of window centers from the start of an axis of length `len`.
fn axis_offsets(len: f64, side: f64, stride: f64) -> Vec<f64> {
    let last = len - side / 2.0;
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let c = side / 2.0 + k as f64 * stride;
        if c > last + EDGE_TOL {
            break;
        }
        out.push(c);
        k += 1;
    }
    if out.last().is_some_and(|&c| last - c > EDGE_TOL) {
        out.push(last);
    }
    out
}

/// Square sliding-window tiles of side `tile_side` over `extent`, stride
/// `tile_side * (1 - overlap)`. The final window of each axis is clamped to
/// the extent's edge. Ordered row-major, north to south then west to east.
pub fn build_tile_db(
    extent: &TileGeometry,
    tile_side: f64,
    cfg: &RetrievalConfig,
) -> Result<Vec<TileGeometry>, RetrievalError> {
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(RetrievalError::InvalidConfig("overlap must lie in [0, 1)"));
    }
    if !(tile_side > 0.0) {
        return Err(RetrievalError::InvalidConfig("tile side must be positive"));
    }
    if tile_side > extent.width + EDGE_TOL || tile_side > extent.height + EDGE_TOL {
        return Err(RetrievalError::EmptyDatabase(
            "tile side exceeds the extent",
        ));
    }
    let stride = tile_side * (1.0 - cfg.overlap);
    let xs = axis_offsets(extent.width, tile_side, stride);
    let ys = axis_offsets(extent.height, tile_side, stride);
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for oy in &ys {
        for ox in &xs {
            tiles.push(TileGeometry {
                center_x: extent.min_x() + ox,
                center_y: extent.max_y() - oy,
                width: tile_side,
                height: tile_side,
                gsd: extent.gsd,
            });
        }
    }
    Ok(tiles)
}

/// Position deviation error: center offset over the tile side.
pub fn pde(retrieved: &TileGeometry, truth_x: f64, truth_y: f64) -> f64 {
    (retrieved.center_x - truth_x).hypot(retrieved.center_y - truth_y) / retrieved.side()
}

/// A retrieval hit requires PDE strictly below one half.
pub fn pde_hit(pde: f64) -> bool {
    pde < 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn extent(w: f64, h: f64) -> TileGeometry {
        TileGeometry::new(w / 2.0 + 1000.0, h / 2.0 - 250.0, w, h, 0.5).unwrap()
    }

    fn cfg(overlap: f64) -> RetrievalConfig {
        RetrievalConfig {
            overlap,
            ..Default::default()
        }
    }

    #[test]
    fn zero_overlap_three_columns() {
        let tiles = build_tile_db(&extent(300.0, 100.0), 100.0, &cfg(0.0)).unwrap();
        assert_eq!(tiles.len(), 3);
        let xs: Vec<f64> = tiles.iter().map(|t| t.center_x - 1000.0).collect();
        assert_eq!(xs, vec![50.0, 150.0, 250.0]);
    }

    #[test]
    fn stride_from_overlap() {
        let tiles = build_tile_db(&extent(500.0, 100.0), 100.0, &cfg(0.6)).unwrap();
        assert!((tiles[1].center_x - tiles[0].center_x - 40.0).abs() < 1e-9);
    }

    #[test]
    fn count_matches_enumeration_oracle() {
        // 600 x 600 m, 150 m tiles, 60% overlap: stride 60 m
        let ext = extent(600.0, 600.0);
        let tiles = build_tile_db(&ext, 150.0, &cfg(0.6)).unwrap();
        // oracle: scan every centimeter offset for window starts that are stride
        // multiples and fit, then add the flush window if the edge is not reached
        let mut starts = 0usize;
        let mut max_end = 0i64;
        for s in 0..=60_000i64 {
            if s % 6000 == 0 && s + 15_000 <= 60_000 {
                starts += 1;
                max_end = max_end.max(s + 15_000);
            }
        }
        let per_axis = starts + usize::from(max_end < 60_000);
        assert_eq!(tiles.len(), per_axis * per_axis);
        assert_eq!(per_axis, 9);
        // row-major, north first
        assert!(tiles[0].center_y > tiles[per_axis].center_y);
        assert!(tiles[0].center_x < tiles[1].center_x);
        assert!(tiles.iter().all(|t| ext.contains_tile(t)));
    }

    #[test]
    fn edge_tile_clamped_inside() {
        let ext = extent(250.0, 100.0);
        let tiles = build_tile_db(&ext, 100.0, &cfg(0.0)).unwrap();
        assert_eq!(tiles.len(), 3);
        assert!((tiles[2].max_x() - ext.max_x()).abs() < 1e-9);
    }

    #[test]
    fn oversized_tile_is_empty_database() {
        assert!(matches!(
            build_tile_db(&extent(90.0, 500.0), 100.0, &cfg(0.5)),
            Err(RetrievalError::EmptyDatabase(_))
        ));
        assert!(matches!(
            build_tile_db(&extent(900.0, 500.0), 100.0, &cfg(1.0)),
            Err(RetrievalError::InvalidConfig(_))
        ));
    }

    #[test]
    fn pde_values() {
        let t = TileGeometry::new(10.0, 20.0, 200.0, 200.0, 1.0).unwrap();
        assert_eq!(pde(&t, 10.0, 20.0), 0.0);
        assert!(pde_hit(pde(&t, 10.0, 20.0)));
        assert_eq!(pde(&t, 40.0, 60.0), 0.25);
        let half = pde(&t, 110.0, 20.0);
        assert_eq!(half, 0.5);
        assert!(!pde_hit(half));
    }

    #[test]
    fn pixel_world_mapping() {
        let t = TileGeometry::new(100.0, 50.0, 40.0, 20.0, 0.5).unwrap();
        assert_eq!(t.pixel_dims(), (80, 40));
        assert_eq!(t.pixel_to_world(40.0, 20.0), (100.0, 50.0));
        assert_eq!(t.pixel_to_world(0.0, 0.0), (80.0, 60.0));
        assert_eq!(t.world_to_pixel(80.0, 60.0), (0.0, 0.0));
    }

    #[test]
    fn side_from_camera_footprint() {
        let cam = CameraModel::new(400.0, 400.0, 160.0, 128.0, 320, 256)
            .unwrap()
            .with_priors(0.0, 0.0, 150.0);
        assert!((tile_side_for(&cam, &RetrievalConfig::default()) - 180.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn tiles_cover_the_extent(w in 100.0f64..900.0, h in 100.0f64..900.0, side in 20.0f64..100.0,
                                  overlap in 0.0f64..0.9, px in 0.0f64..1.0, py in 0.0f64..1.0) {
            let ext = extent(w, h);
            let tiles = build_tile_db(&ext, side, &cfg(overlap)).unwrap();
            let x = ext.min_x() + px * w;
            let y = ext.min_y() + py * h;
            prop_assert!(tiles.iter().any(|t| t.contains(x, y)));
        }
    }
}
