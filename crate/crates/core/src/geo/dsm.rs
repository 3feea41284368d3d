//! Elevation raster sampling.

use alloc::vec::Vec;

use super::GeoError;

/// North-up elevation grid. `origin_x`/`origin_y` is the outer corner of the
/// first row's first cell (north-west); rows run southwards.
#[derive(Clone, Debug, PartialEq)]
pub struct DsmRaster {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub rows: u32,
    pub cols: u32,
    pub data: Vec<f32>,
    pub nodata: f32,
}

impl DsmRaster {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        rows: u32,
        cols: u32,
        data: Vec<f32>,
        nodata: f32,
    ) -> Result<Self, GeoError> {
        let dsm = Self {
            origin_x,
            origin_y,
            cell_size,
            rows,
            cols,
            data,
            nodata,
        };
        dsm.validate()?;
        Ok(dsm)
    }

    /// Raster holding the same elevation in every cell.
    pub fn constant(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        rows: u32,
        cols: u32,
        h: f32,
    ) -> Self {
        Self {
            origin_x,
            origin_y,
            cell_size,
            rows,
            cols,
            data: alloc::vec![h; rows as usize * cols as usize],
            nodata: f32::NAN,
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.cell_size > 0.0) || !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(GeoError::InvalidRaster(
                "cell size must be positive and origin finite",
            ));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(GeoError::InvalidRaster("raster has no cells"));
        }
        if self.rows as usize * self.cols as usize != self.data.len() {
            return Err(GeoError::InvalidRaster(
                "rows * cols does not match data length",
            ));
        }
        Ok(())
    }

    pub fn get(&self, row: u32, col: u32) -> f32 {
        self.data[row as usize * self.cols as usize + col as usize]
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        v.is_nan() || v == self.nodata
    }

    pub fn cell_center(&self, row: u32, col: u32) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_size,
            self.origin_y - (row as f64 + 0.5) * self.cell_size,
        )
    }

    /// `(min_x, min_y, max_x, max_y)` of the raster footprint.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.origin_x,
            self.origin_y - self.rows as f64 * self.cell_size,
            self.origin_x + self.cols as f64 * self.cell_size,
            self.origin_y,
        )
    }

    /// Bilinear elevation at `(x, y)`.
    ///
    /// Nodata neighbors are dropped and the remaining weights renormalized.
    /// Within half a cell of the outer edge the nearest row/column is
    /// extended.
    pub fn sample(&self, x: f64, y: f64) -> Result<f64, GeoError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(GeoError::NonFinite);
        }
        let (min_x, min_y, max_x, max_y) = self.bounds();
        if x < min_x || x > max_x || y < min_y || y > max_y {
            return Err(GeoError::OutOfFootprint { x, y });
        }
        let fc = ((x - self.origin_x) / self.cell_size - 0.5).clamp(0.0, (self.cols - 1) as f64);
        let fr = ((self.origin_y - y) / self.cell_size - 0.5).clamp(0.0, (self.rows - 1) as f64);
        let c0 = (fc.floor() as u32).min(self.cols.saturating_sub(2));
        let r0 = (fr.floor() as u32).min(self.rows.saturating_sub(2));
        let c1 = (c0 + 1).min(self.cols - 1);
        let r1 = (r0 + 1).min(self.rows - 1);
        let tx = fc - c0 as f64;
        let ty = fr - r0 as f64;

        let taps = [
            (r0, c0, (1.0 - tx) * (1.0 - ty)),
            (r0, c1, tx * (1.0 - ty)),
            (r1, c0, (1.0 - tx) * ty),
            (r1, c1, tx * ty),
        ];
        let mut acc = 0.0;
        let mut wsum = 0.0;
        let mut fallback: Option<(f64, f64)> = None;
        for &(r, c, w) in &taps {
            let v = self.get(r, c);
            if self.is_nodata(v) {
                continue;
            }
            acc += w * v as f64;
            wsum += w;
            if fallback.is_none_or(|(bw, _)| w > bw) {
                fallback = Some((w, v as f64));
            }
        }
        match fallback {
            None => Err(GeoError::AllNoData { x, y }),
            Some(_) if wsum > 1e-12 => Ok(acc / wsum),
            // the only valid neighbors carry zero bilinear weight
            Some((_, v)) => Ok(v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ramp(a: f64, b: f64, c: f64) -> DsmRaster {
        let (rows, cols, cell) = (20u32, 30u32, 2.5);
        let (ox, oy) = (100.0, 500.0);
        let mut data = vec![0.0f32; (rows * cols) as usize];
        for r in 0..rows {
            for col in 0..cols {
                let x = ox + (col as f64 + 0.5) * cell;
                let y = oy - (r as f64 + 0.5) * cell;
                data[(r * cols + col) as usize] = (a * x + b * y + c) as f32;
            }
        }
        DsmRaster::new(ox, oy, cell, rows, cols, data, -9999.0).unwrap()
    }

    #[test]
    fn cell_center_returns_cell_value() {
        let d = ramp(0.3, -0.2, 10.0);
        for &(r, c) in &[(0, 0), (5, 7), (19, 29)] {
            let (x, y) = d.cell_center(r, c);
            assert_eq!(d.sample(x, y).unwrap(), d.get(r, c) as f64);
        }
    }

    #[test]
    fn constant_raster_is_constant() {
        let d = DsmRaster::constant(0.0, 100.0, 1.0, 100, 100, 42.5);
        for &(x, y) in &[
            (0.0, 0.0),
            (0.3, 99.9),
            (50.5, 50.5),
            (100.0, 100.0),
            (73.2, 11.1),
        ] {
            assert_eq!(d.sample(x, y).unwrap(), 42.5);
        }
    }

    #[test]
    fn bilinear_reproduces_affine_field() {
        // f32 storage: use coefficients whose cell values are exact in f32
        let d = ramp(0.5, -0.25, 8.0);
        let mut x = 101.25;
        while x <= 100.0 + 29.5 * 2.5 {
            let mut y = 500.0 - 1.25;
            while y >= 500.0 - 19.5 * 2.5 {
                let got = d.sample(x, y).unwrap();
                assert!((got - (0.5 * x - 0.25 * y + 8.0)).abs() < 1e-9, "{x} {y}");
                y -= 1.7;
            }
            x += 1.3;
        }
    }

    #[test]
    fn out_of_footprint() {
        let d = ramp(0.0, 0.0, 1.0);
        assert!(matches!(
            d.sample(99.0, 490.0),
            Err(GeoError::OutOfFootprint { .. })
        ));
        assert!(matches!(
            d.sample(120.0, 500.1),
            Err(GeoError::OutOfFootprint { .. })
        ));
    }

    #[test]
    fn nodata_weights_renormalize() {
        let mut d = DsmRaster::constant(0.0, 2.0, 1.0, 2, 2, 10.0);
        d.nodata = -1.0;
        d.data = vec![10.0, -1.0, 20.0, 30.0];
        // centre of the 2x2 block: equal weights over the three valid cells
        assert!((d.sample(1.0, 1.0).unwrap() - 20.0).abs() < 1e-12);
        d.data = vec![-1.0, -1.0, -1.0, 7.0];
        assert_eq!(d.sample(1.0, 1.0).unwrap(), 7.0);
        // single valid cell with zero bilinear weight falls back to its value
        assert_eq!(d.sample(0.5, 1.5).unwrap(), 7.0);
        d.data = vec![-1.0; 4];
        assert!(matches!(
            d.sample(1.0, 1.0),
            Err(GeoError::AllNoData { .. })
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(DsmRaster::new(0.0, 0.0, 1.0, 2, 2, vec![0.0; 3], 0.0).is_err());
        assert!(DsmRaster::new(0.0, 0.0, 0.0, 1, 1, vec![0.0], 0.0).is_err());
    }
}
