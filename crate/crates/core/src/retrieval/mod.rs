//! Coarse retrieval: tile database, GeM global descriptors and cosine ranking.

mod gem;
mod rank;
mod tiles;

pub use gem::{gem_pool, gem_pool_unnormalized};
pub use rank::{cosine_similarity, rank_candidates, Ranked};
pub use tiles::{build_tile_db, pde, pde_hit, tile_side_for, TileGeometry};

use alloc::vec::Vec;

use crate::geo::GeoError;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("invalid feature map: {0}")]
    InvalidFeatureMap(&'static str),
    #[error("pooled descriptor norm below 1e-12")]
    DegenerateNorm,
    #[error("descriptor dimensions differ ({expected} vs {found})")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tile database is empty: {0}")]
    EmptyDatabase(&'static str),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Dense `h x w x d` token grid, row-major with the feature axis fastest,
/// plus an optional global (CLS) token.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    h: usize,
    w: usize,
    d: usize,
    tokens: Vec<f32>,
    cls: Option<Vec<f32>>,
}

impl FeatureMap {
    pub fn new(
        h: usize,
        w: usize,
        d: usize,
        tokens: Vec<f32>,
        cls: Option<Vec<f32>>,
    ) -> Result<Self, RetrievalError> {
        if h == 0 || w == 0 || d == 0 {
            return Err(RetrievalError::InvalidFeatureMap(
                "h, w and d must be at least 1",
            ));
        }
        if tokens.len() != h * w * d {
            return Err(RetrievalError::InvalidFeatureMap(
                "token count does not match h * w * d",
            ));
        }
        if cls.as_ref().is_some_and(|c| c.len() != d) {
            return Err(RetrievalError::InvalidFeatureMap(
                "CLS length does not match d",
            ));
        }
        if tokens
            .iter()
            .chain(cls.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(RetrievalError::InvalidFeatureMap("non-finite value"));
        }
        Ok(Self {
            h,
            w,
            d,
            tokens,
            cls,
        })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tokens(&self) -> &[f32] {
        &self.tokens
    }

    pub fn cls(&self) -> Option<&[f32]> {
        self.cls.as_deref()
    }

    pub fn token(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.w + col) * self.d;
        &self.tokens[start..start + self.d]
    }

    pub fn iter_tokens(&self) -> impl Iterator<Item = &[f32]> {
        self.tokens.chunks_exact(self.d)
    }
}

/// Unit-norm global descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalDescriptor(Vec<f64>);

impl GlobalDescriptor {
    /// Normalizes `v`; fails when its norm is below 1e-12.
    pub fn from_unnormalized(mut v: Vec<f64>) -> Result<Self, RetrievalError> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n >= 1e-12) {
            return Err(RetrievalError::DegenerateNorm);
        }
        v.iter_mut().for_each(|x| *x /= n);
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetrievalConfig {
    /// GeM exponent.
    pub psi: f64,
    /// Clamp floor applied to every token component before pooling.
    pub eps_min: f64,
    /// Search area in square meters.
    pub search_area: f64,
    /// Sliding-window overlap in `[0, 1)`.
    pub overlap: f64,
    /// Enlargement of the query footprint when sizing database tiles.
    pub gsd_scale: f64,
    pub top_n: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            psi: 4.0,
            eps_min: 1e-6,
            search_area: 600.0 * 600.0,
            overlap: 0.6,
            gsd_scale: 1.5,
            top_n: 5,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.psi >= 1.0) {
            return Err(RetrievalError::InvalidConfig("psi must be >= 1"));
        }
        if !(self.eps_min > 0.0 && self.eps_min < 1e-2) {
            return Err(RetrievalError::InvalidConfig(
                "eps_min must be a small positive floor",
            ));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(RetrievalError::InvalidConfig("overlap must lie in [0, 1)"));
        }
        if !(self.search_area > 0.0) || !(self.gsd_scale > 0.0) {
            return Err(RetrievalError::InvalidConfig(
                "search area and gsd scale must be positive",
            ));
        }
        if self.top_n == 0 {
            return Err(RetrievalError::InvalidConfig("top_n must be at least 1"));
        }
        Ok(())
    }

    /// Side of the square search area.
    pub fn search_side(&self) -> f64 {
        self.search_area.sqrt()
    }
}
