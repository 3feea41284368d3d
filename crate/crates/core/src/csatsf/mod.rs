//! Cascaded correspondence filtering: spatial equalization, texture gating
//! and structure-consistent geometric refinement.

mod consistency;
mod equalize;
mod saliency;
mod topo;

pub use consistency::{circular_median, global_consistency, wrap_angle};
pub use equalize::{log_quota, spatial_equalize};
pub use saliency::{saliency_map, texture_gate, SaliencyMap};
pub use topo::{negative_vote_rates, topo_filter, triangle_area};

use alloc::vec::Vec;

use nalgebra::Vector2;

use crate::image::GrayImage;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("stage {found:?} cannot feed a filter expecting {expected:?}")]
    WrongStage { expected: Stage, found: Stage },
    #[error("query keypoints are collinear or too few to triangulate")]
    DegenerateTriangulation,
    #[error("fewer than two usable heading vectors")]
    InsufficientMatches,
    #[error("invalid filter config: {0}")]
    InvalidConfig(&'static str),
}

/// One 2D-2D match: query pixel, aligned-crop pixel, matcher confidence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub pq: Vector2<f64>,
    pub pdb: Vector2<f64>,
    pub conf: f64,
}

impl Correspondence {
    pub fn new(xq: f64, yq: f64, xdb: f64, ydb: f64, conf: f64) -> Self {
        Self {
            pq: Vector2::new(xq, yq),
            pdb: Vector2::new(xdb, ydb),
            conf,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Raw,
    Equalized,
    Textured,
    Topo,
    Final,
}

/// Matches at one cascade stage. `source[i]` is the raw index of `items[i]`,
/// kept ascending so later stages are subsequences of earlier ones.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchSet {
    items: Vec<Correspondence>,
    source: Vec<usize>,
    stage: Stage,
}

impl MatchSet {
    pub fn raw(items: Vec<Correspondence>) -> Self {
        let source = (0..items.len()).collect();
        Self {
            items,
            source,
            stage: Stage::Raw,
        }
    }

    pub fn items(&self) -> &[Correspondence] {
        &self.items
    }

    pub fn source_indices(&self) -> &[usize] {
        &self.source
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Moves to `stage` without dropping anything (pass-through on a
    /// degenerate stage). Stages never go backwards.
    pub fn pass_to(mut self, stage: Stage) -> Self {
        self.stage = self.stage.max(stage);
        self
    }

    pub(crate) fn expect(&self, expected: Stage) -> Result<(), FilterError> {
        if self.stage == expected {
            Ok(())
        } else {
            Err(FilterError::WrongStage {
                expected,
                found: self.stage,
            })
        }
    }

    /// Subset by local positions `keep` (ascending).
    pub(crate) fn retain_positions(&self, keep: &[usize], stage: Stage) -> Self {
        Self {
            items: keep.iter().map(|&k| self.items[k]).collect(),
            source: keep.iter().map(|&k| self.source[k]).collect(),
            stage,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterConfig {
    pub grid_g: usize,
    pub q_base: usize,
    pub q_max: usize,
    pub gamma: f64,
    /// Side of the square saliency window in pixels.
    pub window: usize,
    pub eps_topo: f64,
    /// Radians.
    pub eps_ang: f64,
    pub eps_scale: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            grid_g: 8,
            q_base: 3,
            q_max: 9,
            gamma: 0.5,
            window: 7,
            eps_topo: 0.4,
            eps_ang: 20f64.to_radians(),
            eps_scale: 0.3,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.grid_g == 0 || self.q_base == 0 || self.q_max < self.q_base {
            return Err(FilterError::InvalidConfig(
                "need grid_g >= 1 and 1 <= q_base <= q_max",
            ));
        }
        if self.window == 0 {
            return Err(FilterError::InvalidConfig(
                "saliency window must be at least 1 pixel",
            ));
        }
        if !(self.gamma >= 0.0 && self.eps_topo > 0.0 && self.eps_ang > 0.0 && self.eps_scale > 0.0)
        {
            return Err(FilterError::InvalidConfig("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Per-stage survivor counts and pass-through warnings of one cascade run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CascadeStats {
    pub raw: usize,
    pub equalized: usize,
    pub textured: usize,
    pub topo: usize,
    pub final_: usize,
    pub degenerate_saliency: bool,
    pub degenerate_triangulation: bool,
    pub insufficient_matches: bool,
}

/// Runs all four filters. Degenerate topology or too few heading vectors pass
/// the set through with a flag instead of aborting the candidate.
pub fn run_cascade(
    raw: MatchSet,
    query_img: &GrayImage,
    db_img: &GrayImage,
    cfg: &FilterConfig,
) -> Result<(MatchSet, CascadeStats), FilterError> {
    let vq = saliency_map(query_img, cfg.window);
    let vdb = saliency_map(db_img, cfg.window);
    run_cascade_with_saliency(raw, (query_img.width(), query_img.height()), &vq, &vdb, cfg)
}

/// As [`run_cascade`], with saliency maps computed by the caller (shared
/// across candidates that reuse an image).
pub fn run_cascade_with_saliency(
    raw: MatchSet,
    query_size: (usize, usize),
    vq: &SaliencyMap,
    vdb: &SaliencyMap,
    cfg: &FilterConfig,
) -> Result<(MatchSet, CascadeStats), FilterError> {
    cfg.validate()?;
    let mut stats = CascadeStats {
        raw: raw.len(),
        degenerate_saliency: vq.degenerate || vdb.degenerate,
        ..Default::default()
    };
    let eq = spatial_equalize(&raw, cfg, query_size)?;
    stats.equalized = eq.len();
    let tex = texture_gate(&eq, vq, vdb, cfg)?;
    stats.textured = tex.len();
    let topo = match topo_filter(&tex, cfg) {
        Ok(s) => s,
        Err(FilterError::DegenerateTriangulation) => {
            stats.degenerate_triangulation = true;
            tex.pass_to(Stage::Topo)
        }
        Err(e) => return Err(e),
    };
    stats.topo = topo.len();
    let fin = match global_consistency(&topo, cfg) {
        Ok(s) => s,
        Err(FilterError::InsufficientMatches) => {
            stats.insufficient_matches = true;
            topo.pass_to(Stage::Final)
        }
        Err(e) => return Err(e),
    };
    stats.final_ = fin.len();
    Ok((fin, stats))
}

/// Median of a non-empty slice; the mean of the two middle values for even
/// lengths.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
