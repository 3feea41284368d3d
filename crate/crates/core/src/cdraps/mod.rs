//! Candidate pose estimation and reliability-aware selection: 2D-3D lifting,
//! RANSAC PnP, prior-constrained refinement, covariance-based uncertainty,
//! reliability fusion and geographic consensus voting.

mod consensus;
mod pnp;
mod refine;

pub use consensus::{base_reliability, geo_consensus, select_position, Selection};
pub use pnp::{homography_pose, initial_pnp, reprojection_error};
pub use refine::{objective, pose_uncertainty, refine_pose, Uncertainty};

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector2};

use crate::csatsf::MatchSet;
use crate::geo::{CameraModel, DsmRaster, GeoError, GeoPoint, PoseSE3};
use crate::retrieval::TileGeometry;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CdrapsError {
    #[error("need at least {needed} correspondences, found {found}")]
    InsufficientCorrespondences { needed: usize, found: usize },
    #[error("best hypothesis has {inliers} inliers, below the gate")]
    NoConsensus { inliers: usize },
    #[error("refinement did not converge in {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("Hessian condition number {condition:e} exceeds the limit")]
    SingularHessian { condition: f64 },
    #[error("every match fell on DSM nodata or outside the raster")]
    AllNoData,
    #[error("no candidate survived gating")]
    AllCandidatesGated,
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// A query keypoint tied to a DSM-lifted world point. `source` is the index
/// of the originating 2D match.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence3D {
    pub pq: Vector2<f64>,
    pub p: GeoPoint,
    pub source: usize,
}

/// Which quantity feeds the reliability fusion as the error term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ErrMetric {
    /// RMS reprojection error over inliers, in pixels.
    #[default]
    ReprojRms,
    /// Full penalized objective at the optimum.
    Objective,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub lambda_roll: f64,
    pub lambda_pitch: f64,
    pub ransac_iters: usize,
    pub ransac_thresh_px: f64,
    pub ransac_confidence: f64,
    pub lm_max_iters: usize,
    pub lm_tol: f64,
    pub min_inliers: usize,
    /// Fusion weights for retrieval similarity, inlier count, error and uncertainty.
    pub weights: [f64; 4],
    pub d_max: f64,
    pub tau: f64,
    pub omega_geo: f64,
    pub omega_base: f64,
    pub max_condition: f64,
    pub seed: u64,
    pub err_metric: ErrMetric,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lambda_roll: 1000.0,
            lambda_pitch: 15.0,
            ransac_iters: 1000,
            ransac_thresh_px: 2.0,
            ransac_confidence: 0.999,
            lm_max_iters: 100,
            lm_tol: 1e-10,
            min_inliers: 6,
            weights: [0.1, 0.2, 0.35, 0.35],
            d_max: 20.0,
            tau: 0.3,
            omega_geo: 0.2,
            omega_base: 0.5,
            max_condition: 1e12,
            seed: 0,
            err_metric: ErrMetric::ReprojRms,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), CdrapsError> {
        if self.weights.iter().any(|w| !(*w >= 0.0))
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(CdrapsError::InvalidConfig(
                "weights must be nonnegative and sum to 1",
            ));
        }
        if !(self.d_max > 0.0) {
            return Err(CdrapsError::InvalidConfig("d_max must be positive"));
        }
        if !(self.lambda_roll >= 0.0 && self.lambda_pitch >= 0.0) {
            return Err(CdrapsError::InvalidConfig(
                "penalty weights must be nonnegative",
            ));
        }
        if !(self.ransac_thresh_px > 0.0) || self.ransac_iters == 0 || self.lm_max_iters == 0 {
            return Err(CdrapsError::InvalidConfig(
                "RANSAC and LM limits must be positive",
            ));
        }
        if !(self.ransac_confidence > 0.0 && self.ransac_confidence < 1.0) {
            return Err(CdrapsError::InvalidConfig(
                "RANSAC confidence must lie in (0, 1)",
            ));
        }
        if !(self.omega_geo >= 0.0 && self.omega_base >= 0.0 && self.tau >= 0.0) {
            return Err(CdrapsError::InvalidConfig(
                "reward scalars must be nonnegative",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseEstimate {
    pub pose: PoseSE3,
    /// Positions in the correspondence list, ascending.
    pub inliers: Vec<usize>,
    /// RMS reprojection error over inliers, pixels.
    pub reproj_error: f64,
    /// Objective value at `pose`.
    pub objective: f64,
    pub uncertainty: f64,
    pub cov_pos: Matrix3<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Per-candidate ledger entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateScore {
    pub a_ret: f64,
    pub n_in: usize,
    pub e_err: f64,
    pub u_unc: f64,
    pub r_base: f64,
    pub c_geo: f64,
    pub r_total: f64,
    pub location: GeoPoint,
    pub valid: bool,
}

impl CandidateScore {
    /// A valid candidate carrying raw metrics only.
    pub fn new(a_ret: f64, n_in: usize, e_err: f64, u_unc: f64, location: GeoPoint) -> Self {
        Self {
            a_ret,
            n_in,
            e_err,
            u_unc,
            r_base: 0.0,
            c_geo: 0.0,
            r_total: 0.0,
            location,
            valid: true,
        }
    }

    /// A gated-out candidate.
    pub fn gated(a_ret: f64) -> Self {
        Self {
            valid: false,
            u_unc: f64::INFINITY,
            e_err: f64::INFINITY,
            ..Self::new(
                a_ret,
                0,
                0.0,
                0.0,
                GeoPoint::new(f64::NAN, f64::NAN, f64::NAN),
            )
        }
    }
}

/// Lifts final matches to world points through the crop geometry and the DSM.
/// Matches over nodata or outside the DSM are dropped; the count is returned.
pub fn lift_to_3d(
    matches: &MatchSet,
    crop: &TileGeometry,
    dsm: &DsmRaster,
) -> Result<(Vec<Correspondence3D>, usize), CdrapsError> {
    let mut out = Vec::with_capacity(matches.len());
    let mut dropped = 0;
    for (m, &source) in matches.items().iter().zip(matches.source_indices()) {
        let (x, y) = crop.pixel_to_world(m.pdb.x, m.pdb.y);
        match dsm.sample(x, y) {
            Ok(z) => out.push(Correspondence3D {
                pq: m.pq,
                p: GeoPoint::new(x, y, z),
                source,
            }),
            Err(GeoError::OutOfFootprint { .. } | GeoError::AllNoData { .. }) => dropped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if out.is_empty() && dropped > 0 {
        return Err(CdrapsError::AllNoData);
    }
    Ok((out, dropped))
}

/// Outcome of the per-candidate optimization stage.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateOutcome {
    pub score: CandidateScore,
    pub estimate: Option<PoseEstimate>,
    pub gate: Option<CdrapsError>,
}

/// PnP, refinement and uncertainty for one candidate, with hard gating:
/// failures of any step yield an invalid score rather than an error.
pub fn evaluate_candidate(
    corrs: &[Correspondence3D],
    cam: &CameraModel,
    a_ret: f64,
    cfg: &OptimConfig,
) -> CandidateOutcome {
    let run = || -> Result<PoseEstimate, CdrapsError> {
        let init = initial_pnp(corrs, cam, cfg)?;
        let mut refined = refine_pose(&init, corrs, cam, cfg)?;
        if !refined.converged {
            return Err(CdrapsError::NonConvergence {
                iterations: refined.iterations,
            });
        }
        let unc = pose_uncertainty(&refined, corrs, cam, cfg)?;
        refined.uncertainty = unc.u_unc;
        refined.cov_pos = unc.cov_pos;
        Ok(refined)
    };
    match run() {
        Ok(est) => {
            let e_err = match cfg.err_metric {
                ErrMetric::ReprojRms => est.reproj_error,
                ErrMetric::Objective => est.objective,
            };
            let t = est.pose.translation();
            let score = CandidateScore::new(
                a_ret,
                est.inliers.len(),
                e_err,
                est.uncertainty,
                GeoPoint::new(t.x, t.y, t.z),
            );
            CandidateOutcome {
                score,
                estimate: Some(est),
                gate: None,
            }
        }
        Err(e) => CandidateOutcome {
            score: CandidateScore::gated(a_ret),
            estimate: None,
            gate: Some(e),
        },
    }
}
