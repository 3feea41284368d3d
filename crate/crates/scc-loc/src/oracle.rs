//! Noise-floor oracle: PnP fed only the planted true matches of each query's
//! true tile. Its error is what keypoint noise alone costs, and bounds what
//! the full pipeline can hope for on the same data.

use scc_loc_core::cdraps::{evaluate_candidate, lift_to_3d, OptimConfig};
use scc_loc_core::csatsf::{MatchSet, Stage};

use crate::config::PipelineConfig;
use crate::dataset::{Dataset, DatasetError};
use crate::formats;
use crate::world::mix;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseFloor {
    /// Horizontal error per query; `None` when the oracle could not solve it.
    pub errors: Vec<Option<f64>>,
    pub mean_error: f64,
}

pub fn noise_floor(ds: &Dataset, cfg: &PipelineConfig) -> Result<NoiseFloor, DatasetError> {
    let truth = ds.truth()?;
    let cam = ds.manifest.camera.model()?;
    let dsm = formats::read_dsm(&ds.path(&ds.manifest.dsm))?;
    let mut errors = Vec::with_capacity(truth.len());
    for (k, (q, t)) in ds.manifest.queries.iter().zip(&truth).enumerate() {
        let Some(labels) = t.match_labels.iter().find(|m| m.tile == t.true_tile) else {
            errors.push(None);
            continue;
        };
        let tile = ds.manifest.tiles[t.true_tile].geometry.tile()?;
        let (w, h) = (tile.width / tile.gsd, tile.height / tile.gsd);
        let raw = formats::read_matches(&ds.match_path(q, t.true_tile))?;
        let inliers: Vec<_> = raw
            .into_iter()
            .zip(labels.labels.bytes())
            .filter(|(m, l)| {
                *l == b'1' && (0.0..w).contains(&m.pdb.x) && (0.0..h).contains(&m.pdb.y)
            })
            .map(|(m, _)| m)
            .collect();
        let set = MatchSet::raw(inliers).pass_to(Stage::Final);
        let qcam = ds.telemetry.get(&q.id).map_or(cam, |tel| tel.apply(cam));
        let ocfg = OptimConfig {
            seed: mix(cfg.run.seed, k as u64, 0),
            ..cfg.optim()
        };
        let err = lift_to_3d(&set, &tile, &dsm).ok().and_then(|(corrs, _)| {
            let out = evaluate_candidate(&corrs, &qcam, 1.0, &ocfg);
            out.score
                .valid
                .then(|| (out.score.location.x - t.x).hypot(out.score.location.y - t.y))
        });
        errors.push(err);
    }
    let solved: Vec<f64> = errors.iter().flatten().copied().collect();
    let mean_error = if solved.is_empty() {
        0.0
    } else {
        solved.iter().sum::<f64>() / solved.len() as f64
    };
    Ok(NoiseFloor { errors, mean_error })
}
