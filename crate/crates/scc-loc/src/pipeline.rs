//! End-to-end run: retrieval, viewport alignment, cascaded filtering and
//! consensus pose selection for every query of a dataset.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use scc_loc_core::cdraps::{
    base_reliability, evaluate_candidate, geo_consensus, lift_to_3d, select_position,
    CandidateScore, OptimConfig,
};
use scc_loc_core::csatsf::{
    run_cascade_with_saliency, saliency_map, CascadeStats, Correspondence, MatchSet, SaliencyMap,
};
use scc_loc_core::geo::{CameraModel, DsmRaster};
use scc_loc_core::image::GrayImage;
use scc_loc_core::metrics::{self, FailurePolicy, QueryOutcome, QueryTruth};
use scc_loc_core::retrieval::{
    gem_pool, pde, pde_hit, rank_candidates, tile_side_for, FeatureMap, GlobalDescriptor,
    TileGeometry,
};
use scc_loc_core::sgva::align_viewport;

use crate::cache::{CacheError, DescriptorCache};
use crate::config::PipelineConfig;
use crate::dataset::{self, Dataset, DatasetError, Geometry, QueryEntry, QueryTruthRecord};
use crate::formats::{self, FormatError};
use crate::world::mix;

/// Ranked tiles kept in each record for Recall@N.
pub const RECALL_DEPTH: usize = 10;
pub const RECALL_N: [usize; 3] = [1, 5, 10];

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("evaluation failed: {0}")]
    Metrics(#[from] metrics::MetricsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub rank: usize,
    pub tile: usize,
    pub a_ret: f64,
    pub crop: Geometry,
    pub eta: f64,
    pub scale: f64,
    pub raw: usize,
    pub in_crop: usize,
    pub equalized: usize,
    pub textured: usize,
    pub topo: usize,
    pub filtered: usize,
    pub lifted: usize,
    pub warnings: Vec<String>,
    pub n_in: usize,
    pub e_err: Option<f64>,
    pub u_unc: Option<f64>,
    pub r_base: f64,
    pub c_geo: f64,
    pub r_total: f64,
    pub valid: bool,
    pub location: Option<[f64; 3]>,
    pub gate: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub selected: Option<[f64; 2]>,
    /// Candidate position in `candidates` of the selection.
    pub selected_rank: Option<usize>,
    pub failure: Option<String>,
    /// Distance to truth; filled in by evaluation.
    pub error: Option<f64>,
    pub penalized: bool,
    /// 1-based rank of the first retrieved tile with PDE below one half.
    pub hit_rank: Option<usize>,
    /// Top of the retrieval ranking as (tile, similarity).
    pub retrieved: Vec<(usize, f64)>,
    /// Baseline selector: the valid candidate with the most PnP inliers.
    pub naive_selected: Option<[f64; 2]>,
    pub naive_error: Option<f64>,
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub queries: usize,
    pub localized: usize,
    pub acc_at_r: Vec<(f64, f64)>,
    pub recall_at_n: Vec<(usize, f64)>,
    pub mean_error: f64,
    pub std_error: f64,
    pub penalize_failures: bool,
    pub config_hash: String,
    pub seed: u64,
}

/// Run output. Wall times live beside the report, never inside it, so two
/// runs with the same inputs serialize identically.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub summary: Option<Summary>,
    pub records: Vec<QueryRecord>,
    pub wall_times: Vec<f64>,
}

/// Everything shared read-only by the per-query workers.
pub struct Context {
    pub cfg: PipelineConfig,
    pub dataset: Dataset,
    pub cam: CameraModel,
    pub extent: TileGeometry,
    pub tiles: Vec<TileGeometry>,
    pub tile_maps: Vec<FeatureMap>,
    pub descriptors: Vec<GlobalDescriptor>,
    pub map: GrayImage,
    pub dsm: DsmRaster,
}

impl Context {
    pub fn load(
        cfg: PipelineConfig,
        dataset: Dataset,
        use_cache: bool,
    ) -> Result<Self, PipelineError> {
        cfg.validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let m = &dataset.manifest;
        let cam = m.camera.model()?;
        let extent = m.extent.tile()?;
        let rcfg = cfg.retrieval();
        let mut cache = DescriptorCache::open(&dataset.path("tiles"));
        let mut tiles = Vec::with_capacity(m.tiles.len());
        let mut tile_maps = Vec::with_capacity(m.tiles.len());
        let mut descriptors = Vec::with_capacity(m.tiles.len());
        for t in &m.tiles {
            tiles.push(t.geometry.tile()?);
            let (map, d) = if use_cache {
                cache.load(&t.features, &dataset.path(&t.features), &rcfg)?
            } else {
                let map = formats::read_features(&dataset.path(&t.features))?;
                let d = gem_pool(&map, &rcfg)
                    .map_err(|e| CacheError::Retrieval(t.features.clone(), e))?;
                (map, d)
            };
            tile_maps.push(map);
            descriptors.push(d);
        }
        if use_cache {
            cache.save();
        }
        let map = dataset::read_gray(&dataset.path(&m.map_image))?;
        let dsm = formats::read_dsm(&dataset.path(&m.dsm))?;
        Ok(Self {
            cfg,
            dataset,
            cam,
            extent,
            tiles,
            tile_maps,
            descriptors,
            map,
            dsm,
        })
    }

    /// Re-rasterizes a crop from the ortho-photo (bilinear, pixel centers).
    pub fn render_crop(&self, crop: &TileGeometry) -> GrayImage {
        render_crop(&self.map, &self.extent, crop)
    }

    pub fn localize(&self, index: usize, q: &QueryEntry) -> QueryRecord {
        let mut rec = QueryRecord {
            id: q.id.clone(),
            selected: None,
            selected_rank: None,
            failure: None,
            error: None,
            penalized: false,
            hit_rank: None,
            retrieved: Vec::new(),
            naive_selected: None,
            naive_error: None,
            candidates: Vec::new(),
        };
        if let Err(e) = self.localize_into(index, q, &mut rec) {
            rec.failure = Some(e);
        }
        rec
    }

    fn localize_into(
        &self,
        index: usize,
        q: &QueryEntry,
        rec: &mut QueryRecord,
    ) -> Result<(), String> {
        let rcfg = self.cfg.retrieval();
        let tel = self
            .dataset
            .telemetry
            .get(&q.id)
            .ok_or("missing telemetry")?;
        let cam = tel.apply(self.cam);
        let feats =
            formats::read_features(&self.dataset.path(&q.features)).map_err(|e| e.to_string())?;
        let cls = feats
            .cls()
            .ok_or("query features carry no CLS token")?
            .to_vec();
        let qd = gem_pool(&feats, &rcfg).map_err(|e| e.to_string())?;
        let ranking = rank_candidates(&qd, &self.descriptors, rcfg.top_n.max(RECALL_DEPTH))
            .map_err(|e| e.to_string())?;
        rec.retrieved = ranking
            .iter()
            .take(RECALL_DEPTH)
            .map(|r| (r.index, r.similarity))
            .collect();

        let qimg = dataset::read_gray(&self.dataset.path(&q.image)).map_err(|e| e.to_string())?;
        let fcfg = self.cfg.filter();
        let vq = saliency_map(&qimg, fcfg.window);
        let side = tile_side_for(&cam, &rcfg);

        let mut scores = Vec::new();
        for (rank, r) in ranking.iter().take(rcfg.top_n).enumerate() {
            let ocfg = OptimConfig {
                seed: mix(self.cfg.run.seed, index as u64, rank as u64),
                ..self.cfg.optim()
            };
            let (cand, score) = self.candidate(
                q,
                rank,
                r.index,
                r.similarity,
                &cls,
                side,
                &cam,
                &vq,
                &qimg,
                &ocfg,
            );
            rec.candidates.push(cand);
            scores.push(score);
        }

        let ocfg = self.cfg.optim();
        base_reliability(&mut scores, &ocfg);
        geo_consensus(&mut scores, &ocfg);
        for (c, s) in rec.candidates.iter_mut().zip(&scores) {
            c.r_base = s.r_base;
            c.c_geo = s.c_geo;
            c.r_total = s.r_total;
        }
        rec.naive_selected =
            naive_select(&scores).map(|k| [scores[k].location.x, scores[k].location.y]);
        let sel = select_position(&scores).map_err(|e| e.to_string())?;
        rec.selected = Some([sel.x, sel.y]);
        rec.selected_rank = Some(sel.index);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn candidate(
        &self,
        q: &QueryEntry,
        rank: usize,
        tile_index: usize,
        a_ret: f64,
        cls: &[f32],
        side: f64,
        cam: &CameraModel,
        vq: &SaliencyMap,
        qimg: &GrayImage,
        ocfg: &OptimConfig,
    ) -> (CandidateRecord, CandidateScore) {
        let tile = &self.tiles[tile_index];
        let base = TileGeometry {
            width: side,
            height: side,
            ..*tile
        };
        let mut rec = CandidateRecord {
            rank,
            tile: tile_index,
            a_ret,
            crop: Geometry::from(&base),
            eta: 0.0,
            scale: 1.0,
            raw: 0,
            in_crop: 0,
            equalized: 0,
            textured: 0,
            topo: 0,
            filtered: 0,
            lifted: 0,
            warnings: Vec::new(),
            n_in: 0,
            e_err: None,
            u_unc: None,
            r_base: 0.0,
            c_geo: 0.0,
            r_total: 0.0,
            valid: false,
            location: None,
            gate: None,
        };
        let gated = |mut rec: CandidateRecord, why: String| {
            rec.gate = Some(why);
            (rec, CandidateScore::gated(a_ret))
        };

        let crop = match align_viewport(
            cls,
            &self.tile_maps[tile_index],
            &base,
            &self.extent,
            &self.cfg.sgva(),
        ) {
            Ok(al) => {
                rec.eta = al.adjustment.eta;
                rec.scale = al.adjustment.scale;
                if al.stats.is_none() {
                    rec.warnings.push("no semantic mass".into());
                }
                al.geometry
            }
            Err(e) => {
                rec.warnings.push(format!("alignment skipped: {e}"));
                base
            }
        };
        rec.crop = Geometry::from(&crop);

        let path = self.dataset.match_path(q, tile_index);
        let raw = if path.exists() {
            match formats::read_matches(&path) {
                Ok(m) => m,
                Err(e) => return gated(rec, e.to_string()),
            }
        } else {
            rec.warnings.push("no match file".into());
            Vec::new()
        };
        rec.raw = raw.len();
        let in_crop = to_crop_frame(&raw, tile, &crop);
        rec.in_crop = in_crop.len();

        let db_img = self.render_crop(&crop);
        let vdb = saliency_map(&db_img, self.cfg.filter().window);
        let (fin, stats) = match run_cascade_with_saliency(
            MatchSet::raw(in_crop),
            (qimg.width(), qimg.height()),
            vq,
            &vdb,
            &self.cfg.filter(),
        ) {
            Ok(r) => r,
            Err(e) => return gated(rec, e.to_string()),
        };
        record_cascade(&mut rec, &stats);

        let corrs = match lift_to_3d(&fin, &crop, &self.dsm) {
            Ok((c, _)) => c,
            Err(e) => return gated(rec, e.to_string()),
        };
        rec.lifted = corrs.len();
        let out = evaluate_candidate(&corrs, cam, a_ret, ocfg);
        if let Some(e) = out.gate {
            return gated(rec, e.to_string());
        }
        let s = out.score;
        rec.n_in = s.n_in;
        rec.e_err = Some(s.e_err);
        rec.u_unc = Some(s.u_unc);
        rec.valid = true;
        rec.location = Some([s.location.x, s.location.y, s.location.z]);
        (rec, s)
    }
}

fn record_cascade(rec: &mut CandidateRecord, stats: &CascadeStats) {
    rec.equalized = stats.equalized;
    rec.textured = stats.textured;
    rec.topo = stats.topo;
    rec.filtered = stats.final_;
    for (flag, what) in [
        (stats.degenerate_saliency, "degenerate saliency"),
        (stats.degenerate_triangulation, "degenerate triangulation"),
        (
            stats.insufficient_matches,
            "insufficient matches for consistency",
        ),
    ] {
        if flag {
            rec.warnings.push(what.into());
        }
    }
}

/// Moves database coordinates from the stored tile's pixel frame into the
/// crop's, dropping matches that land outside the crop.
pub fn to_crop_frame(
    raw: &[Correspondence],
    tile: &TileGeometry,
    crop: &TileGeometry,
) -> Vec<Correspondence> {
    let (w, h) = (crop.width / crop.gsd, crop.height / crop.gsd);
    raw.iter()
        .filter_map(|m| {
            let (x, y) = tile.pixel_to_world(m.pdb.x, m.pdb.y);
            let (u, v) = crop.world_to_pixel(x, y);
            ((0.0..w).contains(&u) && (0.0..h).contains(&v))
                .then(|| Correspondence::new(m.pq.x, m.pq.y, u, v, m.conf))
        })
        .collect()
}

/// Bilinear resampling of `map` (covering `extent`) onto the crop's pixel grid.
pub fn render_crop(map: &GrayImage, extent: &TileGeometry, crop: &TileGeometry) -> GrayImage {
    let (w, h) = crop.pixel_dims();
    let (mw, mh) = (map.width(), map.height());
    GrayImage::from_fn(w, h, |c, r| {
        let (x, y) = crop.pixel_to_world(c as f64 + 0.5, r as f64 + 0.5);
        let (u, v) = extent.world_to_pixel(x, y);
        let fu = (u - 0.5).clamp(0.0, (mw - 1) as f64);
        let fv = (v - 0.5).clamp(0.0, (mh - 1) as f64);
        let (c0, r0) = (fu.floor() as usize, fv.floor() as usize);
        let (c1, r1) = ((c0 + 1).min(mw - 1), (r0 + 1).min(mh - 1));
        let (tx, ty) = ((fu - c0 as f64) as f32, (fv - r0 as f64) as f32);
        let top = map.get(c0, r0) * (1.0 - tx) + map.get(c1, r0) * tx;
        let bottom = map.get(c0, r1) * (1.0 - tx) + map.get(c1, r1) * tx;
        top * (1.0 - ty) + bottom * ty
    })
}

/// Valid candidate with the most inliers; ties go to the better retrieval rank.
pub fn naive_select(scores: &[CandidateScore]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, s) in scores.iter().enumerate() {
        if s.valid && best.is_none_or(|b| s.n_in > scores[b].n_in) {
            best = Some(k);
        }
    }
    best
}

/// Localizes every query. Queries run concurrently; records come back in
/// dataset order.
pub fn run_queries(ctx: &Context) -> (Vec<QueryRecord>, Vec<f64>) {
    ctx.dataset
        .manifest
        .queries
        .par_iter()
        .enumerate()
        .map(|(k, q)| {
            let t0 = Instant::now();
            let rec = ctx.localize(k, q);
            (rec, t0.elapsed().as_secs_f64())
        })
        .unzip()
}

/// Largest error a position inside the search area can have.
pub fn max_in_area_error(extent: &TileGeometry) -> f64 {
    extent.width.hypot(extent.height)
}

/// Fills per-record errors and hit ranks against the truth and aggregates
/// the metrics.
pub fn evaluate_records(
    records: &mut [QueryRecord],
    truth: &[QueryTruthRecord],
    tiles: &[TileGeometry],
    extent: &TileGeometry,
    cfg: &PipelineConfig,
) -> Result<Summary, PipelineError> {
    let by_id: std::collections::BTreeMap<&str, &QueryTruthRecord> =
        truth.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut outcomes = Vec::with_capacity(records.len());
    for r in records.iter_mut() {
        let t = by_id
            .get(r.id.as_str())
            .ok_or_else(|| metrics::MetricsError::KeyMismatch(r.id.clone()))?;
        r.hit_rank = r
            .retrieved
            .iter()
            .position(|&(tile, _)| tiles.get(tile).is_some_and(|g| pde_hit(pde(g, t.x, t.y))))
            .map(|p| p + 1);
        let dist = |p: [f64; 2]| (p[0] - t.x).hypot(p[1] - t.y);
        r.error = r.selected.map(dist);
        r.naive_error = r.naive_selected.map(dist);
        r.penalized = false;
        if r.selected.is_none() && cfg.run.penalize_failures {
            r.error = Some(max_in_area_error(extent));
            r.penalized = true;
        }
        outcomes.push(QueryOutcome {
            id: r.id.clone(),
            position: r.selected.map(|p| (p[0], p[1])),
            hit_rank: r.hit_rank,
        });
    }
    let truths: Vec<QueryTruth> = truth
        .iter()
        .map(|t| QueryTruth {
            id: t.id.clone(),
            x: t.x,
            y: t.y,
        })
        .collect();
    let policy = if cfg.run.penalize_failures {
        FailurePolicy::Penalize(max_in_area_error(extent))
    } else {
        FailurePolicy::Exclude
    };
    let m = metrics::evaluate(
        &outcomes,
        &truths,
        &metrics::DEFAULT_RADII,
        &RECALL_N,
        policy,
    )?;
    Ok(Summary {
        queries: m.queries,
        localized: m.localized,
        acc_at_r: m.acc_at_r,
        recall_at_n: m.recall_at_n,
        mean_error: m.mean_error,
        std_error: m.std_error,
        penalize_failures: cfg.run.penalize_failures,
        config_hash: cfg.hash(),
        seed: cfg.run.seed,
    })
}

/// Full run over a dataset. Evaluation happens when the dataset has truth.
pub fn run_pipeline(cfg: &PipelineConfig, dataset: Dataset) -> Result<EvalReport, PipelineError> {
    let ctx = Context::load(cfg.clone(), dataset, true)?;
    let (mut records, wall_times) = run_queries(&ctx);
    let summary = if ctx.dataset.path(dataset::TRUTH).exists() {
        let truth = ctx.dataset.truth()?;
        Some(evaluate_records(
            &mut records,
            &truth,
            &ctx.tiles,
            &ctx.extent,
            cfg,
        )?)
    } else {
        None
    };
    Ok(EvalReport {
        summary,
        records,
        wall_times,
    })
}
