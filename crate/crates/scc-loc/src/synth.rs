//! Synthetic scenario generation.
//!
//! Feature maps follow a planted-signal model: every token is the world's
//! latent vector at the token's ground location plus seeded noise, so GeM
//! similarity peaks at tiles that overlap the query footprint. Raw matches
//! are noisy projections of true ground points, uniformly scattered
//! outliers, and optionally decoys: internally consistent matches rendered
//! from a camera displaced over another retrieved tile.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use scc_loc_core::cdraps::OptimConfig;
use scc_loc_core::csatsf::Correspondence;
use scc_loc_core::geo::{pose_from_attitude, Attitude, CameraModel, DsmRaster, PoseSE3};
use scc_loc_core::image::GrayImage;
use scc_loc_core::retrieval::{
    build_tile_db, gem_pool, pde, rank_candidates, tile_side_for, FeatureMap, GlobalDescriptor,
    RetrievalConfig, TileGeometry,
};

use crate::dataset::{
    self, match_file_name, CameraSpec, DatasetError, Geometry, Manifest, MatchLabels, QueryEntry,
    QueryTruthRecord, Telemetry, TileEntry,
};
use crate::formats;
use crate::world::{mix, pixel_ground, FieldSpec, Terrain, World};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible scenario: {0}")]
    SpecInfeasible(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl From<formats::FormatError> for SynthError {
    fn from(e: formats::FormatError) -> Self {
        SynthError::Dataset(e.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlightSpec {
    /// Height above ground, meters.
    pub altitude: f64,
    /// True gimbal pitch is uniform in `[-max, max]` degrees.
    pub pitch_max_deg: f64,
    pub roll_deg: f64,
    /// Camera centers keep this distance from the map edge.
    pub margin: f64,
}

impl Default for FlightSpec {
    fn default() -> Self {
        Self {
            altitude: 150.0,
            pitch_max_deg: 5.0,
            roll_deg: 0.0,
            margin: 110.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchSpec {
    /// Query keypoints drawn per query.
    pub points: usize,
    /// Gaussian pixel noise on true query keypoints.
    pub noise_px: f64,
    /// Outlier share of the matches inside a tile.
    pub outlier_fraction: f64,
    /// Matcher confidence ranges of geometrically valid matches and of
    /// outliers; a useful matcher scores its mistakes lower on average.
    pub inlier_conf: (f64, f64),
    pub outlier_conf: (f64, f64),
    /// Number of top-ranked tiles that receive match files.
    pub tiles_per_query: usize,
}

impl Default for MatchSpec {
    fn default() -> Self {
        Self {
            points: 400,
            noise_px: 0.5,
            outlier_fraction: 0.4,
            inlier_conf: (0.5, 1.0),
            outlier_conf: (0.2, 0.7),
            tiles_per_query: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoySpec {
    /// Decoy tiles per query, chosen among the top `rank_limit` retrieved.
    pub count: usize,
    /// Minimum distance between a decoy location and the truth, meters.
    pub displacement: f64,
    /// Keypoint multiplier of decoy match sets.
    pub inflation: f64,
    pub rank_limit: usize,
    /// Decoy keypoints fill a horizontal band of this fraction of the query
    /// height, like a repeated structure seen in part of the frame.
    pub band: f64,
}

impl Default for DecoySpec {
    fn default() -> Self {
        Self {
            count: 0,
            displacement: 50.0,
            inflation: 1.5,
            rank_limit: 5,
            band: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TelemetryNoise {
    /// Uniform noise bound on the stored pitch prior, degrees.
    pub pitch_deg: f64,
    pub yaw_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSpec {
    pub center_x: f64,
    pub center_y: f64,
    /// Side of the square map, which is also the search area.
    pub side: f64,
    pub gsd: f64,
    pub dsm_cell: f64,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self {
            center_x: 0.0,
            center_y: 0.0,
            side: 600.0,
            gsd: 0.5,
            dsm_cell: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSpec {
    pub fields: FieldSpec,
    /// Query token grid (rows, cols).
    pub query_grid: (usize, usize),
    /// Tile token grid (rows, cols).
    pub tile_grid: (usize, usize),
    /// Gaussian token noise.
    pub noise: f64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            fields: FieldSpec::default(),
            query_grid: (8, 10),
            tile_grid: (8, 8),
            noise: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub queries: usize,
    pub terrain: Terrain,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default)]
    pub flight: FlightSpec,
    #[serde(default)]
    pub matching: MatchSpec,
    #[serde(default)]
    pub decoys: DecoySpec,
    #[serde(default)]
    pub telemetry: TelemetryNoise,
    #[serde(default)]
    pub map: MapSpec,
    #[serde(default)]
    pub features: FeatureSpec,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::SpecInfeasible(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Checks the spec against the consensus radius it will be scored with.
    pub fn validate(&self, d_max: f64) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::SpecInfeasible(m));
        let f = self.matching.outlier_fraction;
        if !(0.0..1.0).contains(&f) {
            return bad(format!("outlier fraction {f} outside [0, 1)"));
        }
        if self.decoys.count > 0 && self.decoys.displacement <= d_max {
            return bad(format!(
                "decoy displacement {} m does not exceed the consensus radius {d_max} m",
                self.decoys.displacement
            ));
        }
        if self.decoys.count > 0 && !(self.decoys.inflation > 0.0) {
            return bad("decoy inflation must be positive".into());
        }
        if !(self.decoys.band > 0.0 && self.decoys.band <= 1.0) {
            return bad("decoy band must lie in (0, 1]".into());
        }
        if self.map.side <= 2.0 * self.flight.margin {
            return bad("map is too small for the flight margin".into());
        }
        if self.matching.points == 0 || self.matching.tiles_per_query == 0 {
            return bad("need at least one keypoint and one matched tile".into());
        }
        for (lo, hi) in [self.matching.inlier_conf, self.matching.outlier_conf] {
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return bad(format!(
                    "confidence range ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1"
                ));
            }
        }
        if self.telemetry.pitch_deg < 0.0
            || self.telemetry.yaw_deg < 0.0
            || self.matching.noise_px < 0.0
        {
            return bad("noise bounds must be nonnegative".into());
        }
        Ok(())
    }

    pub fn extent(&self) -> TileGeometry {
        let m = &self.map;
        TileGeometry {
            center_x: m.center_x,
            center_y: m.center_y,
            width: m.side,
            height: m.side,
            gsd: m.gsd,
        }
    }

    /// Terrain with a flat-ramp hinge snapped onto a DSM cell center, where
    /// bilinear sampling reproduces the kink exactly.
    pub fn terrain(&self) -> Terrain {
        match self.terrain {
            Terrain::FlatRamp {
                elevation,
                hinge_x,
                slope,
            } => {
                let x0 = self.extent().min_x();
                let c = self.map.dsm_cell;
                let k = ((hinge_x - x0) / c - 0.5).round();
                Terrain::FlatRamp {
                    elevation,
                    hinge_x: x0 + (k + 0.5) * c,
                    slope,
                }
            }
            t => t,
        }
    }

    pub fn world(&self) -> World {
        World {
            seed: self.seed,
            terrain: self.terrain(),
            fields: self.features.fields.clone(),
        }
    }

    pub fn nominal_camera(&self) -> Result<CameraModel, DatasetError> {
        Ok(self
            .camera
            .model()?
            .with_priors(0.0, 0.0, self.flight.altitude))
    }

    /// Tile database over the map at the nominal flight priors.
    pub fn tiles(&self) -> Result<Vec<TileGeometry>, SynthError> {
        let cfg = RetrievalConfig::default();
        let side = tile_side_for(&self.nominal_camera()?, &cfg);
        build_tile_db(&self.extent(), side, &cfg)
            .map_err(|e| SynthError::SpecInfeasible(e.to_string()))
    }
}

// rng streams
const S_TILE: u64 = 10;
const S_QUERY: u64 = 11;
const S_TELEMETRY: u64 = 12;
const S_MATCH: u64 = 13;

const SENSOR_NOISE: f64 = 0.01;

fn rng(seed: u64, stream: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream, k as u64))
}

fn noisy(v: Vec<f32>, rng: &mut ChaCha8Rng, sigma: f64) -> Vec<f32> {
    let n = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    v.into_iter().map(|x| x + n.sample(rng) as f32).collect()
}

fn tile_features(
    world: &World,
    tile: &TileGeometry,
    spec: &FeatureSpec,
    rng: &mut ChaCha8Rng,
) -> FeatureMap {
    let (h, w) = spec.tile_grid;
    let mut tokens = Vec::with_capacity(h * w * spec.fields.latent_dim);
    for i in 0..h {
        for j in 0..w {
            let x = tile.min_x() + (j as f64 + 0.5) / w as f64 * tile.width;
            let y = tile.max_y() - (i as f64 + 0.5) / h as f64 * tile.height;
            tokens.extend(noisy(world.latent(x, y), rng, spec.noise));
        }
    }
    FeatureMap::new(h, w, spec.fields.latent_dim, tokens, None).expect("finite tokens")
}

fn query_features(
    world: &World,
    pose: &PoseSE3,
    cam: &CameraModel,
    spec: &FeatureSpec,
    rng: &mut ChaCha8Rng,
) -> FeatureMap {
    let (h, w) = spec.query_grid;
    let d = spec.fields.latent_dim;
    let mut tokens = Vec::with_capacity(h * w * d);
    let mut mean = vec![0.0f32; d];
    for i in 0..h {
        for j in 0..w {
            let u = (j as f64 + 0.5) / w as f64 * cam.width as f64;
            let v = (i as f64 + 0.5) / h as f64 * cam.height as f64;
            let g =
                pixel_ground(&world.terrain, pose, cam, u, v).expect("query rays hit the ground");
            let lat = world.latent(g.x, g.y);
            mean.iter_mut()
                .zip(&lat)
                .for_each(|(m, l)| *m += l / (h * w) as f32);
            tokens.extend(noisy(lat, rng, spec.noise));
        }
    }
    let cls = noisy(mean, rng, spec.noise / ((h * w) as f64).sqrt());
    FeatureMap::new(h, w, d, tokens, Some(cls)).expect("finite tokens")
}

fn render_query(
    world: &World,
    pose: &PoseSE3,
    cam: &CameraModel,
    rng: &mut ChaCha8Rng,
) -> GrayImage {
    let n = Normal::new(0.0, SENSOR_NOISE).unwrap();
    GrayImage::from_fn(cam.width as usize, cam.height as usize, |c, r| {
        let g = pixel_ground(&world.terrain, pose, cam, c as f64 + 0.5, r as f64 + 0.5)
            .expect("query rays hit the ground");
        (world.thermal(g.x, g.y) + n.sample(rng)) as f32
    })
}

fn render_map(world: &World, extent: &TileGeometry) -> GrayImage {
    let (w, h) = extent.pixel_dims();
    let rows: Vec<Vec<f32>> = (0..h)
        .into_par_iter()
        .map(|r| {
            (0..w)
                .map(|c| {
                    let (x, y) = extent.pixel_to_world(c as f64 + 0.5, r as f64 + 0.5);
                    world.optical(x, y) as f32
                })
                .collect()
        })
        .collect();
    GrayImage::new(w, h, rows.concat()).expect("dimensions match")
}

fn dsm_for(terrain: &Terrain, extent: &TileGeometry, cell: f64) -> DsmRaster {
    let cols = (extent.width / cell).ceil() as u32;
    let rows = (extent.height / cell).ceil() as u32;
    let (ox, oy) = (extent.min_x(), extent.max_y());
    let mut data = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            data.push(
                terrain.height(ox + (c as f64 + 0.5) * cell, oy - (r as f64 + 0.5) * cell) as f32,
            );
        }
    }
    DsmRaster::new(ox, oy, cell, rows, cols, data, -9999.0).expect("valid raster")
}

/// A keypoint and the ground point it observes.
struct Keypoint {
    u: f64,
    v: f64,
    ground: Vector3<f64>,
}

fn sample_keypoints(
    terrain: &Terrain,
    pose: &PoseSE3,
    cam: &CameraModel,
    n: usize,
    rows: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Vec<Keypoint> {
    (0..n)
        .filter_map(|_| {
            let u = rng.random_range(0.0..cam.width as f64);
            let v = rng.random_range(rows.0..rows.1);
            pixel_ground(terrain, pose, cam, u, v).map(|ground| Keypoint { u, v, ground })
        })
        .collect()
}

fn expanded(t: &TileGeometry, k: f64) -> TileGeometry {
    TileGeometry {
        width: t.width * k,
        height: t.height * k,
        ..*t
    }
}

/// Raw matches of one query against one tile with their labels.
fn tile_matches(
    keypoints: &[Keypoint],
    label: u8,
    tile: &TileGeometry,
    cam: &CameraModel,
    spec: &MatchSpec,
    rng: &mut ChaCha8Rng,
) -> (Vec<Correspondence>, Vec<u8>) {
    // region wide enough for any viewport alignment of this tile
    let region = expanded(tile, 2.0);
    let noise = Normal::new(0.0, spec.noise_px).unwrap();
    let mut items: Vec<(Correspondence, u8)> = Vec::new();
    let mut inside_tile = 0usize;
    for k in keypoints {
        if !region.contains(k.ground.x, k.ground.y) {
            continue;
        }
        inside_tile += usize::from(tile.contains(k.ground.x, k.ground.y));
        let (xdb, ydb) = tile.world_to_pixel(k.ground.x, k.ground.y);
        let conf = rng.random_range(spec.inlier_conf.0..spec.inlier_conf.1);
        let c = Correspondence::new(
            k.u + noise.sample(rng),
            k.v + noise.sample(rng),
            xdb,
            ydb,
            conf,
        );
        items.push((c, label));
    }
    let f = spec.outlier_fraction;
    let n_out = if items.is_empty() {
        (spec.points as f64 * f).round() as usize
    } else {
        (inside_tile as f64 * f / (1.0 - f)).round() as usize
    };
    let (tw, th) = (tile.width / tile.gsd, tile.height / tile.gsd);
    for _ in 0..n_out {
        let c = Correspondence::new(
            rng.random_range(0.0..cam.width as f64),
            rng.random_range(0.0..cam.height as f64),
            rng.random_range(0.0..tw),
            rng.random_range(0.0..th),
            rng.random_range(spec.outlier_conf.0..spec.outlier_conf.1),
        );
        items.push((c, 0));
    }
    items.shuffle(rng);
    items.into_iter().unzip()
}

struct QueryOutput {
    entry: QueryEntry,
    telemetry: Telemetry,
    truth: QueryTruthRecord,
}

struct Shared<'a> {
    scenario: &'a Scenario,
    world: World,
    cam: CameraModel,
    extent: TileGeometry,
    tiles: Vec<TileGeometry>,
    descriptors: Vec<GlobalDescriptor>,
    out: &'a Path,
}

fn synth_query(s: &Shared, q: usize) -> Result<QueryOutput, SynthError> {
    let sc = s.scenario;
    let id = format!("q{q:04}");
    let mut rq = rng(sc.seed, S_QUERY, q);
    let (lo_x, hi_x) = (
        s.extent.min_x() + sc.flight.margin,
        s.extent.max_x() - sc.flight.margin,
    );
    let (lo_y, hi_y) = (
        s.extent.min_y() + sc.flight.margin,
        s.extent.max_y() - sc.flight.margin,
    );
    let x = rq.random_range(lo_x..hi_x);
    let y = rq.random_range(lo_y..hi_y);
    let yaw = rq.random_range(-180.0..180.0f64);
    let pitch = if sc.flight.pitch_max_deg > 0.0 {
        rq.random_range(-sc.flight.pitch_max_deg..sc.flight.pitch_max_deg)
    } else {
        0.0
    };
    let att = Attitude {
        yaw: yaw.to_radians(),
        pitch: pitch.to_radians(),
        roll: sc.flight.roll_deg.to_radians(),
    };
    let z = s.world.terrain.height(x, y) + sc.flight.altitude;
    let pose = pose_from_attitude(&att, &Vector3::new(x, y, z));

    let mut rt = rng(sc.seed, S_TELEMETRY, q);
    let jitter = |r: &mut ChaCha8Rng, b: f64| if b > 0.0 { r.random_range(-b..b) } else { 0.0 };
    let telemetry = Telemetry {
        pitch_deg: pitch + jitter(&mut rt, sc.telemetry.pitch_deg),
        yaw_deg: yaw + jitter(&mut rt, sc.telemetry.yaw_deg),
        altitude: sc.flight.altitude,
    };

    let image = format!("queries/{id}.pgm");
    let features = format!("queries/{id}.sccf");
    let matches = format!("matches/{id}");
    dataset::write_gray(
        &s.out.join(&image),
        &render_query(&s.world, &pose, &s.cam, &mut rq),
    )?;
    let feats = query_features(&s.world, &pose, &s.cam, &sc.features, &mut rq);
    formats::write(&s.out.join(&features), &formats::encode_features(&feats))?;

    let qdesc = gem_pool(&feats, &RetrievalConfig::default())
        .map_err(|e| SynthError::SpecInfeasible(e.to_string()))?;
    let ranking =
        rank_candidates(&qdesc, &s.descriptors, s.tiles.len()).expect("uniform dimensions");
    let matched: Vec<usize> = ranking
        .iter()
        .take(sc.matching.tiles_per_query)
        .map(|r| r.index)
        .collect();
    let decoy_tiles: Vec<usize> = ranking
        .iter()
        .take(sc.decoys.rank_limit)
        .map(|r| r.index)
        .filter(|&t| {
            (s.tiles[t].center_x - x).hypot(s.tiles[t].center_y - y) >= sc.decoys.displacement
        })
        .take(sc.decoys.count)
        .collect();

    let mut rm = rng(sc.seed, S_MATCH, q);
    let truth_kp = sample_keypoints(
        &s.world.terrain,
        &pose,
        &s.cam,
        sc.matching.points,
        (0.0, s.cam.height as f64),
        &mut rm,
    );
    let dir = s.out.join(&matches);
    dataset::create_dir(&dir)?;
    let mut match_labels = Vec::with_capacity(matched.len());
    for &t in &matched {
        let tile = &s.tiles[t];
        let (items, labels) = if decoy_tiles.contains(&t) {
            let (dx, dy) = (tile.center_x - x, tile.center_y - y);
            let dz = s.world.terrain.height(x + dx, y + dy) + sc.flight.altitude;
            let shifted = pose_from_attitude(&att, &Vector3::new(x + dx, y + dy, dz));
            let n = (sc.matching.points as f64 * sc.decoys.inflation).round() as usize;
            let h = s.cam.height as f64;
            let top = rm.random_range(0.0..=h * (1.0 - sc.decoys.band));
            let kp = sample_keypoints(
                &s.world.terrain,
                &shifted,
                &s.cam,
                n,
                (top, top + h * sc.decoys.band),
                &mut rm,
            );
            tile_matches(&kp, 2, tile, &s.cam, &sc.matching, &mut rm)
        } else {
            tile_matches(&truth_kp, 1, tile, &s.cam, &sc.matching, &mut rm)
        };
        formats::write(
            &dir.join(match_file_name(t)),
            &formats::encode_matches(&items),
        )?;
        let labels = labels.into_iter().map(|l| char::from(b'0' + l)).collect();
        match_labels.push(MatchLabels { tile: t, labels });
    }

    let true_tile = (0..s.tiles.len())
        .min_by(|&a, &b| pde(&s.tiles[a], x, y).total_cmp(&pde(&s.tiles[b], x, y)))
        .expect("nonempty database");
    Ok(QueryOutput {
        entry: QueryEntry {
            id: id.clone(),
            image,
            features,
            matches,
        },
        telemetry,
        truth: QueryTruthRecord {
            id,
            x,
            y,
            z,
            yaw_deg: yaw,
            pitch_deg: pitch,
            roll_deg: sc.flight.roll_deg,
            true_tile,
            decoy_tiles,
            match_labels,
        },
    })
}

/// Writes the full dataset for `scenario` into `out`. Output is a pure
/// function of the scenario.
pub fn synth_scenario(scenario: &Scenario, out: &Path) -> Result<Manifest, SynthError> {
    scenario.validate(OptimConfig::default().d_max)?;
    let world = scenario.world();
    let extent = scenario.extent();
    let cam = scenario.camera.model()?;
    let tiles = scenario.tiles()?;
    for sub in ["tiles", "queries", "matches"] {
        dataset::create_dir(&out.join(sub))?;
    }

    dataset::write_gray(&out.join("map.pgm"), &render_map(&world, &extent))?;
    formats::write(
        &out.join("dsm.sccd"),
        &formats::encode_dsm(&dsm_for(&world.terrain, &extent, scenario.map.dsm_cell)),
    )?;

    let tile_maps: Vec<FeatureMap> = tiles
        .par_iter()
        .enumerate()
        .map(|(k, t)| {
            tile_features(
                &world,
                t,
                &scenario.features,
                &mut rng(scenario.seed, S_TILE, k),
            )
        })
        .collect();
    let mut tile_entries = Vec::with_capacity(tiles.len());
    let mut descriptors = Vec::with_capacity(tiles.len());
    for (k, (t, m)) in tiles.iter().zip(&tile_maps).enumerate() {
        let features = format!("tiles/t{k:04}.sccf");
        formats::write(&out.join(&features), &formats::encode_features(m))?;
        tile_entries.push(TileEntry {
            geometry: Geometry::from(t),
            features,
        });
        descriptors.push(
            gem_pool(m, &RetrievalConfig::default())
                .map_err(|e| SynthError::SpecInfeasible(e.to_string()))?,
        );
    }

    let shared = Shared {
        scenario,
        world,
        cam,
        extent,
        tiles,
        descriptors,
        out,
    };
    let outputs: Vec<QueryOutput> = (0..scenario.queries)
        .into_par_iter()
        .map(|q| synth_query(&shared, q))
        .collect::<Result<_, _>>()?;

    let mut telemetry = BTreeMap::new();
    let mut truth = Vec::with_capacity(outputs.len());
    let mut queries = Vec::with_capacity(outputs.len());
    for o in outputs {
        telemetry.insert(o.entry.id.clone(), o.telemetry);
        truth.push(o.truth);
        queries.push(o.entry);
    }
    let manifest = Manifest {
        camera: scenario.camera,
        extent: Geometry::from(&extent),
        map_image: "map.pgm".into(),
        dsm: "dsm.sccd".into(),
        tiles: tile_entries,
        queries,
    };
    dataset::write_json(&out.join(dataset::MANIFEST), &manifest)?;
    dataset::write_json(&out.join(dataset::TELEMETRY), &telemetry)?;
    dataset::write_json(&out.join(dataset::TRUTH), &truth)?;
    std::fs::write(
        out.join("scenario.toml"),
        toml::to_string(scenario).expect("scenario serializes"),
    )
    .map_err(|source| DatasetError::Io {
        path: out.join("scenario.toml").display().to_string(),
        source,
    })?;
    Ok(manifest)
}
