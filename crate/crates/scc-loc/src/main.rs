#![allow(clippy::neg_cmp_op_on_partial_ord)]
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use scc_loc::config::PipelineConfig;
use scc_loc::dataset::{self, Dataset, Geometry, Telemetry};
use scc_loc::{formats, pipeline, report, synth};
use scc_loc_core::cdraps::{
    base_reliability, evaluate_candidate, geo_consensus, lift_to_3d, select_position, OptimConfig,
};
use scc_loc_core::csatsf::{
    global_consistency, saliency_map, spatial_equalize, texture_gate, topo_filter, MatchSet,
};
use scc_loc_core::retrieval::{build_tile_db, gem_pool, rank_candidates, tile_side_for};
use scc_loc_core::sgva::align_viewport;

#[derive(Parser)]
#[command(
    name = "scc-loc",
    version,
    about = "Thermal-to-satellite geo-localization engine"
)]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the sliding-window tile database of a dataset's map extent.
    Tile {
        #[arg(long)]
        dataset: PathBuf,
        /// Telemetry altitude used to size tiles (defaults to 150 m).
        #[arg(long, default_value_t = 150.0)]
        altitude: f64,
        #[arg(long, default_value_t = 0.0)]
        pitch_deg: f64,
    },
    /// Rank database tiles against a query feature file.
    Retrieve {
        #[arg(long)]
        query: PathBuf,
        /// Directory of database `.sccf` files.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Align one candidate viewport and print the adjusted geometry.
    Align {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        tile: PathBuf,
        /// JSON geometry of the tile.
        #[arg(long)]
        geom: PathBuf,
        /// JSON geometry of the map extent (defaults to the tile itself).
        #[arg(long)]
        extent: Option<PathBuf>,
    },
    /// Run the match-filter cascade on one match file.
    Filter {
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        query_img: PathBuf,
        #[arg(long)]
        db_img: PathBuf,
        /// Write the survivors of every stage as `.sccm` files here.
        #[arg(long)]
        dump_stages: Option<PathBuf>,
    },
    /// Score and select among prepared candidates of one query.
    Localize {
        /// Directory with `candidates.json` and the referenced match files.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        dsm: PathBuf,
        /// JSON telemetry of the query.
        #[arg(long)]
        telemetry: PathBuf,
    },
    /// Run the full pipeline over a dataset.
    Run {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        penalize_failures: bool,
        #[arg(long)]
        emit_csv: bool,
        #[arg(long)]
        no_cache: bool,
    },
    /// Generate a synthetic dataset from a scenario file.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics of a report against a dataset's truth.
    Eval {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        penalize_failures: bool,
    },
}

/// Input of `localize`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateSet {
    camera: dataset::CameraSpec,
    candidates: Vec<CandidateInput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateInput {
    /// Crop the match file's database coordinates refer to.
    geometry: Geometry,
    similarity: f64,
    /// Final (already filtered) matches.
    matches: String,
}

#[derive(Serialize)]
struct LocalizeOutput {
    selected: Option<[f64; 2]>,
    selected_index: Option<usize>,
    failure: Option<String>,
    candidates: Vec<serde_json::Value>,
}

/// Writes a line to stdout; a closed pipe (`| head`) ends the process quietly.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if writeln!(std::io::stdout().lock(), $($arg)*).is_err() {
            std::process::exit(0);
        }
    }};
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn load_config(path: Option<&Path>) -> Res<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env()?;
    Ok(cfg)
}

fn print_json<T: Serialize>(v: &T) {
    out!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: Cli) -> Res<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Tile {
            dataset,
            altitude,
            pitch_deg,
        } => {
            let ds = Dataset::open(&dataset)?;
            let cam =
                ds.manifest
                    .camera
                    .model()?
                    .with_priors(pitch_deg.to_radians(), 0.0, altitude);
            let side = tile_side_for(&cam, &cfg.retrieval());
            let tiles = build_tile_db(&ds.manifest.extent.tile()?, side, &cfg.retrieval())?;
            for (k, t) in tiles.iter().enumerate() {
                out!(
                    "{}",
                    serde_json::json!({ "index": k, "geometry": Geometry::from(t) })
                );
            }
        }
        Cmd::Retrieve {
            query,
            features,
            top_n,
        } => {
            let rcfg = cfg.retrieval();
            let q = formats::read_features(&query)?;
            let qd = gem_pool(&q, &rcfg)?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(&features)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "sccf"))
                .collect();
            files.sort();
            let mut cache = scc_loc::cache::DescriptorCache::open(&features);
            let mut db = Vec::with_capacity(files.len());
            for f in &files {
                let key = f.file_name().unwrap().to_string_lossy().to_string();
                db.push(cache.load(&key, f, &rcfg)?.1);
            }
            cache.save();
            for r in rank_candidates(&qd, &db, top_n.unwrap_or(rcfg.top_n))? {
                out!(
                    "{}",
                    serde_json::json!({ "index": r.index, "file": files[r.index].display().to_string(), "similarity": r.similarity })
                );
            }
        }
        Cmd::Align {
            query,
            tile,
            geom,
            extent,
        } => {
            let q = formats::read_features(&query)?;
            let cls = q.cls().ok_or("query features carry no CLS token")?;
            let t = formats::read_features(&tile)?;
            let g = dataset::read_json::<Geometry>(&geom)?.tile()?;
            let e = match extent {
                Some(p) => dataset::read_json::<Geometry>(&p)?.tile()?,
                None => g,
            };
            let al = align_viewport(cls, &t, &g, &e, &cfg.sgva())?;
            print_json(&serde_json::json!({
                "geometry": Geometry::from(&al.geometry),
                "eta": al.adjustment.eta,
                "gain": al.adjustment.gain,
                "scale": al.adjustment.scale,
                "offset": [al.adjustment.offset.x, al.adjustment.offset.y],
                "mu": al.stats.map(|s| [s.mu.x, s.mu.y]),
                "sigma": al.stats.map(|s| s.sigma),
            }));
        }
        Cmd::Filter {
            matches,
            query_img,
            db_img,
            dump_stages,
        } => {
            let fcfg = cfg.filter();
            let raw = MatchSet::raw(formats::read_matches(&matches)?);
            let qi = dataset::read_gray(&query_img)?;
            let di = dataset::read_gray(&db_img)?;
            let (vq, vdb) = (
                saliency_map(&qi, fcfg.window),
                saliency_map(&di, fcfg.window),
            );
            let eq = spatial_equalize(&raw, &fcfg, (qi.width(), qi.height()))?;
            let tex = texture_gate(&eq, &vq, &vdb, &fcfg)?;
            let topo = topo_filter(&tex, &fcfg).unwrap_or_else(|e| {
                eprintln!("topology filter passed through: {e}");
                tex.clone().pass_to(scc_loc_core::csatsf::Stage::Topo)
            });
            let fin = global_consistency(&topo, &fcfg).unwrap_or_else(|e| {
                eprintln!("consistency filter passed through: {e}");
                topo.clone().pass_to(scc_loc_core::csatsf::Stage::Final)
            });
            let stages = [
                ("raw", &raw),
                ("equalized", &eq),
                ("textured", &tex),
                ("topo", &topo),
                ("final", &fin),
            ];
            if let Some(dir) = &dump_stages {
                dataset::create_dir(dir)?;
                for (name, set) in &stages {
                    formats::write(
                        &dir.join(format!("{name}.sccm")),
                        &formats::encode_matches(set.items()),
                    )?;
                }
            }
            let counts: serde_json::Map<String, serde_json::Value> = stages
                .iter()
                .map(|(n, s)| (n.to_string(), s.len().into()))
                .collect();
            print_json(&counts);
        }
        Cmd::Localize {
            candidates,
            dsm,
            telemetry,
        } => {
            let set: CandidateSet = dataset::read_json(&candidates.join("candidates.json"))?;
            let tel: Telemetry = dataset::read_json(&telemetry)?;
            let cam = tel.apply(set.camera.model()?);
            let dsm = formats::read_dsm(&dsm)?;
            let ocfg = cfg.optim();
            let mut scores = Vec::new();
            let mut gates = Vec::new();
            for (k, c) in set.candidates.iter().enumerate() {
                let crop = c.geometry.tile()?;
                let m = MatchSet::raw(formats::read_matches(&candidates.join(&c.matches))?)
                    .pass_to(scc_loc_core::csatsf::Stage::Final);
                let kcfg = OptimConfig {
                    seed: ocfg.seed.wrapping_add(k as u64),
                    ..ocfg
                };
                let (score, gate) = match lift_to_3d(&m, &crop, &dsm) {
                    Ok((corrs, _)) => {
                        let o = evaluate_candidate(&corrs, &cam, c.similarity, &kcfg);
                        (o.score, o.gate.map(|e| e.to_string()))
                    }
                    Err(e) => (
                        scc_loc_core::cdraps::CandidateScore::gated(c.similarity),
                        Some(e.to_string()),
                    ),
                };
                scores.push(score);
                gates.push(gate);
            }
            base_reliability(&mut scores, &ocfg);
            geo_consensus(&mut scores, &ocfg);
            let sel = select_position(&scores);
            let finite = |v: f64| v.is_finite().then_some(v);
            print_json(&LocalizeOutput {
                selected: sel.as_ref().ok().map(|s| [s.x, s.y]),
                selected_index: sel.as_ref().ok().map(|s| s.index),
                failure: sel.as_ref().err().map(|e| e.to_string()),
                candidates: scores
                    .iter()
                    .zip(&gates)
                    .map(|(s, g)| {
                        serde_json::json!({
                            "a_ret": s.a_ret, "n_in": s.n_in, "e_err": finite(s.e_err), "u_unc": finite(s.u_unc),
                            "r_base": s.r_base, "c_geo": s.c_geo, "r_total": s.r_total, "valid": s.valid,
                            "location": s.valid.then_some([s.location.x, s.location.y, s.location.z]),
                            "gate": g,
                        })
                    })
                    .collect(),
            });
        }
        Cmd::Run {
            dataset,
            out,
            penalize_failures,
            emit_csv,
            no_cache,
        } => {
            cfg.run.penalize_failures |= penalize_failures;
            let root = dataset
                .or_else(|| cfg.paths.dataset.clone())
                .ok_or("no dataset given (--dataset or [paths])")?;
            let ds = Dataset::open(&root)?;
            let ctx = pipeline::Context::load(cfg.clone(), ds, !no_cache)?;
            let (mut records, wall_times) = pipeline::run_queries(&ctx);
            let summary = if ctx.dataset.path(dataset::TRUTH).exists() {
                let truth = ctx.dataset.truth()?;
                Some(pipeline::evaluate_records(
                    &mut records,
                    &truth,
                    &ctx.tiles,
                    &ctx.extent,
                    &cfg,
                )?)
            } else {
                None
            };
            let rep = pipeline::EvalReport {
                summary,
                records,
                wall_times,
            };
            report::write_all(&out, &rep, &cfg, emit_csv)?;
            match &rep.summary {
                Some(s) => out!("{}", report::summary_table(s).trim_end()),
                None => out!(
                    "{} queries localized; no truth to evaluate",
                    rep.records.len()
                ),
            }
        }
        Cmd::Synth { scenario, out } => {
            let sc = synth::Scenario::load(&scenario)?;
            let m = synth::synth_scenario(&sc, &out)?;
            out!(
                "{}: {} queries, {} tiles -> {}",
                sc.name,
                m.queries.len(),
                m.tiles.len(),
                out.display()
            );
        }
        Cmd::Eval {
            report: path,
            dataset,
            penalize_failures,
        } => {
            cfg.run.penalize_failures |= penalize_failures;
            let text = std::fs::read_to_string(&path)?;
            let mut records = report::records_from_jsonl(&text)?;
            let ds = Dataset::open(&dataset)?;
            let tiles: Vec<_> = ds
                .manifest
                .tiles
                .iter()
                .map(|t| t.geometry.tile())
                .collect::<Result<_, _>>()?;
            let extent = ds.manifest.extent.tile()?;
            let s = pipeline::evaluate_records(&mut records, &ds.truth()?, &tiles, &extent, &cfg)?;
            out!("{}", report::summary_table(&s).trim_end());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
