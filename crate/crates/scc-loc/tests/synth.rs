mod common;

use nalgebra::Vector3;
use scc_loc::dataset::Dataset;
use scc_loc::formats;
use scc_loc::synth::{synth_scenario, SynthError};
use scc_loc_core::geo::{pose_from_attitude, project, Attitude, GeoPoint};

/// Residuals of label-1 matches against their noiseless projections.
fn true_match_residuals(ds: &Dataset, terrain: &scc_loc::world::Terrain) -> Vec<f64> {
    let cam = ds.manifest.camera.model().unwrap();
    let mut out = Vec::new();
    for (q, t) in ds.manifest.queries.iter().zip(ds.truth().unwrap()) {
        let att = Attitude {
            yaw: t.yaw_deg.to_radians(),
            pitch: t.pitch_deg.to_radians(),
            roll: t.roll_deg.to_radians(),
        };
        let pose = pose_from_attitude(&att, &Vector3::new(t.x, t.y, t.z));
        for ml in &t.match_labels {
            let tile = ds.manifest.tiles[ml.tile].geometry.tile().unwrap();
            let raw = formats::read_matches(&ds.match_path(q, ml.tile)).unwrap();
            assert_eq!(raw.len(), ml.labels.len());
            for (m, l) in raw.iter().zip(ml.labels.bytes()) {
                assert_ne!(l, b'0', "no outliers were requested");
                if l != b'1' {
                    continue;
                }
                let (x, y) = tile.pixel_to_world(m.pdb.x, m.pdb.y);
                let px = project(&pose, &cam, &GeoPoint::new(x, y, terrain.height(x, y))).unwrap();
                out.push((px - m.pq).norm());
            }
        }
    }
    out
}

#[test]
fn zero_outliers_noiseless_matches_are_exact() {
    let sc = common::small(3, "[matching]\noutlier_fraction = 0.0\nnoise_px = 0.0");
    let (_dir, ds) = common::synth(&sc);
    let r = true_match_residuals(&ds, &sc.terrain());
    assert!(!r.is_empty());
    // match files store f32 pixels
    assert!(
        r.iter().all(|&e| e < 1e-4),
        "max residual {}",
        r.iter().cloned().fold(0.0, f64::max)
    );
}

#[test]
fn zero_outliers_matches_lie_near_their_projection() {
    let sigma = 0.5;
    let sc = common::small(4, "[matching]\noutlier_fraction = 0.0\nnoise_px = 0.5");
    let (_dir, ds) = common::synth(&sc);
    let r = true_match_residuals(&ds, &sc.terrain());
    // 2D Gaussian radius: P(r > 3 sigma) = exp(-4.5), about 1.1 %
    let beyond = r.iter().filter(|&&e| e > 3.0 * sigma).count() as f64 / r.len() as f64;
    assert!(beyond < 0.02, "{beyond}");
    assert!(r.iter().all(|&e| e < 6.0 * sigma));
    // per-axis noise variance recovered
    let var = r.iter().map(|e| e * e).sum::<f64>() / (2.0 * r.len() as f64);
    assert!((var.sqrt() - sigma).abs() < 0.03, "{}", var.sqrt());
}

#[test]
fn outlier_share_follows_the_spec() {
    let sc = common::small(4, "");
    let (_dir, ds) = common::synth(&sc);
    for t in ds.truth().unwrap() {
        let ml = t
            .match_labels
            .iter()
            .find(|m| m.tile == t.true_tile)
            .unwrap();
        let tile = ds.manifest.tiles[t.true_tile].geometry.tile().unwrap();
        let q = ds.manifest.queries.iter().find(|q| q.id == t.id).unwrap();
        let raw = formats::read_matches(&ds.match_path(q, t.true_tile)).unwrap();
        let (w, h) = (tile.width / tile.gsd, tile.height / tile.gsd);
        let mut inside = [0usize; 2];
        for (m, l) in raw.iter().zip(ml.labels.bytes()) {
            if (0.0..w).contains(&m.pdb.x) && (0.0..h).contains(&m.pdb.y) {
                inside[usize::from(l == b'0')] += 1;
            }
        }
        let frac = inside[1] as f64 / (inside[0] + inside[1]) as f64;
        assert!((frac - 0.4).abs() < 0.01, "{frac}");
    }
}

#[test]
fn pitch_telemetry_noise_is_bounded_and_spread() {
    let sc = common::small(60, "[telemetry]\npitch_deg = 20.0");
    let (_dir, ds) = common::synth(&sc);
    let dev: Vec<f64> = ds
        .truth()
        .unwrap()
        .iter()
        .map(|t| ds.telemetry[&t.id].pitch_deg - t.pitch_deg)
        .collect();
    assert!(dev.iter().all(|d| d.abs() <= 20.0));
    assert!(dev.iter().any(|&d| d > 12.0) && dev.iter().any(|&d| d < -12.0));
    let mean_abs = dev.iter().map(|d| d.abs()).sum::<f64>() / dev.len() as f64;
    assert!((mean_abs - 10.0).abs() < 2.5, "{mean_abs}");
}

#[test]
fn telemetry_noise_leaves_everything_else_unchanged() {
    let (a_dir, a) = common::synth(&common::small(3, ""));
    let (b_dir, b) = common::synth(&common::small(3, "[telemetry]\nyaw_deg = 20.0"));
    assert_eq!(a.truth().unwrap(), b.truth().unwrap());
    for q in &a.manifest.queries {
        assert_eq!(
            std::fs::read(a_dir.path().join(&q.features)).unwrap(),
            std::fs::read(b_dir.path().join(&q.features)).unwrap()
        );
        assert_ne!(a.telemetry[&q.id].yaw_deg, b.telemetry[&q.id].yaw_deg);
    }
}

#[test]
fn decoys_must_clear_the_consensus_radius() {
    let dir = tempfile::tempdir().unwrap();
    let sc = common::small(2, "[decoys]\ncount = 1\ndisplacement = 20.0");
    assert!(matches!(
        synth_scenario(&sc, dir.path()),
        Err(SynthError::SpecInfeasible(_))
    ));
    let sc = common::small(2, "[decoys]\ncount = 1\ndisplacement = 20.5");
    assert!(synth_scenario(&sc, dir.path()).is_ok());
    let sc = common::small(2, "[matching]\noutlier_fraction = 1.0");
    assert!(matches!(
        synth_scenario(&sc, dir.path()),
        Err(SynthError::SpecInfeasible(_))
    ));
}

#[test]
fn decoy_matches_are_displaced_and_labeled() {
    let sc = common::small(6, "[decoys]\ncount = 1\ninflation = 2.0");
    let (_dir, ds) = common::synth(&sc);
    let mut seen = 0;
    for t in ds.truth().unwrap() {
        for &d in &t.decoy_tiles {
            let g = ds.manifest.tiles[d].geometry.tile().unwrap();
            assert!((g.center_x - t.x).hypot(g.center_y - t.y) >= 50.0);
            let ml = t.match_labels.iter().find(|m| m.tile == d).unwrap();
            assert!(ml.labels.bytes().all(|l| l != b'1'));
            assert!(ml.labels.bytes().any(|l| l == b'2'));
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn synthesis_is_reproducible() {
    let sc = common::small(3, "[decoys]\ncount = 1");
    let (a, _) = common::synth(&sc);
    let (b, _) = common::synth(&sc);
    let files = |root: &std::path::Path| {
        let mut v: Vec<_> = walk(root)
            .into_iter()
            .map(|p| p.strip_prefix(root).unwrap().to_path_buf())
            .collect();
        v.sort();
        v
    };
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa, fb);
    for f in &fa {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn shipped_scenarios_parse_and_validate() {
    for name in ["e2e", "decoy", "smoke"] {
        let sc = common::shipped(name);
        sc.validate(20.0).unwrap();
    }
}
