#![allow(dead_code)]

use std::path::{Path, PathBuf};

use scc_loc::dataset::Dataset;
use scc_loc::synth::{synth_scenario, Scenario};

pub fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn shipped(name: &str) -> Scenario {
    Scenario::load(&scenario_dir().join(format!("{name}.toml"))).unwrap()
}

/// A small flat-ramp scenario; `extra` is appended verbatim.
pub fn small(queries: usize, extra: &str) -> Scenario {
    Scenario::from_toml(&format!(
        r#"
name = "small"
seed = 99
queries = {queries}

[terrain]
kind = "flat_ramp"
elevation = 20.0
hinge_x = 60.0
slope = 0.15
{extra}
"#
    ))
    .unwrap()
}

pub fn synth(sc: &Scenario) -> (tempfile::TempDir, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    synth_scenario(sc, dir.path()).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    (dir, ds)
}
