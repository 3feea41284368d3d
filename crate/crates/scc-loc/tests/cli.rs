use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scc-loc"))
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_scenario(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("s.toml");
    std::fs::write(
        &p,
        "name = \"cli\"\nseed = 3\nqueries = 3\n[terrain]\nkind = \"flat\"\nelevation = 5.0\n",
    )
    .unwrap();
    p
}

#[test]
fn synth_run_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    ok(bin()
        .args(["synth", "--scenario"])
        .arg(write_scenario(tmp.path()))
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap());
    let table = ok(bin()
        .arg("run")
        .arg("--dataset")
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .arg("--emit-csv")
        .output()
        .unwrap());
    assert!(table.contains("Acc@5"));
    for f in [
        "report.jsonl",
        "report.txt",
        "report.csv",
        "manifest.json",
        "timings.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["stages"]["cdraps"].is_string());

    let again = ok(bin()
        .arg("eval")
        .arg("--report")
        .arg(out.join("report.jsonl"))
        .arg("--dataset")
        .arg(&data)
        .output()
        .unwrap());
    assert_eq!(again, table);
}

#[test]
fn env_seed_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(bin()
        .args(["synth", "--scenario"])
        .arg(write_scenario(tmp.path()))
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap());
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "[run]\nseed = 11\n").unwrap();
    let out = tmp.path().join("out");
    ok(bin()
        .env("SCC_LOC_SEED", "23")
        .arg("--config")
        .arg(&cfg)
        .arg("run")
        .arg("--dataset")
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 23);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[optim]\nlambda_rol = 3.0\n").unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["run", "--dataset", "x", "--out", "y"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_rol"));
}

#[test]
fn stage_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(bin()
        .args(["synth", "--scenario"])
        .arg(write_scenario(tmp.path()))
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(data.join("dataset.json")).unwrap()).unwrap();

    let tiles = ok(bin()
        .arg("tile")
        .arg("--dataset")
        .arg(&data)
        .output()
        .unwrap());
    assert_eq!(
        tiles.lines().count(),
        manifest["tiles"].as_array().unwrap().len()
    );

    let q = data.join("queries/q0000.sccf");
    let ranked = ok(bin()
        .arg("retrieve")
        .arg("--query")
        .arg(&q)
        .arg("--features")
        .arg(data.join("tiles"))
        .args(["--top-n", "3"])
        .output()
        .unwrap());
    let lines: Vec<serde_json::Value> = ranked
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0]["similarity"].as_f64() >= lines[1]["similarity"].as_f64());
    let best = lines[0]["index"].as_u64().unwrap() as usize;

    let geom = tmp.path().join("g.json");
    std::fs::write(&geom, manifest["tiles"][best]["geometry"].to_string()).unwrap();
    let aligned = ok(bin()
        .arg("align")
        .arg("--query")
        .arg(&q)
        .arg("--tile")
        .arg(data.join(format!("tiles/t{best:04}.sccf")))
        .arg("--geom")
        .arg(&geom)
        .output()
        .unwrap());
    let aligned: serde_json::Value = serde_json::from_str(&aligned).unwrap();
    assert!(aligned["geometry"]["width"].as_f64().unwrap() > 0.0);

    let m = data.join(format!("matches/q0000/t{best:04}.sccm"));
    let stages = tmp.path().join("stages");
    let counts = ok(bin()
        .arg("filter")
        .arg("--matches")
        .arg(&m)
        .arg("--query-img")
        .arg(data.join("queries/q0000.pgm"))
        .arg("--db-img")
        .arg(data.join("map.pgm"))
        .arg("--dump-stages")
        .arg(&stages)
        .output()
        .unwrap());
    let counts: serde_json::Value = serde_json::from_str(&counts).unwrap();
    let order = ["raw", "equalized", "textured", "topo", "final"];
    for w in order.windows(2) {
        assert!(counts[w[0]].as_u64() >= counts[w[1]].as_u64());
        assert!(stages.join(format!("{}.sccm", w[1])).exists());
    }

    // localize the query from its raw match files in the stored-tile frame
    let cand = tmp.path().join("cand");
    std::fs::create_dir(&cand).unwrap();
    let truth: serde_json::Value =
        serde_json::from_slice(&std::fs::read(data.join("truth.json")).unwrap()).unwrap();
    let t = &truth[0];
    let mut list = Vec::new();
    for ml in t["match_labels"].as_array().unwrap().iter().take(5) {
        let k = ml["tile"].as_u64().unwrap() as usize;
        let name = format!("t{k:04}.sccm");
        std::fs::copy(data.join("matches/q0000").join(&name), cand.join(&name)).unwrap();
        list.push(serde_json::json!({ "geometry": manifest["tiles"][k]["geometry"], "similarity": 0.9, "matches": name }));
    }
    std::fs::write(
        cand.join("candidates.json"),
        serde_json::json!({ "camera": manifest["camera"], "candidates": list }).to_string(),
    )
    .unwrap();
    let tel: serde_json::Value =
        serde_json::from_slice(&std::fs::read(data.join("telemetry.json")).unwrap()).unwrap();
    std::fs::write(tmp.path().join("tel.json"), tel["q0000"].to_string()).unwrap();
    let sel = ok(bin()
        .arg("localize")
        .arg("--candidates")
        .arg(&cand)
        .arg("--dsm")
        .arg(data.join("dsm.sccd"))
        .arg("--telemetry")
        .arg(tmp.path().join("tel.json"))
        .output()
        .unwrap());
    let sel: serde_json::Value = serde_json::from_str(&sel).unwrap();
    let p = sel["selected"].as_array().unwrap();
    let err = (p[0].as_f64().unwrap() - t["x"].as_f64().unwrap())
        .hypot(p[1].as_f64().unwrap() - t["y"].as_f64().unwrap());
    assert!(err < 2.0, "{err}");
}

#[test]
fn corrupt_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.sccm");
    std::fs::write(&bad, b"SCCM").unwrap();
    let img = tmp.path().join("i.pgm");
    std::fs::write(&img, b"P5\n2 2\n255\n\x00\x01\x02\x03").unwrap();
    let out = bin()
        .arg("filter")
        .arg("--matches")
        .arg(&bad)
        .arg("--query-img")
        .arg(&img)
        .arg("--db-img")
        .arg(&img)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");
}
