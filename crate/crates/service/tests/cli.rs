use std::process::{Command, Output};

use serde_json::Value;

fn geoqa(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_geoqa"));
    cmd.args(args).env_remove("GEOQA_DATA_DIR").env_remove("GEOQA_PORT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn ask_frauenkirche() {
    let v = stdout_json(&geoqa(&["--fixtures", "ask", "Frauenkirche in Munich Old Town"], &[]));
    assert_eq!(v["kind"], "layers");
    let layers: Vec<&Value> = v["layers"].as_array().unwrap().iter().collect();
    let names: Vec<&str> = layers.iter().map(|l| l["layer_name"].as_str().unwrap()).collect();
    assert_eq!(names, ["points/attraction", "buildings/building"]);
    for l in layers {
        assert_eq!(l["features"][0]["display_name"], "Frauenkirche");
    }
}

#[test]
fn ask_unknown_prompt_fails() {
    let out = geoqa(&["--fixtures", "ask", "completely unscripted question"], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn ingest_prints_report_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("demo.geojson");
    std::fs::write(
        &file,
        r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"osm_id":"1","fclass":"bench","name":"A"},"geometry":{"type":"Point","coordinates":[11.5,48.1]}},
            {"type":"Feature","properties":{"osm_id":"2","fclass":"bench","name":"B"},"geometry":{"type":"Point","coordinates":[11.6,48.2]}},
            {"type":"Feature","properties":{"osm_id":"3"},"geometry":null}]}"#,
    )
    .unwrap();
    let data = dir.path().join("store");
    let data = data.to_str().unwrap();
    let v = stdout_json(&geoqa(&["ingest", "demo", file.to_str().unwrap()], &[("GEOQA_DATA_DIR", data)]));
    assert_eq!((v["features"].as_u64(), v["stored"].as_u64()), (Some(3), Some(2)));
    assert_eq!(v["skipped"].as_array().unwrap().len(), 1);
    assert!(dir.path().join("store/geometries.json").exists());
    // A second run loads the snapshot and upserts the same rows.
    let again = stdout_json(&geoqa(&["ingest", "demo", file.to_str().unwrap()], &[("GEOQA_DATA_DIR", data)]));
    assert_eq!(again["stored"], 2);

    let bad = dir.path().join("bad.geojson");
    std::fs::write(&bad, "[1, 2]").unwrap();
    assert!(!geoqa(&["ingest", "demo", bad.to_str().unwrap()], &[]).status.success());
}

#[test]
fn serve_on_occupied_port_exits_nonzero() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let out = geoqa(&["--fixtures", "serve", "--port", &port], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("binding"));
}

#[test]
fn eval_on_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("eval.json");
    std::fs::write(&cfg, r#"{"seed": 3, "cases_per_tier": 3, "tiers": [1, 2], "keyword_queries": 20}"#).unwrap();
    let v = stdout_json(&geoqa(&["--fixtures", "eval", cfg.to_str().unwrap()], &[]));
    let tiers = v["tasks"]["tiers"].as_array().unwrap();
    assert_eq!(tiers.len(), 2);
    assert_eq!(v["keyword"]["outcomes"].as_array().unwrap().len(), 20);
    for t in tiers {
        assert_eq!(t["cases"], 3);
    }
}

#[test]
fn config_file_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("geoqa.toml");
    std::fs::write(&cfg, "mode = \"sometimes\"\n").unwrap();
    let out = geoqa(&["--config", cfg.to_str().unwrap(), "--fixtures", "ask", "x"], &[]);
    assert!(!out.status.success());
}
