use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use seafloor::cluster::{feature_matrix, train_clusterer, FeatureExtractor, KMeansConfig, TextureBank};
use seafloor::insert::{insert_random_contacts, InsertConfig, ObjectModel, ObjectSpec};
use seafloor::raster;
use seafloor::sim::load_mission_set;
use seafloor::snippet::{extract_snippets, SnippetMode, SnippetSpec};
use serde_json::Value;

fn seafloor(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seafloor")).current_dir(dir).args(args).env_remove("SEAFLOOR_JOBS").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = seafloor(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1, "summary must be one line: {text}");
    serde_json::from_str(&text).unwrap()
}

fn fails(dir: &Path, args: &[&str], code: i32) -> Value {
    let out = seafloor(dir, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8(out.stderr).unwrap();
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

fn simulate(dir: &Path, pings: &str) {
    ok(dir, &["simulate", "--seed", "1", "--pings", pings, "--out", "m"]);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = seafloor(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("Usage:"));
    let err: Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(err["error"], "usage");
}

#[test]
fn help_lists_every_subcommand_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    let top = String::from_utf8(seafloor(dir.path(), &["--help"]).stdout).unwrap();
    let subcommands = [
        "simulate",
        "insert",
        "atr-run",
        "perfmap",
        "cluster-train",
        "cluster-reps",
        "classify",
        "merge",
        "evaluate",
        "repair-plan",
        "label-export",
    ];
    for s in subcommands {
        assert!(top.contains(s), "{s} missing from --help");
        let out = seafloor(dir.path(), &[s, "--help"]);
        assert!(out.status.success());
        let help = String::from_utf8(out.stdout).unwrap();
        for flag in ["--seed", "--jobs", "--config"] {
            assert!(help.contains(flag), "{s} --help lacks {flag}");
        }
    }
    assert!(top.contains("SEAFLOOR_JOBS"));
}

#[test]
fn bad_arguments_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fails(d, &["insert", "--image", "a.pgm"], 2);
    fails(d, &["simulate", "--out", "m", "--jobs", "0"], 2);
    fails(d, &["repair-plan", "--pd", "x.json", "--out", "p.json", "--start", "1"], 2);
    let err = fails(d, &["atr-run", "--image", "nope.pgm", "--out", "c.json"], 3);
    assert_eq!(err["error"], "io");
    assert_eq!(err["command"], "atr-run");
    fs::write(d.join("cfg.toml"), "[nonsense]\n").unwrap();
    fails(d, &["--config", "cfg.toml", "simulate", "--out", "m"], 2);
    assert!(!d.join("m").exists());
}

#[test]
fn domain_errors_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("pd.json"), r#"{"origin":[0,0],"cell_size":5,"width":2,"height":1,"values":[0.2,0.9]}"#).unwrap();
    let err = fails(d, &["repair-plan", "--pd", "pd.json", "--out", "p.json", "--cell-size", "1"], 4);
    assert_eq!(err["error"], "domain");
    fs::write(d.join("pd.json"), r#"{"origin":[0,0],"cell_size":5,"width":3,"height":1,"values":[0.2]}"#).unwrap();
    fails(d, &["repair-plan", "--pd", "pd.json", "--out", "p.json"], 4);
}

#[test]
fn simulate_twice_gives_identical_manifests() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), "150");
    simulate(b.path(), "150");
    let ma = fs::read(a.path().join("m/manifest.json")).unwrap();
    assert_eq!(ma, fs::read(b.path().join("m/manifest.json")).unwrap());
    let text = String::from_utf8(ma).unwrap();
    assert!(!text.contains(&a.path().display().to_string()), "manifest must hold relative names");
}

#[test]
fn perfmap_report_ranges_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "300");
    let s = ok(
        d,
        &["perfmap", "--seed", "3", "--image", "m/flat_sand.pgm", "--truth", "m/flat_sand.truth.pgm", "--passes", "3", "--out", "pf"],
    );
    let pd = s["mean_pd"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pd));
    assert!(s["fad"].as_f64().unwrap() >= 0.0);
    let report: Value = raster::read_json(&d.join("pf/report.json")).unwrap();
    assert_eq!(report["N"], 3);
    let classes = report["per_class_pd"].as_object().unwrap();
    assert_eq!(classes.keys().collect::<Vec<_>>(), ["flat_sand"]);
    for f in ["pd.json", "pd.pgm", "pd.pgm.meta.json", "trials.json"] {
        assert!(d.join("pf").join(f).is_file(), "{f}");
    }
    let plan = ok(d, &["repair-plan", "--pd", "pf/pd.json", "--image", "m/flat_sand.pgm", "--threshold", "1", "--out", "plan.json", "--overlay", "ov.pgm"]);
    assert!(plan["legs"].as_u64().unwrap() > 0);
    let saved: Value = raster::read_json(&d.join("plan.json")).unwrap();
    assert_eq!(saved["source_map"], "pd.json");
    assert!(d.join("ov.pgm.meta.json").is_file());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "200");
    fs::write(d.join("run.toml"), "seed = 11\n[montecarlo]\npasses = 2\ncontacts_per_pass = 4\n").unwrap();
    let from_config = ok(d, &["--config", "run.toml", "perfmap", "--stub", "0.5", "--image", "m/mud.pgm", "--out", "a"]);
    assert_eq!(from_config["seed"], 11);
    assert_eq!(from_config["trials"], 8);
    let flagged = ok(d, &["--config", "run.toml", "--seed", "12", "perfmap", "--passes", "3", "--stub", "0.5", "--image", "m/mud.pgm", "--out", "b"]);
    assert_eq!(flagged["seed"], 12);
    assert_eq!(flagged["trials"], 12);
}

#[test]
fn jobs_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_seafloor"))
        .current_dir(dir.path())
        .args(["simulate", "--pings", "50", "--out", "m"])
        .env("SEAFLOOR_JOBS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_seafloor"))
        .current_dir(dir.path())
        .args(["simulate", "--pings", "50", "--out", "m"])
        .env("SEAFLOOR_JOBS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
}

/// File-based stages reproduce the in-process computation on the same inputs.
#[test]
fn stages_resume_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "200");
    let (_, missions) = load_mission_set(&d.join("m")).unwrap();

    ok(d, &["insert", "--seed", "4", "--image", "m/mud.pgm", "--count", "5", "--out", "aug.pgm", "--records", "rec.json"]);
    let model = ObjectModel::from_spec(&ObjectSpec::cylinder(), 0.02).unwrap();
    let mud = &missions.iter().find(|m| m.image.id == "mud").unwrap().image;
    let (augmented, records) = insert_random_contacts(mud, &[model], 5, None, 4, &InsertConfig::default()).unwrap();
    assert_eq!(fs::read_to_string(d.join("rec.json")).unwrap(), serde_json::to_string_pretty(&records).unwrap() + "\n");
    let reread: seafloor::Image = raster::read_image(&d.join("aug.pgm")).unwrap();
    let q = raster::quantize(augmented.intensities());
    assert_eq!(raster::quantize(reread.intensities()), q);

    ok(d, &["cluster-train", "--seed", "6", "--clusters", "6", "--missions", "m", "--out", "model.json"]);
    let spec = SnippetSpec::default();
    let bank = TextureBank::default();
    let snippets: Vec<_> = missions.iter().flat_map(|m| extract_snippets(&m.image, &spec, SnippetMode::Grid).unwrap()).collect();
    let features = feature_matrix(&snippets, &bank).unwrap();
    let cfg = KMeansConfig { clusters: 6, seed: 6, ..Default::default() };
    let expected = train_clusterer(features.view(), FeatureExtractor::<f64>::info(&bank), &cfg).unwrap();
    assert_eq!(fs::read_to_string(d.join("model.json")).unwrap(), serde_json::to_string_pretty(&expected).unwrap() + "\n");
}

#[test]
fn operator_loop_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "200");
    ok(d, &["cluster-train", "--seed", "2", "--clusters", "6", "--missions", "m", "--out", "model.json"]);
    let bundle = ok(d, &["label-export", "--model", "model.json", "--missions", "m", "--out", "bundle", "-k", "2"]);
    assert_eq!(bundle["P"], 6);
    let manifest = seafloor::cluster::read_bundle(&d.join("bundle")).unwrap();
    assert_eq!(manifest.clusters.len(), 6);
    for c in &manifest.clusters {
        for s in &c.snippets {
            assert!(d.join("bundle").join(&s.file).is_file());
        }
    }
    ok(d, &["cluster-reps", "--model", "model.json", "--image", "m/clutter.pgm", "--out", "reps.json"]);

    let mapping = r#"{"P":6,"C":2,"map":[0,1,0,1,0,1],"classes":[{"name":"benign","complexity_rank":0},{"name":"complex","complexity_rank":1}]}"#;
    fs::write(d.join("mapping.json"), mapping).unwrap();
    let a = ok(d, &["classify", "--model", "model.json", "--mapping", "mapping.json", "--image", "m/mud.pgm", "--out", "a.json", "--pgm", "a.pgm"]);
    assert!(a["cells"].as_u64().unwrap() > 0);
    ok(d, &["classify", "--model", "model.json", "--mapping", "mapping.json", "--image", "m/rock_outcrop.pgm", "--grid", "a.json", "--pass-id", "1", "--out", "b.json"]);
    let votes = ok(d, &["merge", "--mapping", "mapping.json", "--map", "a.json", "--map", "b.json", "--out", "v.json"]);
    let worst = ok(d, &["merge", "--mapping", "mapping.json", "--map", "a.json", "--map", "b.json", "--policy", "max-complexity", "--out", "w.json"]);
    assert!(worst["class_cells"]["complex"].as_u64() >= votes["class_cells"]["complex"].as_u64());
    let eval = ok(d, &["evaluate", "--model", "model.json", "--missions", "m"]);
    assert!((0.0..=1.0).contains(&eval["precision"].as_f64().unwrap()));

    fs::write(d.join("bad.json"), r#"{"P":6,"C":2,"map":[0,0,0,0,0,0],"classes":[{"name":"a","complexity_rank":0},{"name":"b","complexity_rank":1}]}"#).unwrap();
    let err = fails(d, &["classify", "--model", "model.json", "--mapping", "bad.json", "--image", "m/mud.pgm", "--out", "x.json"], 4);
    assert!(err["message"].as_str().unwrap().contains("class 1"));
}
