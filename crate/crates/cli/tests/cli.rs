use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvseg_core::Config;

fn mvseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvseg")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mvseg(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn scene(dir: &Path, preset: &str, seed: u64) -> PathBuf {
    let out = dir.join(format!("{preset}-{seed}"));
    ok(&["synth", "--preset", preset, "--seed", &seed.to_string(), "--cameras", "4", "--out", p(&out)]);
    out
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const KEYED: [&str; 8] = ["superpoints", "coarse-maps", "graph", "segment", "match", "refine", "run", "ablate"];

#[test]
fn help_lists_every_config_key_with_its_default() {
    let defaults = serde_json::to_value(Config::default()).unwrap();
    let keys = defaults.as_object().unwrap();
    for cmd in KEYED {
        let help = String::from_utf8(ok(&[cmd, "--help"]).stdout).unwrap();
        for (key, value) in keys {
            let line = help
                .lines()
                .find(|l| l.trim_start().starts_with(&format!("--{key} ")))
                .unwrap_or_else(|| panic!("`{cmd} --help` lacks --{key}"));
            let shown = line.split("[default: ").nth(1).and_then(|r| r.split(']').next()).unwrap();
            let shown: serde_json::Value = serde_json::from_str(shown).unwrap();
            assert_eq!(&shown, value, "{cmd} --{key}");
        }
    }
}

#[test]
fn usage_errors_exit_1() {
    let out = mvseg(&["evaluate", "--pred", "p.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage:"));
    assert_eq!(mvseg(&["run", "--scene", "x", "--out", "y", "--bogus", "1"]).status.code(), Some(1));
    assert_eq!(mvseg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mvseg(&["synth", "--out", "y"]).status.code(), Some(1));
    assert_eq!(mvseg(&["--help"]).status.code(), Some(0));
}

#[test]
fn evaluate_matching_files() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("p.txt");
    let gt = dir.path().join("g.txt");
    std::fs::write(&pred, "5\n5\n7\n7\n-1\n").unwrap();
    std::fs::write(&gt, "0\n0\n1\n1\n-1\n").unwrap();
    let out = ok(&["evaluate", "--pred", p(&pred), "--gt", p(&gt)]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["mAP"], 1.0);
    assert_eq!(report["num_ground_truth"], 2);

    std::fs::write(&pred, "1\n2\n").unwrap();
    let out = mvseg(&["evaluate", "--pred", p(&pred), "--gt", p(&gt)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_mask_json_names_file_and_byte() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(dir.path(), "perfect", 0);
    let bad = s.join("masks/000001.json");
    std::fs::write(&bad, b"{\"frame_id\": 1, \"masks\": [{\"index\": 0,, }]}").unwrap();
    let out = mvseg(&["run", "--scene", p(&s), "--out", p(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("000001.json") && err.contains("at byte 38"), "{err}");
}

#[test]
fn invalid_config_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(dir.path(), "perfect", 0);
    let out = mvseg(&["run", "--scene", p(&s), "--out", p(&dir.path().join("r")), "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config.alpha"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(dir.path(), "perfect", 1);
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"alpha": 0.04, "tau_merge": 0.8}"#).unwrap();
    let r = dir.path().join("r");
    ok(&["run", "--scene", p(&s), "--out", p(&r), "--config", p(&cfg), "--tau_merge", "0.6", "--k-graph", "10"]);
    let used: Config = serde_json::from_slice(&read(&r.join("config.json"))).unwrap();
    assert_eq!((used.alpha, used.tau_merge, used.k_graph), (0.04, 0.6, 10));
    assert_eq!(used.tau_f, Config::default().tau_f);
}

#[test]
fn run_then_evaluate_equals_run_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(dir.path(), "corrupted", 2);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let with = ok(&["run", "--scene", p(&s), "--out", p(&a), "--evaluate"]);
    ok(&["run", "--scene", p(&s), "--out", p(&b)]);
    let after = ok(&["evaluate", "--pred", p(&b.join("labels.txt")), "--gt", p(&s.join("gt.txt"))]);
    assert_eq!(with.stdout, after.stdout);
    assert!(!with.stdout.is_empty());
}

#[test]
fn stages_reproduce_run() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(dir.path(), "corrupted", 5);
    let d = dir.path();
    ok(&["run", "--scene", p(&s), "--out", p(&d.join("run"))]);
    ok(&["superpoints", "--scene", p(&s), "--out", p(&d.join("sp.txt"))]);
    ok(&["segment", "--scene", p(&s), "--superpoints", p(&d.join("sp.txt")), "--out", p(&d.join("seg"))]);
    ok(&["match", "--scene", p(&s), "--segments", p(&d.join("seg")), "--out", p(&d.join("match"))]);
    ok(&[
        "refine",
        "--scene",
        p(&s),
        "--segments",
        p(&d.join("seg")),
        "--refined-maps",
        p(&d.join("match/maps")),
        "--out",
        p(&d.join("ref")),
    ]);
    assert_eq!(read(&d.join("seg/labels.txt")), read(&d.join("run/coarse_labels.txt")));
    assert_eq!(read(&d.join("ref/labels.txt")), read(&d.join("run/labels.txt")));
    assert_eq!(read(&d.join("ref/labels.ply")), read(&d.join("run/labels.ply")));
    assert_eq!(read(&d.join("seg/superpoints.txt")), read(&d.join("sp.txt")));

    let report: serde_json::Value = serde_json::from_slice(&read(&d.join("match/report.json"))).unwrap();
    assert!(!report["masks"].as_array().unwrap().is_empty());
    ok(&["run", "--scene", p(&s), "--superpoints", p(&d.join("sp.txt")), "--out", p(&d.join("run2"))]);
    assert_eq!(read(&d.join("run2/labels.txt")), read(&d.join("run/labels.txt")));
}

#[test]
fn coarse_maps_and_graph_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(dir.path(), "perfect", 3);
    let maps = dir.path().join("maps");
    ok(&["coarse-maps", "--scene", p(&s), "--out", p(&maps)]);
    let pngs = std::fs::read_dir(&maps).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "png").count();
    assert_eq!(pngs, std::fs::read_dir(s.join("pose")).unwrap().count());

    let from_stdout = ok(&["graph", "--scene", p(&s)]).stdout;
    let file = dir.path().join("g.jsonl");
    ok(&["graph", "--scene", p(&s), "--maps", p(&maps), "--out", p(&file)]);
    assert_eq!(read(&file), from_stdout);
    let text = String::from_utf8(from_stdout).unwrap();
    assert!(text.lines().count() > 0);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let a = v["affinity"].as_f64().unwrap();
        assert!(v["i"].as_u64().unwrap() < v["j"].as_u64().unwrap() && (0.0..=1.0).contains(&a));
    }
}

#[test]
fn outputs_are_cached_by_content() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(dir.path(), "perfect", 4);
    let r = dir.path().join("r");
    let first = ok(&["run", "--scene", p(&s), "--out", p(&r)]);
    assert!(!String::from_utf8_lossy(&first.stderr).contains("up to date"));
    let again = ok(&["run", "--scene", p(&s), "--out", p(&r)]);
    assert!(String::from_utf8_lossy(&again.stderr).contains("up to date"));
    let forced = ok(&["run", "--scene", p(&s), "--out", p(&r), "--force"]);
    assert!(!String::from_utf8_lossy(&forced.stderr).contains("up to date"));
    let other = ok(&["run", "--scene", p(&s), "--out", p(&r), "--tau_merge", "0.6"]);
    assert!(!String::from_utf8_lossy(&other.stderr).contains("up to date"));
    std::fs::write(r.join("labels.txt"), "0\n").unwrap();
    let damaged = ok(&["run", "--scene", p(&s), "--out", p(&r), "--tau_merge", "0.6"]);
    assert!(!String::from_utf8_lossy(&damaged.stderr).contains("up to date"));
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["synth", "--preset", "corrupted", "--seed", "7", "--out", p(out)]);
    }
    let files = mvseg_core::io::bundle::list_files(&a).unwrap();
    assert_eq!(files, mvseg_core::io::bundle::list_files(&b).unwrap());
    assert!(files.iter().any(|f| f.as_os_str() == "gt.txt"));
    for f in files {
        assert_eq!(read(&a.join(&f)), read(&b.join(&f)), "{}", f.display());
    }
}

#[test]
fn synth_from_spec_file_and_ablate() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let mut s = mvseg_core::synthetic::suites::perfect_scene(2);
    s.cameras.count = 4;
    std::fs::write(&spec, serde_json::to_vec(&s).unwrap()).unwrap();
    let out = dir.path().join("scene");
    ok(&["synth", "--spec", p(&spec), "--out", p(&out)]);
    let ab = dir.path().join("ab");
    let table = String::from_utf8(ok(&["ablate", "--scene", p(&out), "--out", p(&ab)]).stdout).unwrap();
    assert_eq!(table.lines().count(), 5, "{table}");
    assert!(table.lines().nth(4).unwrap().starts_with("+depth weights"));
    let rows: serde_json::Value = serde_json::from_slice(&read(&ab.join("ablation.json"))).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 4);
    assert_eq!(rows[3]["mAP"], 1.0);
    assert_eq!(rows[0]["use_matching"], false);

    std::fs::write(&spec, b"{\"primitives\": [").unwrap();
    let bad = mvseg(&["synth", "--spec", p(&spec), "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn camera_to_world_poses_are_converted() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene(dir.path(), "perfect", 0);
    let base = ok(&["run", "--scene", p(&s), "--out", p(&dir.path().join("a"))]);
    assert!(base.status.success());
    // rewrite every pose as its camera-to-world inverse
    for entry in std::fs::read_dir(s.join("pose")).unwrap() {
        let path = entry.unwrap().path();
        let text = String::from_utf8(read(&path)).unwrap();
        let pose = mvseg_core::io::text::parse_pose::<f64>(&text, &path, Default::default()).unwrap();
        let (r, c) = (pose.rotation(), pose.center());
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = r[j][i];
            }
            m[i][3] = c[i];
        }
        m[3][3] = 1.0;
        let inv = mvseg_core::scene::CameraPose { world_to_camera: m };
        std::fs::write(&path, mvseg_core::io::text::format_pose(&inv)).unwrap();
    }
    let b = dir.path().join("b");
    ok(&["run", "--scene", p(&s), "--out", p(&b), "--camera-to-world", "--evaluate"]);
    let out = ok(&["evaluate", "--pred", p(&b.join("labels.txt")), "--gt", p(&s.join("gt.txt"))]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["mAP"], 1.0);
}
