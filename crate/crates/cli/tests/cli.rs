use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gelshatter"));
    c.env_remove("GELSHATTER_WORKERS");
    c
}

fn gelshatter(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gelshatter(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn sha256_hex(bytes: &[u8]) -> String {
    gelshatter::seed::digest_hex(bytes)
}

/// Every file in `dir` except the manifest, relative paths, sorted.
fn files_under(dir: &Path) -> Vec<String> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut v = Vec::new();
    walk(dir, dir, &mut v);
    v.retain(|f| f != "manifest.json");
    v.sort();
    v
}

fn assert_manifest_complete(dir: &Path) {
    let m = json(&dir.join("manifest.json"));
    let listed: Vec<String> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            let path = f["path"].as_str().unwrap().to_string();
            let bytes = fs::read(dir.join(&path)).unwrap();
            assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes), "digest of {path}");
            path
        })
        .collect();
    let mut listed = listed;
    listed.sort();
    assert_eq!(listed, files_under(dir));
}

#[test]
fn pure_coalescence_run_ends_in_a_single_gel() {
    let tmp = TempDir::new().unwrap();
    let line = ok(tmp.path(), &["run", "--M", "10", "--K", "1", "--F", "0", "--steps", "1e4", "--out", "a"]);
    assert!(line.contains("final N=1 k_max=10"), "{line}");
    assert!(line.contains("cycles=0"), "{line}");
    let summary = json(&tmp.path().join("a/summary.json"));
    assert_eq!(summary["scaling"]["n_cycles"], 0);
    assert!(summary["scaling"]["mean_tr"].is_null());
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let args = |out: &'static str| {
        vec!["run", "--M", "1e3", "--K", "0.99", "--F", "0.01", "--steps", "2e5", "--seed", "42", "--out", out]
    };
    let l1 = ok(tmp.path(), &args("x"));
    let l2 = ok(tmp.path(), &args("y"));
    assert_eq!(l1, l2);
    let files = files_under(&tmp.path().join("x"));
    assert_eq!(files, files_under(&tmp.path().join("y")));
    assert!(files.contains(&"trajectory.json".to_string()));
    for f in files {
        assert_eq!(
            fs::read(tmp.path().join("x").join(&f)).unwrap(),
            fs::read(tmp.path().join("y").join(&f)).unwrap(),
            "{f}"
        );
    }
    assert_manifest_complete(&tmp.path().join("x"));
}

#[test]
fn csv_headers_follow_the_documented_formats() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["run", "--M", "200", "--K", "0.9", "--F", "0.1", "--steps", "5e4", "--out", "r"]);
    let samples = fs::read_to_string(tmp.path().join("r/samples.csv")).unwrap();
    let events = fs::read_to_string(tmp.path().join("r/events.csv")).unwrap();
    assert!(samples.starts_with("step,N,k_max\n0,200,1\n"), "{samples}");
    assert!(events.starts_with("step,size,was_largest\n"));
    assert_eq!(samples.lines().count(), 1 + 51);
    let t = json(&tmp.path().join("r/trajectory.json"));
    assert_eq!(t["trajectory"]["config"]["mass"], 200);
    assert!(t["recurrence_convention"].as_str().unwrap().contains("first interval"));
}

#[test]
fn output_collisions_are_refused_unless_forced() {
    let tmp = TempDir::new().unwrap();
    let args = ["run", "--M", "50", "--K", "1", "--F", "0.1", "--steps", "1000", "--out", "o"];
    ok(tmp.path(), &args);
    let again = gelshatter(tmp.path(), &args);
    assert!(!again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(tmp.path(), &forced);
}

#[test]
fn invalid_configs_name_the_offending_field() {
    let tmp = TempDir::new().unwrap();
    for (args, field) in [
        (vec!["run", "--M", "1", "--K", "1", "--F", "0"], "M"),
        (vec!["run", "--M", "10", "--K", "-1", "--F", "0"], "K"),
        (vec!["run", "--M", "10", "--K", "1", "--F", "0", "--threshold", "20"], "threshold"),
        (vec!["run", "--M", "10", "--K", "1"], "F"),
    ] {
        let out = gelshatter(tmp.path(), &args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(field), "{args:?}: {err}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("run.toml"),
        "M = 300\nK = 0.9\nF = 0.1\nsteps = 1e4\nseed = 1\nsample-interval = 500\n",
    )
    .unwrap();
    ok(tmp.path(), &["run", "--config", "run.toml", "--M", "400", "--out", "o"]);
    let cfg = &json(&tmp.path().join("o/summary.json"))["config"];
    assert_eq!(cfg["mass"], 400);
    assert_eq!(cfg["k_hat"], 0.9);
    assert_eq!(cfg["sample_interval"], 500);
    fs::write(tmp.path().join("bad.toml"), "M = 300\nKhat = 1\n").unwrap();
    let out = gelshatter(tmp.path(), &["run", "--config", "bad.toml", "--out", "p"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Khat"));
}

#[test]
fn replicas_get_their_own_directories() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["run", "--M", "100", "--K", "0.99", "--F", "0.01", "--steps", "2e4", "--replicas", "3", "--out", "e"],
    );
    let s = json(&tmp.path().join("e/summary.json"));
    let reps = s["replicas"].as_array().unwrap();
    assert_eq!(reps.len(), 3);
    assert_ne!(reps[0]["seed"], reps[1]["seed"]);
    assert!(tmp.path().join("e/replica-002/trajectory.json").is_file());
    assert_manifest_complete(&tmp.path().join("e"));
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let common = ["run", "--M", "300", "--K", "0.95", "--F", "0.05", "--steps", "3e4", "--replicas", "4"];
    let mut a = common.to_vec();
    a.extend(["--workers", "1", "--out", "w1"]);
    let mut b = common.to_vec();
    b.extend(["--workers", "3", "--out", "w3"]);
    ok(tmp.path(), &a);
    ok(tmp.path(), &b);
    let out = bin()
        .current_dir(tmp.path())
        .args(common)
        .args(["--out", "wenv"])
        .env("GELSHATTER_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in files_under(&tmp.path().join("w1")) {
        let x = fs::read(tmp.path().join("w1").join(&f)).unwrap();
        assert_eq!(x, fs::read(tmp.path().join("w3").join(&f)).unwrap(), "{f}");
        assert_eq!(x, fs::read(tmp.path().join("wenv").join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn single_point_campaign_matches_run() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("one.toml"),
        "M = 500\nF = 0.02\nK = 0.98\nreplicas = 2\nseed = 9\nsteps = 1e5\nsample-interval = 100\n",
    )
    .unwrap();
    ok(tmp.path(), &["sweep", "one.toml", "--out", "sw"]);
    ok(
        tmp.path(),
        &[
            "run", "--M", "500", "--K", "0.98", "--F", "0.02", "--replicas", "2", "--seed", "9", "--steps", "1e5",
            "--sample-interval", "100", "--out", "rn",
        ],
    );
    let point = json(&tmp.path().join("sw/points/p0000/point.json"));
    let run = json(&tmp.path().join("rn/summary.json"));
    assert_eq!(point["scaling"], run["scaling"]);
    assert_eq!(point["replicas"], run["replicas"]);
    assert_eq!(point["envelope"], run["envelope"]);
}

#[test]
fn campaigns_resume_without_recomputation() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("c.toml"),
        "M = [100, 300]\nF = [0.001, 0.05]\nreplicas = 2\nseed = 4\ntarget-cycles = 10\n",
    )
    .unwrap();
    ok(tmp.path(), &["sweep", "c.toml", "--out", "c"]);
    let dir = tmp.path().join("c");
    let before: Vec<(String, Vec<u8>)> = files_under(&dir)
        .into_iter()
        .map(|f| (f.clone(), fs::read(dir.join(&f)).unwrap()))
        .collect();
    let stamp = fs::metadata(dir.join("points/p0001/point.json")).unwrap().modified().unwrap();
    let again = ok(tmp.path(), &["sweep", "c.toml", "--out", "c"]);
    assert!(again.contains("4 point(s) reused"), "{again}");
    assert_eq!(fs::metadata(dir.join("points/p0001/point.json")).unwrap().modified().unwrap(), stamp);
    for (f, bytes) in before {
        assert!(fs::read(dir.join(&f)).unwrap() == bytes, "{f} changed on resume");
    }
    assert_manifest_complete(&dir);
    let m = json(&dir.join("manifest.json"));
    assert!(m["points"].as_array().unwrap().iter().all(|p| p["status"] == "done"));

    // A damaged point is recomputed, and comes back identical.
    let victim = dir.join("points/p0002/point.json");
    let original = fs::read(&victim).unwrap();
    fs::write(&victim, "{}").unwrap();
    let third = ok(tmp.path(), &["sweep", "c.toml", "--out", "c"]);
    assert!(third.contains("3 point(s) reused"), "{third}");
    assert_eq!(fs::read(&victim).unwrap(), original);
}

#[test]
fn sweep_outputs_scaling_heatmaps_and_collapse() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("c.toml"),
        "M = [100, 1000]\nF = [1e-4, 1e-2, 0.1]\nseed = 2\ntarget-cycles = 20\nheatmap-bins = 20\n",
    )
    .unwrap();
    ok(tmp.path(), &["sweep", "c.toml", "--out", "s", "--workers", "2"]);
    let dir = tmp.path().join("s");
    let scaling = fs::read_to_string(dir.join("scaling.csv")).unwrap();
    assert!(scaling.starts_with("M,K_hat,F_hat,r,mean_tr,g,cyclicity,n_cycles\n"));
    assert_eq!(scaling.lines().count(), 7);
    let hm = fs::read_to_string(dir.join("points/p0000/heatmap.csv")).unwrap();
    assert_eq!(hm.lines().count(), 20);
    assert_eq!(hm.lines().next().unwrap().split(',').count(), 20);
    let side = json(&dir.join("points/p0000/heatmap.json"));
    assert_eq!(side["x_edges"].as_array().unwrap().len(), 21);
    let collapse = json(&dir.join("collapse.json"));
    let regimes = collapse["regimes"].as_array().unwrap();
    assert_eq!(regimes.len(), 6);
    assert_eq!(regimes[0]["regime"], "forced-cycles");
    assert_manifest_complete(&dir);
}

#[test]
fn invalid_campaign_points_fail_before_running() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("c.toml"), "M = [100, 1]\nF = 0.1\n").unwrap();
    let out = gelshatter(tmp.path(), &["sweep", "c.toml", "--out", "c"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("M"));
    assert!(!tmp.path().join("c/points").exists());
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn meanfield_reports_the_closed_form_side_by_side() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["meanfield", "--K", "0.5", "--F", "0.5", "--kc", "200", "--out", "m"]);
    let rows = csv_rows(&tmp.path().join("m/meanfield.csv"));
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[0][3], 0.75);
    assert!((rows[0][2] - 0.75).abs() < 1e-6);

    ok(tmp.path(), &["meanfield", "--K", "0.1", "--F", "0.9", "--kc", "300", "--out", "f"]);
    let rows = csv_rows(&tmp.path().join("f/meanfield.csv"));
    for r in &rows[..20] {
        assert!(r[4] < 1e-3, "k={} rel err {}", r[0], r[4]);
    }
    let s = json(&tmp.path().join("f/summary.json"));
    assert_eq!(s["converged"], true);
    assert!(s["mass_drift"].as_f64().unwrap() < 1e-8);
}

#[test]
fn meanfield_at_zero_time_returns_the_initial_condition() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["meanfield", "--K", "0.5", "--F", "0.5", "--kc", "30", "--T", "0", "--out", "z"]);
    let rows = csv_rows(&tmp.path().join("z/meanfield.csv"));
    assert_eq!(rows[0][1], 1.0);
    assert!(rows[1..].iter().all(|r| r[1] == 0.0));
}

#[test]
fn meanfield_instability_exits_nonzero() {
    let tmp = TempDir::new().unwrap();
    let out = gelshatter(
        tmp.path(),
        &["meanfield", "--K", "1", "--F", "1", "--kc", "200", "--dt", "50", "--T", "500", "--out", "u"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unstable"));
}

#[test]
fn analyze_reproduces_the_run_summary() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["run", "--M", "300", "--K", "0.97", "--F", "0.03", "--steps", "1e5", "--histograms", "--sample-interval", "1000", "--out", "r"],
    );
    let line = ok(tmp.path(), &["analyze", "r", "--out", "an"]);
    assert!(line.contains("cycles="), "{line}");
    let a = json(&tmp.path().join("an/analysis.json"));
    let s = json(&tmp.path().join("r/summary.json"));
    assert_eq!(a[0]["scaling"], s["scaling"]);
    assert!(a[0]["alpha"][0]["mean"].as_f64().unwrap() > 1.0);
    assert!(tmp.path().join("r/alpha.csv").is_file());
    assert!(tmp.path().join("r/density.csv").is_file());
}

#[test]
fn reproduce_writes_plot_ready_data_and_scripts() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["reproduce", "fig3", "--steps", "2e4", "--out", "f3"]);
    let d = tmp.path().join("f3");
    for i in 0..4 {
        assert!(d.join(format!("points/p{i:04}/heatmap.csv")).is_file());
    }
    let gp = fs::read_to_string(d.join("fig3.gp")).unwrap();
    assert_eq!(gp.matches("heatmap.csv").count(), 4);
    assert!(d.join("campaign.toml").is_file());
    assert_manifest_complete(&d);

    ok(tmp.path(), &["reproduce", "fig2", "--steps", "1e5", "--out", "f2"]);
    let d = tmp.path().join("f2");
    assert!(fs::read_to_string(d.join("alpha.csv")).unwrap().starts_with("step,alpha\n"));
    assert!(d.join("fig2.gp").is_file());
    assert!(fs::read_to_string(d.join("recipe.toml")).unwrap().contains("M = 100000"));
    assert_manifest_complete(&d);

    let out = gelshatter(tmp.path(), &["reproduce", "fig1", "--full", "--out", "f1"]);
    assert!(!out.status.success());
}
