use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cof(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cof"))
        .args(args)
        .output()
        .expect("cof binary runs")
}

fn instances() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_line(o: &Output) -> Value {
    assert!(!o.status.success());
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

#[test]
fn analyze_reports_one_based_symbols() {
    let out = cof(&["analyze", instances().join("nu2.txt").to_str().unwrap()]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["a_star"], 4);
    assert_eq!(v["a_dagger"], 3);
    assert_eq!(v["i_star"], 9);
    assert_eq!(v["cheap_arms"], serde_json::json!([1, 2, 3]));
    assert_eq!(v["dagger_set"].as_array().unwrap().len(), 9);
}

#[test]
fn analyze_alpha_override() {
    let path = instances().join("nu2.txt");
    let out = cof(&["analyze", path.to_str().unwrap(), "--alpha", "0.5"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["alpha"], 0.5);
    assert_eq!(v["a_star"], 1);
    assert_eq!(v["a_dagger"], Value::Null);
}

#[test]
fn bounds_table_shape() {
    let path = instances().join("nu2.txt");
    let out = cof(&["bounds", path.to_str().unwrap(), "--horizon", "1000000"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "arm,lb_cheap,lb_expensive,joint_weight,gamma_dagger,gamma_astar"
    );
    assert_eq!(lines.len(), 1 + 12 + 2);
    assert_eq!(lines[13], "tau_dagger,a_used,cost_ub,quality_ub");
    let summary: Vec<f64> = lines[14].split(',').map(|f| f.parse().unwrap()).collect();
    assert!(summary.iter().all(|x| x.is_finite() && *x > 0.0));
}

#[test]
fn bounds_rejects_tiny_horizon() {
    let path = instances().join("nu1.txt");
    let v = error_line(&cof(&["bounds", path.to_str().unwrap(), "--horizon", "1"]));
    assert_eq!(v["error"], "bounds");
}

#[test]
fn parse_error_is_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.txt");
    fs::write(&path, "alpha 0.3\nK 2\n0.5 1\n1.5 2\n").unwrap();
    let v = error_line(&cof(&["analyze", path.to_str().unwrap()]));
    assert_eq!(v["error"], "instance");
    assert!(v["message"].as_str().unwrap().contains("line 4"));
}

#[test]
fn missing_file_is_an_io_error() {
    let v = error_line(&cof(&["analyze", "/definitely/not/here.txt"]));
    assert_eq!(v["error"], "io");
}

fn write_config(dir: &Path, output: &str, algorithms: &str, workers: usize) -> PathBuf {
    let inst = fs::read_to_string(instances().join("nu1.txt")).unwrap();
    fs::write(dir.join("nu1.txt"), inst).unwrap();
    let path = dir.join(format!("{output}.json"));
    let text = format!(
        r#"{{"instance_path": "nu1.txt", "algorithms": [{algorithms}], "alphas": [0.8, 0.6],
            "horizon": 5000, "num_runs": 3, "master_seed": 11, "checkpoint_count": 30,
            "output_dir": "{output}", "workers": {workers}}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "curves", "events"] {
        let d = dir.join(sub);
        let mut entries: Vec<PathBuf> = fs::read_dir(&d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            out.push((
                p.strip_prefix(dir).unwrap().to_path_buf(),
                fs::read(&p).unwrap(),
            ));
        }
    }
    out
}

#[test]
fn simulate_then_aggregate() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "out", r#""cof", "etc_cs""#, 1);
    let out = cof(&["simulate", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["runs"], 12);

    let dir = tmp.path().join("out");
    let aggregate = fs::read(dir.join("aggregate.csv")).unwrap();
    let terminal = fs::read_to_string(dir.join("terminal.csv")).unwrap();
    assert_eq!(terminal.lines().count(), 1 + 12);
    let curve = fs::read_to_string(dir.join("curves/cof-a0.8-r0000.csv")).unwrap();
    assert!(curve.lines().last().unwrap().contains(",5000,"));
    let events = fs::read_to_string(dir.join("events/cof-a0.8-r0000.csv")).unwrap();
    assert!(events.starts_with("run_id,t,arm,kind\n"));
    assert!(!dir.join("events/etc_cs-a0.8-r0000.csv").exists());

    let counts = fs::read_to_string(dir.join("final_counts.csv")).unwrap();
    let mut per_run = std::collections::BTreeMap::<String, u64>::new();
    for line in counts.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        *per_run.entry(f[0].to_string()).or_default() += f[5].parse::<u64>().unwrap();
    }
    assert_eq!(per_run.len(), 12);
    assert!(per_run.values().all(|&n| n == 5000));

    fs::remove_file(dir.join("aggregate.csv")).unwrap();
    let out = cof(&["aggregate", dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(fs::read(dir.join("aggregate.csv")).unwrap(), aggregate);
}

#[test]
fn outputs_do_not_depend_on_workers_or_order() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(tmp.path(), "a", r#""cof", "ts_cs", "ucb_cs""#, 1);
    let b = write_config(tmp.path(), "b", r#""ucb_cs", "cof", "ts_cs""#, 3);
    let c = write_config(tmp.path(), "c", r#""cof", "ts_cs", "ucb_cs""#, 2);
    for cfg in [&a, &b, &c] {
        assert!(cof(&["simulate", cfg.to_str().unwrap()]).status.success());
    }
    let ta = read_tree(&tmp.path().join("a"));
    let tc = read_tree(&tmp.path().join("c"));
    assert_eq!(ta, tc);
    // A permuted algorithm list yields the same per-run files.
    let tb = read_tree(&tmp.path().join("b"));
    let per_run = |t: &[(PathBuf, Vec<u8>)]| -> Vec<(PathBuf, Vec<u8>)> {
        t.iter()
            .filter(|(p, _)| p.components().count() == 2)
            .cloned()
            .collect()
    };
    assert_eq!(per_run(&ta), per_run(&tb));
    let agg = |dir: &str| fs::read(tmp.path().join(dir).join("aggregate.csv")).unwrap();
    assert_eq!(agg("a"), agg("b"));
}

#[test]
fn unknown_config_key_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"instance_path":"x.txt","algorithms":["cof"],"alphas":[0.3],"horizon":10,
            "num_runs":1,"master_seed":1,"output_dir":"o","horizn":5}"#,
    )
    .unwrap();
    let v = error_line(&cof(&["simulate", path.to_str().unwrap()]));
    assert_eq!(v["error"], "config");
}

#[test]
fn aggregate_without_curves_fails() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("curves")).unwrap();
    let v = error_line(&cof(&["aggregate", tmp.path().to_str().unwrap()]));
    assert_eq!(v["error"], "aggregate");
}

#[test]
fn ingest_writes_a_parseable_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let ratings = tmp.path().join("ratings.csv");
    let genres = tmp.path().join("genres.csv");
    fs::write(&ratings, "item_id,rating\n1,4\n2,2\n3,5\n3,3\n").unwrap();
    fs::write(
        &genres,
        "item_id,genre\n1,drama\n2,comedy\n3,drama\n3,horror\n",
    )
    .unwrap();
    let out_path = tmp.path().join("inst.txt");
    let run = || {
        cof(&[
            "ingest",
            ratings.to_str().unwrap(),
            genres.to_str().unwrap(),
            "--scale-max",
            "5",
            "--cost-seed",
            "3",
            "-o",
            out_path.to_str().unwrap(),
        ])
    };
    assert!(run().status.success());
    let first = fs::read_to_string(&out_path).unwrap();
    assert!(run().status.success());
    assert_eq!(fs::read_to_string(&out_path).unwrap(), first);

    let parsed = cof_core::parse_instance(&first).unwrap();
    assert!(!parsed.resorted);
    let mut means = parsed.instance.means().to_vec();
    means.sort_by(f64::total_cmp);
    // comedy {2}, drama {4, 5, 3}, horror {5, 3}
    let expected = [0.4, 0.8, 0.8];
    assert!(means
        .iter()
        .zip(expected)
        .all(|(m, e)| (m - e).abs() < 1e-12));
}

#[test]
fn ingest_single_genre_cannot_form_an_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let ratings = tmp.path().join("r.csv");
    let genres = tmp.path().join("g.csv");
    fs::write(&ratings, "1,5\n2,5\n3,5\n").unwrap();
    fs::write(&genres, "1,jazz\n2,jazz\n3,jazz\n").unwrap();
    let out = cof(&[
        "ingest",
        ratings.to_str().unwrap(),
        genres.to_str().unwrap(),
        "--cost-seed",
        "1",
        "-o",
        tmp.path().join("o.txt").to_str().unwrap(),
    ]);
    assert_eq!(error_line(&out)["error"], "ingest");
}
