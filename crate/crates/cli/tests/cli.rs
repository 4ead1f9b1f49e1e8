use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "t,sweep_value,empirical_mse,theoretical_bound,eps_used,admissible";

fn compscore(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compscore"))
        .args(args)
        .env("COMPSCORE_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn missing_config_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = dir.path().join("a.csv");
    let o = compscore(
        &["panel-a", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()],
        "0",
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(missing.to_str().unwrap()));
    assert!(!out.exists());
}

#[test]
fn panel_a_writes_header_and_one_summary_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"mc_samples": 500, "sweep": {"panel": "panel-a", "eps": [0.0, 0.1, 5.0]}}"#,
    );
    let out = dir.path().join("a.csv");
    let o = compscore(&["panel-a", "--config", &cfg, "--out", out.to_str().unwrap()], "0");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 1 + 3 * 3);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 9);
    // The largest error is past the admissibility frontier: empty bound.
    assert!(lines.iter().any(|l| l.ends_with(",,5.0000000000000000e0,false")), "{csv}");
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"mc_samples": 400, "cov_samples": 400, "schedule": {"steps": 100},
            "sweep": {"panel": "panel-b", "n": [1, 3, 6], "eps_dsm_sq": 0.01}}"#,
    );
    let runs: Vec<Vec<u8>> = [("a", "0"), ("b", "0"), ("c", "1")]
        .iter()
        .map(|(name, threads)| {
            let out = dir.path().join(format!("{name}.csv"));
            let o = compscore(
                &["panel-b", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "7"],
                threads,
            );
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn configuration_problems_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();
    let mismatch = write(dir.path(), "m.json", r#"{"sweep": {"panel": "panel-c"}}"#);
    let unknown = write(dir.path(), "u.json", r#"{"n_observations": 3}"#);
    let one_d = write(
        dir.path(),
        "d.json",
        r#"{"dim": 1, "prior_mean": [0.0], "prior_cov": [[1.0]], "likelihood_cov": [[1.0]]}"#,
    );
    for (cmd, cfg) in [("panel-a", &mismatch), ("panel-a", &unknown), ("figure1", &one_d)] {
        let o = compscore(&[cmd, "--config", cfg, "--out", out], "0");
        assert_eq!(o.status.code(), Some(2), "{cmd} {cfg}");
    }
    let o = compscore(&["panel-a", "--out", out], "many");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("COMPSCORE_THREADS"));
    let o = compscore(&["verify", "--replications", "0"], "0");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn figure1_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "f.json",
        r#"{"cov_samples": 300, "schedule": {"steps": 50},
            "figure1": {"samples": 200, "grid_resolution": 5}}"#,
    );
    let out = dir.path().join("fig");
    let o = compscore(&["figure1", "--config", &cfg, "--out", out.to_str().unwrap()], "0");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 26);
    for f in ["samples_n1.csv", "samples_n11.csv"] {
        let s = std::fs::read_to_string(out.join(f)).unwrap();
        assert!(s.starts_with("theta1,theta2\n"));
        assert_eq!(s.lines().count(), 201);
    }
}
