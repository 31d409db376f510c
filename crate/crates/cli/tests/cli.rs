use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn bench")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn passing_run_exits_zero_and_writes_the_report_tree() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(&["run", "fig5a", "--out", "reports"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(
        text.lines().any(|l| l.starts_with("PASS") && l.contains("f3db")),
        "{text}"
    );
    for f in ["data.csv", "summary.json", "params.json"] {
        assert!(dir.path().join("reports/fig5a").join(f).is_file(), "{f}");
    }
}

#[test]
fn insufficient_counts_exit_nonzero_with_the_reason() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(
        &["run", "fig4d", "--set", "scenario.duration_s=1", "--out", "."],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("insufficient counts for 0.05 dB criterion"), "{text}");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(&["run", "fig9z"], dir.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown figure id"));
    let o = bench(&["run", "fig5a", "--set", "eom.nope=1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = bench(&["fit", "lorentzian", "missing.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_prints_the_report_for_a_run_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(&["run", "fig3ef", "--out", "."], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let data = dir.path().join("fig3ef/data.csv");
    assert!(std::fs::read_to_string(&data)
        .unwrap()
        .starts_with("bin_start_ps,count\n"));
    let o = bench(&["fit", "gaussian-peak", data.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["converged", "model", "params", "residual_rms", "sigmas"]);
    let fwhm = v["params"]["sigma_ps"].as_f64().unwrap() * (8.0 * 2f64.ln()).sqrt();
    assert!((fwhm - 17.0).abs() < 1.0, "{fwhm}");
}

#[test]
fn sweep_reads_a_scenario_and_prints_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(&["run", "fig3cd", "--out", "."], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let params = dir.path().join("fig3cd/params.json");
    let o = bench(
        &[
            "sweep",
            params.to_str().unwrap(),
            "--param",
            "drive.offset_volts",
            "--from",
            "0",
            "--to",
            "16.5",
            "--steps",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "value,det1_rate_cps,det2_rate_cps,out1_watts,out2_watts");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0.0,"));
    assert!(lines[3].starts_with("16.5,"));
}
