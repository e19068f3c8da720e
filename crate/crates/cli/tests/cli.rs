use std::process::{Command, Output};

fn blockgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockgs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn config(text: &str) -> tempfile::NamedTempFile {
    let f = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(f.path(), text).unwrap();
    f
}

const HEADER: &str =
    "variant,n,m,s,q,P,kappa,seed_count,sync_count,words_reduced,flops,loo,residual,predicted_time,speedup_vs_bcgsi+";

#[test]
fn factor_prints_one_csv_row() {
    let o = blockgs(&[
        "factor",
        "--variant",
        "bcgsi+p-1s",
        "--n",
        "120",
        "--m",
        "16",
        "--s",
        "4",
        "--procs",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, [HEADER, lines[1]]);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(
        &fields[..9],
        [
            "BCGSI+P-1S",
            "120",
            "16",
            "4",
            "4",
            "4",
            "1.0000000000000000e2",
            "1",
            "4"
        ]
    );
    assert!(fields[11].parse::<f64>().unwrap() < 1e-13);
}

#[test]
fn factor_json_and_cost_overrides() {
    let o = blockgs(&[
        "--cost-alpha",
        "1",
        "--cost-beta",
        "0",
        "--cost-gamma",
        "0",
        "factor",
        "--variant",
        "BCGSI+",
        "--n",
        "60",
        "--m",
        "8",
        "--s",
        "2",
        "--out",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let row = &v["rows"][0];
    assert_eq!(row["sync_count"], 13);
    assert_eq!(row["predicted_time"].as_f64(), Some(13.0));
    assert_eq!(row["status"], "ok");
}

#[test]
fn factor_breakdown_is_reported() {
    let o = blockgs(&[
        "factor",
        "--variant",
        "bcgspipi+",
        "--n",
        "200",
        "--m",
        "16",
        "--s",
        "4",
        "--kappa",
        "1e14",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Pythagorean Cholesky"));
}

#[test]
fn bench_is_deterministic_and_writes_files() {
    let cfg =
        config("variants = bcgsi+, bcgsi+p-2s\nn = 80\nm = 8\ns = 2\nprocs = 1, 2\nkappa = 1e2, 1e4\nseeds = 2\n");
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = blockgs(&[
            "bench",
            "--config",
            cfg.path().to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 1 + 8);
}

#[test]
fn bench_expected_failures_exit_zero() {
    let cfg = config("variants = bcgsi+p-1s, bcgspipi+\nn = 200\nm = 16\ns = 4\nkappa = 1e14\nseeds = 1\n");
    let o = blockgs(&["bench", "--config", cfg.path().to_str().unwrap(), "--out", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["unexpected_failures"], 0);
    assert_eq!(v["rows"][0]["status"], "expected-failure");
}

#[test]
fn bad_config_exits_two() {
    let cfg = config("n = 10\nwidth = 3\n");
    let o = blockgs(&["bench", "--config", cfg.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = blockgs(&["bench", "--config", "/nonexistent/blockgs.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let o = blockgs(&["verify"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("[ok]")).count(), 5);
}
