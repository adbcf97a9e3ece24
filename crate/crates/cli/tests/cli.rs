use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_irs-cran"))
}

const SMALL: [&str; 8] = ["--num-users", "2", "--antennas-per-rrh", "2", "--elements-per-irs", "3", "--threads", "1"];

#[test]
fn sweep_writes_csv_and_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        bin()
            .args(["sweep", "--parameter", "capacity", "--values", "2,6", "--drops", "1", "--variants", "wz,wz-noirs"])
            .args(SMALL)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap()
    };
    let out = run();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep-capacity.csv")).unwrap();
    assert!(csv.starts_with("# schema: irs-cran-sweep/1"));
    assert_eq!(csv.lines().count(), 2 + 4);
    let script = std::fs::read_to_string(dir.path().join("sweep-capacity.gp")).unwrap();
    assert!(script.contains("plot 'sweep-capacity.csv'"));
    assert!(dir.path().join("sweep-capacity-drops.csv").exists());
    assert!(run().status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("sweep-capacity.csv")).unwrap(), csv);
}

#[test]
fn run_and_converge_write_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["run", "--variants", "wz-approx,p2p-random", "--max-iters", "3"]).args(SMALL).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("run-wz-approx.csv")).unwrap();
    assert!(trace.starts_with("iteration,rate_bits,surrogate,rank_gap,millis"));
    assert!(dir.path().join("run-p2p-random.csv").exists());

    let out = bin().args(["converge", "--elements", "2,3", "--variants", "wz", "--max-iters", "2"]).args(SMALL).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let conv = std::fs::read_to_string(dir.path().join("converge.csv")).unwrap();
    assert!(conv.lines().skip(1).any(|l| l.starts_with("wz,2,")));
    assert!(conv.lines().skip(1).any(|l| l.starts_with("wz,3,")));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["sweep", "--parameter", "capacity", "--values", "6,2"],
        vec!["sweep", "--parameter", "capacity", "--values", "2", "--drops", "0"],
        vec!["sweep", "--parameter", "capacity", "--values", "-1"],
        vec!["run", "--variants", "wz-9bits"],
        vec!["run", "--variants", "wz-2bit"],
        vec!["run", "--num-users", "0"],
        vec!["run", "--config", "/nonexistent/scenario.toml"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = bin().args(&args).arg("--out").arg(dir.path()).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = irs_cran::scenario::ScenarioConfig { num_users: 1, antennas_per_rrh: 1, elements_per_irs: 2, ..Default::default() };
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    let out = bin().args(["run", "--variants", "wz-noirs", "--config"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("wz-noirs\tN_I=2"));
}
