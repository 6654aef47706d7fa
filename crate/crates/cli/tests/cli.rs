use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
# tiny desk run
n_antennas = 12
n_rf = 4
n_subcarriers = 4
n_taps = 2
k_total = 6
k_max = 3
snr_db = 0, 10
trials = 3
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridbf"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn simulate_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("rows.csv");
    let o = run(&["simulate", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("sweep_axis,sweep_value,mode,snr_db,trial"));
    assert_eq!(lines.count(), 3 * 2 * 3);
    // Summary goes to stderr.
    assert!(String::from_utf8_lossy(&o.stderr).contains("hb 10 dB"));
}

#[test]
fn seed_and_overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = stdout(&run(&["simulate", &cfg]));
    let b = stdout(&run(&["simulate", &cfg]));
    assert_eq!(a, b);
    let c = stdout(&run(&["simulate", &cfg, "--seed", "77"]));
    assert_ne!(a, c);
    let d = stdout(&run(&["simulate", &cfg, "--trials", "1", "--modes", "db", "--snr_db", "-5"]));
    assert_eq!(d.lines().count(), 2);
    assert!(d.contains(",db,-5.00000000000e0,0,"));
}

#[test]
fn json_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = run(&["simulate", &cfg, "--format", "json", "--trials", "1", "--emit_bounds", "true"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.trim_start().starts_with('['));
    assert!(text.contains("\"bound\""));
}

#[test]
fn sweep_accepts_negative_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = run(&["sweep", &cfg, "--axis", "snr", "--values", "-5,5", "--trials", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("snr,-5.00000000000e0"));
    assert!(text.contains("snr,5.00000000000e0"));
}

#[test]
fn bounds_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = run(&["bounds", &cfg]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("snr_db,power,asb,hb,db"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn decompose_reports_and_writes_switches() {
    let dir = tempfile::tempdir().unwrap();
    let switches = dir.path().join("switches.csv");
    let o = run(&[
        "decompose", "--n", "16", "--k", "2", "--nf", "3", "--cpps", "2", "--switches",
        switches.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("rank: 6"));
    assert!(text.contains("pair_count: 66"));
    assert!(text.contains("cpps_pairs: 480"));
    let triplets = std::fs::read_to_string(&switches).unwrap();
    assert!(triplets.starts_with("rf_chain,antenna,pair_index\n"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "n_rf = 400\n");
    let o = run(&["simulate", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_rf"));

    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(run(&["simulate", &cfg, "--trials", "0"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", &cfg, "--power", "loud"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", &cfg, "--axis", "bogus", "--values", "1"]).status.code(), Some(2));
    assert_eq!(run(&["simulate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = run(&["simulate", &cfg, "--out", "/nonexistent-dir/rows.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent-dir/rows.csv"));
    let missing = dir.path().join("missing.cfg");
    assert_eq!(run(&["simulate", missing.to_str().unwrap()]).status.code(), Some(1));
}
