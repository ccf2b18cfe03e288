use std::path::Path;
use std::process::{Command, Output};

fn seqloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqloc")).args(args).output().unwrap()
}

fn run_to(dir: &Path, name: &str, args: &[&str]) -> Vec<u8> {
    let out = dir.join(name);
    let mut full: Vec<&str> = args.to_vec();
    let path = out.to_str().unwrap().to_string();
    full.extend(["--out", &path]);
    let res = seqloc(&full);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    std::fs::read(out).unwrap()
}

#[test]
fn sweeps_are_byte_identical_for_the_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["sweep-noise", "sweep-init", "sweep-vel-dev", "sweep-drift-dev"] {
        let args = [cmd, "--trials", "100", "--seed", "9", "--no-timestamp"];
        let a = run_to(dir.path(), "a.csv", &args);
        let b = run_to(dir.path(), "b.csv", &args);
        assert_eq!(a, b, "{cmd}");
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("# seqloc-sweep-v1 rng=ChaCha8 seed=9\n"), "{text}");
    }
}

#[test]
fn different_seeds_differ_and_timestamp_is_optional() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_to(
        dir.path(),
        "a.csv",
        &["sweep-noise", "--trials", "50", "--seed", "1", "--no-timestamp"],
    );
    let b = run_to(
        dir.path(),
        "b.csv",
        &["sweep-noise", "--trials", "50", "--seed", "2", "--no-timestamp"],
    );
    assert_ne!(a, b);
    let c = run_to(dir.path(), "c.csv", &["sweep-noise", "--trials", "50", "--seed", "1"]);
    let text = String::from_utf8(c).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("# generated_unix="));
}

#[test]
fn config_file_methods_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scenario.toml");
    std::fs::write(&cfg, "case = \"outside\"\nsigma_rho = 1.0\nseed = 4\n").unwrap();
    let dump = dir.path().join("trials.csv");
    let csv = run_to(
        dir.path(),
        "out.csv",
        &[
            "sweep-noise",
            "--config",
            cfg.to_str().unwrap(),
            "--trials",
            "20",
            "--method",
            "sdt,lspm-uvd",
            "--levels",
            "1",
            "--no-timestamp",
            "--dump-trials",
            dump.to_str().unwrap(),
        ],
    );
    let text = String::from_utf8(csv).unwrap();
    assert!(text.contains("seed=4"));
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",sdt,outside,") && rows[1].contains(",lspm-uvd,outside,"));
    let dump = std::fs::read_to_string(dump).unwrap();
    assert_eq!(dump.lines().count(), 2 + 40);
}

#[test]
fn crlb_map_and_remarks() {
    let dir = tempfile::tempdir().unwrap();
    let map = run_to(
        dir.path(),
        "map.csv",
        &["crlb-map", "--step", "100", "--margin", "0", "--no-timestamp"],
    );
    // 7 x 7 grid minus the 8 anchor positions.
    assert_eq!(String::from_utf8(map).unwrap().lines().count(), 2 + 49 - 8);
    let remarks = run_to(
        dir.path(),
        "r.csv",
        &["check-remarks", "--count", "20", "--no-timestamp"],
    );
    assert_eq!(String::from_utf8(remarks).unwrap().lines().count(), 2 + 20);
}

#[test]
fn bench_reports_solve_time() {
    let res = seqloc(&[
        "sweep-init",
        "--trials",
        "20",
        "--radii",
        "60",
        "--bench",
        "--no-timestamp",
    ]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("mean_solve_ms="));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "sigma_rho = -1.0\n").unwrap();
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "sigma_rh = 1.0\n").unwrap();
    for args in [
        vec!["sweep-noise", "--config", bad.to_str().unwrap()],
        vec!["sweep-noise", "--config", unknown.to_str().unwrap()],
        vec!["sweep-noise", "--config", "/nonexistent/scenario.toml"],
        vec!["sweep-noise", "--trials", "0"],
        vec!["sweep-noise", "--method", "bogus"],
        vec!["sweep-noise", "--case", "sideways"],
    ] {
        let res = seqloc(&args);
        assert_eq!(
            res.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
}

#[test]
fn all_trials_failing_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("four.toml");
    // Four pseudoranges cannot determine six unknowns.
    std::fs::write(&cfg, "n_anchors = 4\n").unwrap();
    let res = seqloc(&[
        "sweep-noise",
        "--config",
        cfg.to_str().unwrap(),
        "--method",
        "lspm-uvd",
        "--trials",
        "10",
        "--levels",
        "1",
        "--out",
        dir.path().join("o.csv").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}
