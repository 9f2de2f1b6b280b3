use std::path::Path;
use std::process::{Command, Output};

use fermibgk::formats::{read_series, read_snapshot, KeyValues};

fn fermibgk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fermibgk"))
        .current_dir(dir)
        .env("FERMIBGK_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

const SHORT_DECAY: &str = "scenario = \"decay1x3v\"\n\
    [grid]\nn_p = 12\nn_x = 8\nlength = 4.0\nadequacy = 1e-2\n\
    [run]\ndt = 0.1\nt_end = 1.0\n";

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SHORT_DECAY);
    for out in ["a", "b"] {
        let o = fermibgk(dir.path(), &["--config", &cfg, "--out", out, "--seed", "7", "simulate"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["timeseries.csv", "final.bin", "decay_fit.kv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let inv: Vec<Vec<u8>> = ["x", "y"]
        .iter()
        .map(|out| {
            let o = fermibgk(dir.path(), &["--out", out, "--seed", "11", "invert"]);
            assert!(o.status.success());
            std::fs::read(dir.path().join(out).join("invert_roundtrip.csv")).unwrap()
        })
        .collect();
    assert_eq!(inv[0], inv[1]);
}

#[test]
fn series_and_snapshots_are_readable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{SHORT_DECAY}[output]\nsnapshots = true\n"));
    let o = fermibgk(dir.path(), &["--config", &cfg, "--out", "o", "simulate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let series = read_series(&dir.path().join("o/timeseries.csv")).unwrap();
    assert_eq!(series["time"].len(), 11);
    assert_eq!(series["time"][0], 0.0);
    assert!((series["time"][10] - 1.0).abs() < 1e-12);
    let snap = read_snapshot(&dir.path().join("o/snapshots/step_000010.bin")).unwrap();
    let fin = read_snapshot(&dir.path().join("o/final.bin")).unwrap();
    assert_eq!(snap, fin);
    assert_eq!((fin.n_x, fin.n_p), (8, 12));
    let kv = KeyValues::parse(&std::fs::read_to_string(dir.path().join("o/decay_fit.kv")).unwrap());
    assert_eq!(kv.get("scenario"), Some("decay1x3v"));
}

#[test]
fn all_zero_frequency_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "scenario = \"relax0d\"\n[tau]\npoly = [0.0]\nc = [0.0, 0.0, 0.0, 0.0]\n",
    );
    let o = fermibgk(dir.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[grid]\nnp = 12\n");
    let o = fermibgk(dir.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inadmissible_moments_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // B = 2 > beta(-ln 3)
    let o = fermibgk(dir.path(), &["invert", "--density", "2", "--energy", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let o = fermibgk(dir.path(), &["invert", "--density", "1", "--energy", "1"]);
    assert!(o.status.success());
}

#[test]
fn corrupted_basis_fails_lincheck_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[grid]\nn_p = 16\nadequacy = 1e-2\n\
         [lincheck]\nsamples = 10\nresidual_samples = 2\npositivity_samples = 10\ncorrupt_index = 2\ncorrupt_factor = 1.1\n",
    );
    let o = fermibgk(dir.path(), &["--config", &cfg, "--out", "o", "lincheck"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("o/lincheck.txt")).unwrap();
    assert!(report.contains("FAIL  orthonormality"));
}

#[test]
fn relax0d_entropy_column_never_rises() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "scenario = \"relax0d\"\n[grid]\nn_p = 16\nadequacy = 1e-3\n[run]\nt_end = 3.0\n");
    let o = fermibgk(dir.path(), &["--config", &cfg, "--out", "o", "simulate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let h = &read_series(&dir.path().join("o/timeseries.csv")).unwrap()["H"];
    assert!(h.len() > 10);
    for w in h.windows(2) {
        assert!(w[1] <= w[0] + 1e-14 * w[0].abs(), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn betatable_below_branch_skips_assertion() {
    let dir = tempfile::tempdir().unwrap();
    let o = fermibgk(dir.path(), &["--out", "o", "betatable", "--c-min", "-2", "--c-max", "1", "--n", "4"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("assertion skipped"));
    let o = fermibgk(dir.path(), &["--out", "p", "betatable", "--c-min", "0.5", "--n", "1"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("p/betatable.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn non_integration_scenario_is_rejected_by_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let o = fermibgk(dir.path(), &["simulate", "--scenario", "lincheck"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fermibgk(dir.path(), &["simulate", "--scenario", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}
