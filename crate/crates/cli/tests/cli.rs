use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hcnk::harness::{preset, preset_names, read_dataset, DataFormat};
use hcnk::kernels::read_gram_binary;

fn hcnk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcnk")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A preset shrunk to a few seconds of work.
fn write_config(dir: &Path, name: &str, tolerance: f64, seed: u64) -> String {
    let mut c = preset("matched-shallow").unwrap();
    c.name = name.into();
    c.n_list = vec![32, 64, 128, 256];
    c.n_test = 256;
    c.trials = 2;
    c.seed = seed;
    c.replica = false;
    c.tolerance = tolerance;
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, c.to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn preset_list_names_every_preset() {
    let o = hcnk(&["preset", "list"]);
    assert!(o.status.success());
    let out = stdout(&o);
    for name in preset_names() {
        assert!(out.contains(&name), "{name} missing from:\n{out}");
    }
}

#[test]
fn learn_writes_artifacts_and_assert_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let loose = write_config(dir.path(), "loose", 10.0, 7);
    let out = dir.path().join("loose-out");
    let o = hcnk(&["learn", "--config", &loose, "--out", out.to_str().unwrap(), "--assert", "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS"));
    for f in ["curve.csv", "meta.json"] {
        assert!(out.join(f).exists(), "{f} not written");
    }
    let csv = fs::read_to_string(out.join("curve.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert_eq!(csv.lines().count(), 6);

    let strict = write_config(dir.path(), "strict", 1e-9, 7);
    let out = dir.path().join("strict-out");
    let o = hcnk(&["learn", "--config", &strict, "--out", out.to_str().unwrap(), "--assert"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
    // Without --assert a failed tolerance is only reported.
    let o = hcnk(&["learn", "--config", &strict, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn fit_refuses_mismatched_hash_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a", 10.0, 1);
    let b = write_config(dir.path(), "b", 10.0, 2);
    let out = dir.path().join("a-out");
    assert!(hcnk(&["learn", "--config", &a, "--out", out.to_str().unwrap()]).status.success());
    let curve = out.join("curve.csv");
    let curve = curve.to_str().unwrap();

    let o = hcnk(&["fit", curve, "--config", &a]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("beta_hat"));

    let o = hcnk(&["fit", curve, "--config", &b]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash"));

    let o = hcnk(&["fit", curve, "--config", &b, "--force"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn ingest_normalises_and_writes_gram() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data.tsv");
    fs::write(&input, "3\t4\t0\t2\t1.5\n1\t0\t0\t-1\t2\n0.6\t0.8\t5\t0\t-1\n").unwrap();
    let out = dir.path().join("out");
    let o = hcnk(&[
        "ingest",
        input.to_str().unwrap(),
        "--format",
        "tsv",
        "--patch",
        "2",
        "--gram",
        "ntk:2,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = read_dataset(fs::File::open(out.join("data.csv")).unwrap(), DataFormat::Csv, None).unwrap();
    assert_eq!(ds.labels, vec![1.5, 2.0, -1.0]);
    assert_eq!(ds.inputs.row(0), &[0.6, 0.8, 0.0, 1.0]);
    let g = read_gram_binary(fs::File::open(out.join("gram.bin")).unwrap()).unwrap();
    assert_eq!((g.rows(), g.cols()), (3, 3));
    for i in 0..3 {
        assert!((g.get(i, i) - 3.0).abs() < 1e-9);
    }

    let o = hcnk(&["ingest", input.to_str().unwrap(), "--gram", "ntk:2,2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_prints_sector_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec");
    let o = hcnk(&[
        "spectrum",
        "--arch",
        "ntk:2,2",
        "--k-max",
        "128",
        "--resolution",
        "512",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("sector 1") && s.contains("sector 2"), "{s}");
    assert!(out.join("spectrum.csv").exists() && out.join("spectrum.json").exists());
}

#[test]
fn bad_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nbogus = 1\n").unwrap();
    assert_eq!(hcnk(&["learn", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(hcnk(&["learn"]).status.code(), Some(2));
    assert_eq!(hcnk(&["preset", "run", "no-such-preset"]).status.code(), Some(2));
    assert_eq!(hcnk(&["spectrum", "--arch", "ntk:2,2", "--resolution", "100"]).status.code(), Some(2));
}
