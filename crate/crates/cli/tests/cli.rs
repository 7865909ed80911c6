use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/mnist-1k-images-idx3-ubyte");

fn memgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memgan"))
        .args(args)
        .env_remove("MEMGAN_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "seed = 3\nout_dir = \"{}\"\n[data]\nimages = \"{FIXTURE}\"\nlimit = 24\n[train]\nepochs = 2\n[sweep]\nsamples = 16\ngrid = 4\nvariability = [0.0, 0.5]\nlevels = [2, 256]\nsnapshots = [1, 2]\n[leakage]\ntrials = 200\n{extra}",
        dir.join("out").display()
    );
    fs::write(&path, text).unwrap();
    path
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn every_subcommand_is_byte_reproducible() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let cfg = write_config(dir.path(), "");
            let cfg = cfg.to_str().unwrap();
            for cmd in ["train", "generate", "sweep-variability", "sweep-levels", "snapshot-epochs", "cost", "leakage"] {
                ok(&memgan(&["--config", cfg, cmd]));
            }
            let files = tree(&dir.path().join("out"));
            (dir, files)
        })
        .collect();
    let (a, b) = (&runs[0].1, &runs[1].1);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in a {
        assert!(v == &b[k], "{} differs between runs", k.display());
    }
    for f in [
        "train/checkpoint.mgck",
        "train/metrics.csv",
        "train/grid-epoch-002.pgm",
        "generate/samples.pgm",
        "sweep-variability/summary.csv",
        "sweep-variability/var50/grid.pgm",
        "sweep-levels/baseline.pgm",
        "sweep-levels/levels002/metrics.csv",
        "snapshot-epochs/grid-epoch-001.pgm",
        "cost/schedule.csv",
        "leakage/leakage.csv",
    ] {
        assert!(a.contains_key(Path::new(f)), "missing {f}");
    }
    let summary = String::from_utf8(a[Path::new("snapshot-epochs/summary.csv")].clone()).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "epoch,update_events,quality_metric");
    assert!(lines[2].starts_with("2,48,"), "{summary}");
    let metrics = String::from_utf8(a[Path::new("sweep-levels/metrics.csv")].clone()).unwrap();
    for line in metrics.lines().skip(1) {
        for field in line.split(',').skip(1) {
            field.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn seed_flag_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("o1");
    ok(&memgan(&["--config", cfg, "--out", out.to_str().unwrap(), "train"]));
    let out2 = dir.path().join("o2");
    ok(&memgan(&["--config", cfg, "--out", out2.to_str().unwrap(), "--seed", "4", "train"]));
    assert_ne!(
        fs::read(out.join("train/metrics.csv")).unwrap(),
        fs::read(out2.join("train/metrics.csv")).unwrap()
    );
}

#[test]
fn cost_table_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = memgan(&["--out", dir.path().to_str().unwrap(), "cost"]);
    ok(&o);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("paper-discrepancy"));
    assert!(text.contains("35.7619 mW, 1529.7 µm²"));
    let csv = fs::read_to_string(dir.path().join("cost/schedule.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12);
}

#[test]
fn exit_codes_by_category() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();

    let o = memgan(&["--config", "/nonexistent/run.toml", "cost"]);
    assert_eq!(o.status.code(), Some(3));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "epochs = 3\n").unwrap();
    let o = memgan(&["--config", bad.to_str().unwrap(), "cost"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [config]"));

    let o = memgan(&["--out", d, "train"]);
    assert_eq!(o.status.code(), Some(2), "no dataset configured");

    let junk = dir.path().join("junk-idx");
    fs::write(&junk, [0u8; 64]).unwrap();
    let cfg = dir.path().join("junk.toml");
    fs::write(&cfg, format!("[data]\nimages = \"{}\"\n", junk.display())).unwrap();
    let o = memgan(&["--config", cfg.to_str().unwrap(), "--out", d, "train"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad IDX magic"));
}

#[test]
fn generate_under_other_device_is_spec_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    ok(&memgan(&["--config", cfg, "train"]));
    let dev = dir.path().join("dev64.toml");
    fs::write(&dev, "n_levels = 64\n").unwrap();
    let o = memgan(&["--config", cfg, "--device", dev.to_str().unwrap(), "generate"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spec mismatch"));
}
