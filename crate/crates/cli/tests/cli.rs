use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use helisample::spectral::{polygon_area, FrequencySupportSet, SupportParams};
use helisample::HelixGeometry;

/// Reduced bandwidth and grids so the full chain runs in seconds.
const SMALL: &str = "\
[phantom]
scale = 0.45
[sampling]
omega = 20.0
[recon]
volume = 16
detector_cols = 32
detector_rows = 16
";

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_helisample"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env("HELISAMPLE_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = run(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    match std::fs::read_dir(dir) {
        Ok(rd) => rd
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
            })
            .collect(),
        Err(_) => BTreeMap::new(),
    }
}

fn metrics(path: &Path) -> BTreeMap<String, f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for text in ["[sampling]\nomegaa = 3\n", "[geometry]\nR = 1.0\nh = 0.2\nZ = 0.4\nrho = 2.0\n", "{{"] {
        let cfg = write_config(tmp.path(), text);
        for cmd in ["design", "scan", "support"] {
            let o = run(&[cmd, "--config", cfg.to_str().unwrap()], &out);
            assert_eq!(o.status.code(), Some(2), "{cmd} {text:?}");
            assert!(files(&out).is_empty());
        }
    }
    let cfg = write_config(tmp.path(), "[sampling]\nomegaa = 3\n");
    let o = run(&["design", "--config", cfg.to_str().unwrap()], &out);
    assert!(String::from_utf8_lossy(&o.stderr).contains("omegaa"));
}

#[test]
fn missing_inputs_exit_3_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["filter", "recon", "compare"] {
        let o = run(&[cmd], tmp.path());
        assert_eq!(o.status.code(), Some(3), "{cmd}");
        assert!(files(tmp.path()).is_empty(), "{cmd}");
    }
}

#[test]
fn design_reports_exp2_reduction() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["design", "--preset", "exp2"], tmp.path());
    let m = metrics(&tmp.path().join("design.csv"));
    assert!((m["density_reduction_pct"] - 35.77).abs() <= 2.0, "{m:?}");
    assert!((m["count_reduction_pct"] - m["density_reduction_pct"]).abs() <= 2.0, "{m:?}");
    for name in ["matrix_T.csv", "matrix_U_dual.csv", "lattice_T.csv", "gain.csv"] {
        assert!(tmp.path().join(name).exists(), "{name}");
    }
}

#[test]
fn gain_curve_is_monotone_and_bounded() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["gain-curve", "--preset", "fig5"], tmp.path());
    let rows = csv_rows(&tmp.path().join("gain.csv"));
    assert_eq!(rows.len(), 200);
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0]);
        assert!(w[1][1] >= w[0][1] - 1e-12, "{w:?}");
    }
    assert!(rows.iter().all(|r| r[1] > 1.0 && r[1] <= 2.0));
}

#[test]
fn support_containment_and_polygons() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fine");
    ok(&["support", "--preset", "exp1", "--omega-v", "0,0.5"], &out);
    let fine = metrics(&out.join("support.csv"));
    assert!(fine["inside_min"] >= 0.98, "{fine:?}");

    // The ω_v > 0 section strictly contains the ω_v = 0 section.
    let g = HelixGeometry::new(2.5, 0.4, 1.0, 0.5).unwrap();
    let set = FrequencySupportSet::new(SupportParams::new(g, 66.0).unwrap());
    let poly = |i: usize| -> Vec<(f64, f64)> {
        csv_rows(&out.join(format!("polygon_w{i}.csv"))).iter().map(|r| (r[0], r[1])).collect()
    };
    let (p0, p1) = (poly(0), poly(1));
    assert!(polygon_area(&p1[1..]) > polygon_area(&p0[1..]));
    assert!(p0.iter().all(|&(m, k)| set.contains(m, k, 0.5)));

    let cfg = write_config(tmp.path(), "[sampling]\nex_grid = 32\n");
    let coarse_dir = tmp.path().join("coarse");
    ok(
        &["support", "--preset", "exp1", "--omega-v", "0,0.5", "--config", cfg.to_str().unwrap()],
        &coarse_dir,
    );
    let coarse = metrics(&coarse_dir.join("support.csv"));
    for (k, v) in &fine {
        assert!((v - coarse[k]).abs() < 0.005, "{k}: {v} vs {}", coarse[k]);
    }
}

fn chain(dir: &Path, cfg: &Path, threads: &str) -> String {
    let mut log = String::new();
    for cmd in ["scan", "filter", "recon", "compare"] {
        let o = Command::new(env!("CARGO_BIN_EXE_helisample"))
            .args([cmd, "--seed", "7", "--config", cfg.to_str().unwrap(), "--out-dir"])
            .arg(dir)
            .env("HELISAMPLE_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        log.push_str(&String::from_utf8(o.stdout).unwrap());
    }
    log
}

#[test]
fn pipeline_chain_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("scale = 0.45", "scale = 0.45\nnoise = 0.01"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let log_a = chain(&a, &cfg, "1");
    let log_b = chain(&b, &cfg, "2");
    assert_eq!(log_a, log_b);
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs");
    }
    assert!(fa.contains_key("metrics.csv") && fa.contains_key("truth.hcbv"));
}

#[test]
fn sparse_chain_uses_fewer_samples_and_reports_both_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    let log = chain(&out, &cfg, "1");
    let count = |tag: &str| -> f64 {
        let line = log.lines().find(|l| l.starts_with(&format!("samples_{tag} "))).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert!(1.0 - count("sparse") / count("standard") >= 0.30, "{log}");
    let m = metrics(&out.join("metrics.csv"));
    for key in ["mse_sparse", "ssim_sparse", "mse_standard", "ssim_standard", "mse_gap_rel"] {
        assert!(m[key].is_finite(), "{key}");
    }
}

#[test]
fn mismatched_inputs_are_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    chain(&out, &cfg, "1");
    let before = files(&out);

    // Sinograms from another geometry.
    let other = write_config(tmp.path(), &format!("{SMALL}[geometry]\nR = 2.2\nh = 0.2\nZ = 0.4\nrho = 0.5\n"));
    let o = run(&["filter", "--config", other.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(3));

    // Reference volume with other dimensions.
    let small = write_config(tmp.path(), &SMALL.replace("volume = 16", "volume = 12"));
    let side = tmp.path().join("side");
    for cmd in ["scan", "filter", "recon"] {
        ok(&[cmd, "--config", small.to_str().unwrap()], &side);
    }
    std::fs::copy(side.join("truth.hcbv"), out.join("truth.hcbv")).unwrap();
    let o = run(&["compare"], &out);
    assert_eq!(o.status.code(), Some(3));
    let after = files(&out);
    assert_eq!(before["metrics.csv"], after["metrics.csv"]);
}
