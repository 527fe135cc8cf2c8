use std::fs;
use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
seed = 3
trials = 4

[network]
num_cells = 7
users_per_cell = 30
activity_prob = 0.1
seq_len = 16
antennas = 2
"#;

fn run(dir: &Path, args: &[&str]) -> std::process::Output {
    let cfg = dir.join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    Command::new(env!("CARGO_BIN_EXE_coopdetect"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn predict_writes_the_analytic_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["predict", "--arch", "coop", "--bbn", "1,2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["config.toml", "layout.csv", "se_trace.csv", "fig4_cdf.csv", "fig3_tau_vs_radius.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(out.join("profile_coop_bbn2_analytic.csv").exists());
    assert!(!out.join("profile_coop_bbn2_empirical.csv").exists());
    assert!(header(&out.join("fig4_cdf.csv")).starts_with('#'));
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(d.path(), &["simulate", "--seed", "9", "--q-bits", "2", "--arch", "coop"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["fig4_cdf.csv", "amp_tau.csv", "validate.csv", "scenario.bin", "lmax_table.csv"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs between identical runs");
    }
    let cfg = fs::read_to_string(a.path().join("out/config.toml")).unwrap();
    assert!(cfg.contains("seed = 9"));
}

#[test]
fn sweep_and_quantize_sweep_name_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["sweep", "--param", "antennas", "--values", "1,2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/fig6_antennas.csv").exists());

    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["quantize-sweep", "--antennas", "1", "--q-bits", "1,2", "--zeta", "0.95"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/fig8_quant.csv").exists());
}

#[test]
fn bad_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["predict", "--arch", "tin", "--bbn", "2"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--bbn"));
}
