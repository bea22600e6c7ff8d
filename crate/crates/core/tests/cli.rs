use std::path::Path;
use std::process::{Command, Output};

use heat_trace::io::{read_trace_csv, RunConfig, EXIT_CONFIG, EXIT_PASS};

fn heat_trace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heat-trace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
seed = 5
methods = ["galerkin", "spectral_w2"]

[torus]
dim = 1

[potential]
kind = "random"
band = 2
mean = 0.4
amplitude = 0.3

[grid]
t_min = 0.001
t_max = 0.5
count = 12

[galerkin]
cutoff = 64
"#;

#[test]
fn defaults_print_as_loadable_toml() {
    let out = heat_trace(&["--print-defaults"]);
    assert!(out.status.success());
    let cfg = RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn config_errors_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[grid]\nt_min = 0.9\nt_max = 0.5\n");
    let out = heat_trace(&["trace", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));

    let cfg = write_config(dir.path(), "unknown_key = 3\n");
    assert_eq!(
        heat_trace(&["trace", "--config", &cfg]).status.code(),
        Some(EXIT_CONFIG)
    );
    assert_eq!(heat_trace(&[]).status.code(), Some(EXIT_CONFIG));
}

#[test]
fn trace_then_fit_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = out_dir.to_string_lossy().into_owned();
    let run = heat_trace(&["trace", "--config", &cfg, "--out", &out]);
    assert_eq!(
        run.status.code(),
        Some(EXIT_PASS),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let samples = read_trace_csv(&out_dir.join("trace.csv")).unwrap();
    assert_eq!(samples.len(), 24);
    assert!(out_dir.join("report.json").exists());

    let fit_cfg = format!(
        "{SMALL}\n[fit]\nm = 1\ninput = \"{}\"\n",
        out_dir.join("trace.csv").display()
    );
    let cfg = write_config(dir.path(), &fit_cfg);
    let fit_out = dir.path().join("fit").to_string_lossy().into_owned();
    let run = heat_trace(&["fit", "--config", &cfg, "--out", &fit_out]);
    assert_eq!(
        run.status.code(),
        Some(EXIT_PASS),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let table = std::fs::read_to_string(dir.path().join("fit/fit.csv")).unwrap();
    assert!(table.starts_with("method,k,coefficient"));
    assert!(table.lines().any(|l| l.starts_with("galerkin,1,")));

    let narrow = write_config(dir.path(), &SMALL.replace("t_min = 0.001", "t_min = 0.01"));
    let run = heat_trace(&["fit", "--config", &narrow, "--out", &fit_out]);
    assert_ne!(run.status.code(), Some(EXIT_PASS));
    assert!(String::from_utf8_lossy(&run.stderr).contains("decades"));
}

#[test]
fn seed_flag_changes_the_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    heat_trace(&[
        "trace",
        "--config",
        &cfg,
        "--seed",
        "1",
        "--out",
        a.to_str().unwrap(),
    ]);
    heat_trace(&[
        "trace",
        "--config",
        &cfg,
        "--seed",
        "2",
        "--out",
        b.to_str().unwrap(),
    ]);
    let ta = std::fs::read(a.join("trace.csv")).unwrap();
    let tb = std::fs::read(b.join("trace.csv")).unwrap();
    assert_ne!(ta, tb);
}
