use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use hypersym_core::datagen::load_datasets;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hypersym-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypersym")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_writes_default_bundle() {
    let dir = scratch("generate");
    let out = dir.join("gent.csv");
    let o = run(&["generate", "--model", "gent", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("ln1m"));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 151);
    assert_eq!(load_datasets(&out).unwrap().total_points(), 150);
}

#[test]
fn generate_is_reproducible_with_noise() {
    let dir = scratch("noise");
    let paths: Vec<PathBuf> = (0..2).map(|i| dir.join(format!("h{i}.csv"))).collect();
    for p in &paths {
        let o = run(&["generate", "--model", "holzapfel", "--noise", "0.01", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap());
    let clean = dir.join("clean.csv");
    run(&["generate", "--model", "holzapfel", "--out", clean.to_str().unwrap()]);
    assert_ne!(fs::read(&paths[0]).unwrap(), fs::read(&clean).unwrap());
}

#[test]
fn unknown_model_is_a_usage_error() {
    let o = run(&["generate", "--model", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn missing_arguments_exit_with_usage_code() {
    assert_eq!(run(&["discover"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn empty_data_is_a_data_error() {
    let dir = scratch("empty");
    let data = dir.join("empty.csv");
    fs::write(&data, "").unwrap();
    assert_eq!(run(&["discover", "--data", data.to_str().unwrap()]).status.code(), Some(3));
    fs::write(&data, "mode,control,stress\n").unwrap();
    assert_eq!(run(&["discover", "--data", data.to_str().unwrap()]).status.code(), Some(3));
    let missing = dir.join("missing.csv");
    assert_eq!(run(&["discover", "--data", missing.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = scratch("config");
    let data = dir.join("d.csv");
    run(&["generate", "--model", "demiray", "--out", data.to_str().unwrap()]);
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "[gp]\npopulatoins = 4\n").unwrap();
    let o = run(&["discover", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("populatoins"));
}

#[test]
fn discover_recovers_demiray_and_writes_reports() {
    let dir = scratch("discover");
    let data = dir.join("d.csv");
    run(&["generate", "--model", "demiray", "--out", data.to_str().unwrap()]);
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "seed = 1\n[gp]\npopulations = 4\nworkers = 1\niterations = 60\nearly_stop_loss = 1e-28\n").unwrap();
    let out = dir.join("report");
    let o = run(&[
        "discover",
        "--data",
        data.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--resolution",
        "30",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("generation="));
    for f in ["front.csv", "best.txt", "convexity.txt", "fit_ut.csv", "fit_uc.csv", "fit_ss.csv", "fit_ss_dense.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let best = fs::read_to_string(out.join("best.txt")).unwrap();
    assert!(best.contains("exp("), "{best}");
    assert!(best.contains("r2_ut = 1.000000"), "{best}");
    assert!(fs::read_to_string(out.join("front.csv")).unwrap().starts_with("complexity,loss,score,expression\n"));
    assert_eq!(fs::read_to_string(out.join("fit_ut_dense.csv")).unwrap().lines().count(), 31);

    let fit = dir.join("fit");
    let o = run(&[
        "export-fit",
        "--best",
        out.join("best.txt").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        fit.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("R2 ss: 1.000000"));
}

#[test]
fn export_fit_of_mismatched_model() {
    let dir = scratch("export");
    let data = dir.join("gent.csv");
    run(&["generate", "--model", "gent", "--out", data.to_str().unwrap()]);
    let out = dir.join("fit");
    let o = run(&[
        "export-fit",
        "--expr",
        "0.017*exp(27.91*(I2-3))",
        "--data",
        data.to_str().unwrap(),
        "--resolution",
        "12",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(!text.contains("R2 ut: 1.000000"), "{text}");
    let csv = fs::read_to_string(out.join("fit_ut.csv")).unwrap();
    assert!(csv.starts_with("control,observed,predicted\n"));
    assert_eq!(csv.lines().count(), 51);
    assert_eq!(fs::read_to_string(out.join("fit_ut_dense.csv")).unwrap().lines().count(), 13);
}

#[test]
fn check_convexity_reports_and_writes_surface() {
    let dir = scratch("convexity");
    let surface = dir.join("surface.csv");
    let o = run(&[
        "check-convexity",
        "--expr",
        "0.5*(I1-3) + 0.1*square(I2-3)",
        "--steps",
        "21",
        "--out",
        surface.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("grid convex: Yes"), "{text}");
    assert!(text.contains("at (1.0000, 1.0000)"), "{text}");
    let csv = fs::read_to_string(&surface).unwrap();
    assert!(csv.starts_with("lambda1,lambda2,psi,flag\n"));
    assert_eq!(csv.lines().count(), 21 * 21 + 1);
}

#[test]
fn wide_range_flags_nonconvex_stretch_model() {
    let o = run(&["check-convexity", "--expr", "0.0079*l1^-19", "--param", "stretch", "--range", "0.5,2.0", "--steps", "31"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("grid convex: No"), "{}", stdout(&o));
}

#[test]
fn malformed_expression_reports_position() {
    let o = run(&["check-convexity", "--expr", "0.5*(I1-3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at 9"));
}

#[test]
fn robustness_table_for_noiseless_demiray() {
    let dir = scratch("robustness");
    let out = dir.join("table.csv");
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "[gp]\npopulations = 4\nworkers = 1\niterations = 40\nearly_stop_loss = 1e-28\n").unwrap();
    let o = run(&[
        "robustness",
        "--model",
        "demiray",
        "--sigmas",
        "0",
        "--seeds",
        "1,2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "sigma,seed,mse,expression,form_match,constants_match");
    assert_eq!(rows.len(), 3);
    assert!(rows[1..].iter().all(|r| r.ends_with(",true,true")), "{csv}");
    assert!(stdout(&o).contains("2/2"));
}
