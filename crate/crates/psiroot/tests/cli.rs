use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use psiroot::formats::{read_counts, read_sample, read_state};
use psiroot_core::basis::{dft_unitary, ContinuousBasis};
use psiroot_core::sampling::{rng_from_seed, sample_coordinate_with, sample_momentum_with, sample_register_with};
use psiroot_core::state::{BasisTag, StateVector};
use serde_json::Value;

fn psiroot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psiroot"))
        .args(args)
        .env("PSIROOT_OUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn register_simulation_counts_sum_to_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = psiroot(dir.path(), &["simulate", "--model", "register", "--s", "256", "--n", "10000", "--m", "10000", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let counts = json(&dir.path().join("counts.json"));
    let sum = |k: &str| counts[k].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum::<u64>();
    assert_eq!(counts["direct"].as_array().unwrap().len(), 256);
    assert_eq!(sum("direct"), 10_000);
    assert_eq!(sum("conjugate"), 10_000);
}

#[test]
fn simulated_files_parse_to_the_drawn_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = psiroot(dir.path(), &["simulate", "--s", "3", "--n", "200", "--m", "150", "--seed", "11", "--scale", "0.8"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let basis = ContinuousBasis::with_scale(3, 0.8).unwrap();
    let mut rng = rng_from_seed(11);
    let truth = StateVector::random(3, BasisTag::of_continuous(&basis), &mut rng).unwrap();
    let x = sample_coordinate_with(&truth, &basis, 200, &mut rng).unwrap();
    let p = sample_momentum_with(&truth, &basis, 150, &mut rng).unwrap();

    assert_eq!(read_state(&dir.path().join("state.json")).unwrap(), truth);
    let cx = read_sample(&dir.path().join("coordinate.csv")).unwrap();
    assert_eq!(cx.scale, Some(0.8));
    assert_eq!(cx.sample, x);
    assert_eq!(read_sample(&dir.path().join("momentum.csv")).unwrap().sample, p);

    let out = psiroot(dir.path(), &["simulate", "--model", "register", "--s", "8", "--n", "50", "--m", "0", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let d = dft_unitary(8).unwrap();
    let mut rng = rng_from_seed(2);
    let truth = StateVector::random(8, BasisTag::of_discrete(&d), &mut rng).unwrap();
    let counts = sample_register_with(&truth, &d, 50, 0, &mut rng).unwrap();
    assert_eq!(read_counts(&dir.path().join("counts.json")).unwrap(), counts);
}

#[test]
fn pipeline_is_deterministic() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let sim = psiroot(d, &["simulate", "--s", "4", "--n", "400", "--m", "400", "--seed", "3"]);
        assert_eq!(sim.status.code(), Some(0), "{}", stderr(&sim));
        let c = d.join("coordinate.csv");
        let p = d.join("momentum.csv");
        let est = psiroot(
            d,
            &["estimate", "--s", "4", "--coordinate", c.to_str().unwrap(), "--momentum", p.to_str().unwrap(), "--grid"],
        );
        assert_eq!(est.status.code(), Some(0), "{}", stderr(&est));
        let r = d.join("estimate.json");
        let t = psiroot(d, &["test", "--estimate", r.to_str().unwrap(), "--reference", d.join("state.json").to_str().unwrap()]);
        assert_eq!(t.status.code(), Some(0), "{}", stderr(&t));
        let a = psiroot(d, &["analyze", "--result", r.to_str().unwrap()]);
        assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
        ["estimate.json", "grid_coordinate.csv", "grid_momentum.csv", "test.json", "analysis.json"]
            .map(|name| fs::read(d.join(name)).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn estimate_reports_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    psiroot(d, &["simulate", "--s", "3", "--n", "1000", "--m", "0", "--seed", "5", "--real"]);
    let c = d.join("coordinate.csv");
    let out = psiroot(d, &["estimate", "--s", "3", "--coordinate", c.to_str().unwrap(), "--strict"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = json(&d.join("estimate.json"));
    for key in ["estimate", "lambda", "loglik", "iterations", "residual", "converged", "floor_hits", "phases_unidentified"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["converged"], true);
    assert_eq!(r["phases_unidentified"], true);
    assert!((r["lambda"].as_f64().unwrap() / 1000.0 - 1.0).abs() < 1e-8);

    let out = psiroot(d, &["test", "--estimate", d.join("estimate.json").to_str().unwrap(), "--reference", d.join("state.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let t = json(&d.join("test.json"));
    assert_eq!(t["dof"], 2);
    for key in ["statistic", "p_value", "alpha"] {
        assert!(t[key].is_number(), "missing {key}");
    }
}

#[test]
fn strict_non_convergence_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    psiroot(d, &["simulate", "--s", "4", "--n", "300", "--m", "300", "--seed", "1"]);
    let c = d.join("coordinate.csv");
    let args = ["estimate", "--s", "4", "--coordinate", c.to_str().unwrap(), "--max-iterations", "1", "--restarts", "0"];
    let lenient = psiroot(d, &args);
    assert_eq!(lenient.status.code(), Some(0));
    assert_eq!(json(&d.join("estimate.json"))["converged"], false);
    let mut strict = args.to_vec();
    strict.push("--strict");
    let out = psiroot(d, &strict);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("did not converge"));
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let headerless = d.join("headerless.csv");
    fs::write(&headerless, "0.5\n1.5\n").unwrap();
    let out = psiroot(d, &["estimate", "--s", "2", "--coordinate", headerless.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(&format!("{}:1:", headerless.display())), "{}", stderr(&out));

    let untagged = d.join("untagged.csv");
    fs::write(&untagged, "# scale=1\n0.5\n").unwrap();
    let out = psiroot(d, &["estimate", "--s", "2", "--coordinate", untagged.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("untagged.csv:1: missing space tag"));

    let empty = d.join("empty.csv");
    fs::write(&empty, "# space=coordinate scale=1\n").unwrap();
    let out = psiroot(d, &["estimate", "--s", "2", "--coordinate", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no observations"));

    let nan = d.join("nan.csv");
    fs::write(&nan, "# space=momentum scale=1\n0.5\nNaN\n").unwrap();
    let out = psiroot(d, &["estimate", "--s", "2", "--momentum", nan.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nan.csv:3:"));

    let out = psiroot(d, &["estimate", "--s", "2", "--coordinate", nan.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let counts = d.join("counts.json");
    fs::write(&counts, r#"{"direct": [3, -1], "conjugate": [1, 1]}"#).unwrap();
    let out = psiroot(d, &["estimate", "--model", "register", "--counts", counts.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("direct[1] is negative"));

    let out = psiroot(d, &["estimate", "--s", "2", "--coordinate", d.join("absent.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = psiroot(d, &["simulate", "--model", "sideways", "--s", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = psiroot(d, &["estimate", "--s", "2"]);
    assert_eq!(out.status.code(), Some(2));

    let state = d.join("state.json");
    fs::write(&state, r#"{"s": 1, "re": [1.0], "im": [0.0], "basis": {"kind": "hermite", "scale": 1.0}, "extra": 1}"#).unwrap();
    let out = psiroot(d, &["simulate", "--state", state.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown field"));
}

#[test]
fn out_dir_flag_overrides_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let out = psiroot(
        env_dir.path(),
        &["ehrenfest-check", "--s", "6", "--out-dir", flag_dir.path().to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(flag_dir.path().join("ehrenfest.json").exists());
    assert!(!env_dir.path().join("ehrenfest.json").exists());
}

#[test]
fn ehrenfest_check_reports_and_fails_strictly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = psiroot(d, &["ehrenfest-check", "--potential", "harmonic", "--s", "20", "--strict"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = json(&d.join("ehrenfest.json"));
    assert_eq!(r["pass"], true);
    assert!(r["max_residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(r["residual_matrix"].as_array().unwrap().len(), 20);
    assert!(r["tolerance"].is_number());

    let out = psiroot(d, &["ehrenfest-check", "--s", "20", "--perturb", "4:1e-3", "--strict"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&d.join("ehrenfest.json"))["pass"], false);

    let out = psiroot(d, &["ehrenfest-check", "--potential", "quartic", "--s", "8"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&d.join("ehrenfest.json"))["pass"], false);
}

#[test]
fn homogeneity_and_monte_carlo() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (seed, sub) in [("1", "a"), ("2", "b")] {
        let sd = d.join(sub);
        let sd = sd.to_str().unwrap();
        let args = ["simulate", "--model", "register", "--s", "4", "--n", "500", "--m", "500", "--seed", seed, "--out-dir", sd];
        assert_eq!(psiroot(d, &args).status.code(), Some(0));
        let counts = format!("{sd}/counts.json");
        let out = psiroot(d, &["estimate", "--model", "register", "--counts", &counts, "--out-dir", sd]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let a = d.join("a/estimate.json");
    let b = d.join("b/estimate.json");
    let out = psiroot(d, &["test", "--estimate", a.to_str().unwrap(), "--other", b.to_str().unwrap(), "--dof", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let t = json(&d.join("test.json"));
    assert_eq!(t["test"], "homogeneity");
    assert_eq!(t["dof"], 5);
    assert!(t["note"].as_str().unwrap().contains("Monte Carlo"));

    let mc = |sub: &str| {
        let sd = d.join(sub);
        let args = ["analyze", "--trials", "6", "--s", "3", "--n", "300", "--seed", "9", "--real", "--out-dir", sd.to_str().unwrap()];
        let out = psiroot(d, &args);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        fs::read(sd.join("montecarlo.json")).unwrap()
    };
    let first = mc("mc1");
    assert_eq!(first, mc("mc2"));
    let summary: Value = serde_json::from_slice(&first).unwrap();
    let rows = summary["outcomes"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row["trial"], i);
        assert_eq!(row["seed"], 9 + i as u64);
    }
}
