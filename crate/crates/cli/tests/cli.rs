use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use grr_core::io::{write_proxy, DateKey, ProxySeries};
use grr_core::var::ReducedForm;

fn grr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("summary line")).expect("JSON summary")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Simulated sample plus a run config with a small grid and few restarts.
fn setup(t: usize) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let t = t.to_string();
    ok(&grr(dir.path(), &["simulate", "--out", "sim", "--t", &t, "--seed", "7"]));
    let sim = dir.path().join("sim");
    let cfg = sim.join("run.toml");
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text = text.replace("horizon = 12", "horizon = 4");
    text = text.replace("restarts = 20", "restarts = 3");
    text = text.replace("size = 25", "grid = [0.0, 1.0, 3.0, 1e6]\nsize = 25");
    std::fs::write(&cfg, text).unwrap();
    (dir, sim)
}

fn read_artifact(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pipeline_runs_end_to_end() {
    let (_dir, sim) = setup(400);
    let est = ok(&grr(&sim, &["estimate", "-c", "run.toml"]));
    assert_eq!(est["n"], 3);
    assert_eq!(est["p"], 1);
    assert_eq!(est["k"], 1);
    let hash = est["config_hash"].as_str().unwrap().to_string();

    let tb = ok(&grr(&sim, &["taubar", "-c", "run.toml"]));
    assert_eq!(tb["config_hash"], hash.as_str());
    let report = read_artifact(&sim.join("out/taubar.json"));
    assert!(report["payload"]["bound"]["oracle_gap"].as_f64().unwrap() <= 1e-3);

    let b = ok(&grr(&sim, &["bounds", "-c", "run.toml"]));
    assert_eq!(b["cells"], 4 * 3 * 5);
    let csv = std::fs::read_to_string(sim.join("out/bounds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 60);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(&hash)));

    std::fs::write(
        sim.join("claims.toml"),
        "[[claims]]\nname = \"y1 up on impact\"\nkind = \"sign_positive\"\n[[claims.targets]]\nvariable = \"y1\"\nhorizons = [0]\n",
    )
    .unwrap();
    let bd = ok(&grr(&sim, &["breakdown", "-c", "run.toml", "--claims", "claims.toml"]));
    assert_eq!(bd["claims"][0]["tau_star"], "0.0");

    let info = ok(&grr(&sim, &["info", "-c", "run.toml", "--tau", "3"]));
    let kappa = info["kappa"].as_f64().unwrap();
    assert!((0.0..=1.02).contains(&kappa));

    let cm = ok(&grr(&sim, &["corrmap", "-c", "run.toml"]));
    assert_eq!(cm["pairs"], 1);

    let bm = ok(&grr(&sim, &["benchmark", "-c", "run.toml", "--normalize", "y1"]));
    assert_eq!(bm["cells"], 60);
    // the valid-IV limit sits on the point-identified response
    let rows = read_artifact(&sim.join("out/benchmark.json"));
    for r in rows["payload"].as_array().unwrap() {
        if r["tau"].as_f64() == Some(1e6) {
            assert_eq!(r["inside"], true, "{r}");
        }
    }
}

#[test]
fn estimate_is_byte_deterministic() {
    let (_dir, sim) = setup(300);
    ok(&grr(&sim, &["estimate", "-c", "run.toml"]));
    let first = std::fs::read(sim.join("out/reduced_form.json")).unwrap();
    ok(&grr(&sim, &["estimate", "-c", "run.toml"]));
    let second = std::fs::read(sim.join("out/reduced_form.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn validation_errors_exit_with_two() {
    let (_dir, sim) = setup(300);
    let out = grr(&sim, &["estimate", "-c", "run.toml", "--set", "var.lags=0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lag order"), "{}", stderr(&out));

    let out = grr(&sim, &["bounds", "-c", "run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("run `grr estimate` first"));

    let out = grr(&sim, &["estimate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = grr(&sim, &["estimate", "-c", "run.toml", "--set", "tau.grid=[1.0, 0.5]"]);
    assert_eq!(out.status.code(), Some(2));

    let out = grr(&sim, &["estimate", "-c", "run.toml", "--set", "var.unknown=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mixed_provenance_is_rejected() {
    let (_dir, sim) = setup(300);
    ok(&grr(&sim, &["estimate", "-c", "run.toml"]));
    let out = grr(&sim, &["taubar", "-c", "run.toml", "--set", "var.lags=2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rerun `grr estimate`"), "{}", stderr(&out));
    // a different seed is a different configuration as well
    let out = grr(&sim, &["taubar", "-c", "run.toml", "--seed", "99"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn contradictory_signs_exit_with_three() {
    let (_dir, sim) = setup(300);
    let cfg = sim.join("run.toml");
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text = text.replace("irf = []\n", "");
    // the impact rows of L span the space, so the first column would vanish
    for v in ["y1", "y2", "y3"] {
        for d in ["positive", "negative"] {
            text.push_str(&format!(
                "\n[[restrictions.irf]]\nvariable = \"{v}\"\nshock = 0\nhorizons = [0]\ndirection = \"{d}\"\n"
            ));
        }
    }
    std::fs::write(&cfg, text).unwrap();
    ok(&grr(&sim, &["estimate", "-c", "run.toml"]));
    let out = grr(&sim, &["taubar", "-c", "run.toml"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("empty sign-feasible sphere region"));
    let out = grr(&sim, &["bounds", "-c", "run.toml", "--set", "var.horizon=1"]);
    // horizon change invalidates the reduced form first
    assert_eq!(out.status.code(), Some(2));
    let out = grr(&sim, &["bounds", "-c", "run.toml"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

/// Proxies whose sample moments equal prescribed vectors exactly:
/// `m_t = z_tᵀa` with `z_t = L⁻¹û_t` and `a = (ZᵀZ/T)⁻¹M`.
fn proxies_with_moments(rf: &ReducedForm, targets: &[DVector<f64>]) -> Vec<ProxySeries> {
    let z = rf.chol.clone().solve_lower_triangular(&rf.residuals.transpose()).unwrap();
    let t = z.ncols() as f64;
    let gram: DMatrix<f64> = &z * z.transpose() / t;
    targets
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let a = gram.clone().cholesky().unwrap().solve(m);
            let vals: Vec<f64> = (0..z.ncols()).map(|c| z.column(c).dot(&a)).collect();
            let dates: Vec<DateKey> = rf.residual_dates.clone();
            ProxySeries::from_values(format!("zoo{}", i + 1), dates, &vals).unwrap()
        })
        .collect()
}

#[test]
fn taubar_on_point_identifying_zoo_reaches_tau0() {
    let (_dir, sim) = setup(500);
    ok(&grr(&sim, &["estimate", "-c", "run.toml"]));
    let rf: ReducedForm = serde_json::from_value(read_artifact(&sim.join("out/reduced_form.json"))["payload"].clone()).unwrap();
    let o0 = grr_core::rotation::random_rotation_seeded(3, 17).matrix;
    let tau0 = 2.0;
    let (m1, m2) = grr_core::quality::construct_point_id_zoo(&o0, tau0).unwrap();
    for p in proxies_with_moments(&rf, &[m1, m2]) {
        write_proxy(sim.join(format!("{}.csv", p.label)), &p).unwrap();
    }
    let cfg = sim.join("run.toml");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("proxies = [\"m1.csv\"]", "proxies = [\"zoo1.csv\", \"zoo2.csv\"]")
        .replace("self_sign = true", "self_sign = false");
    std::fs::write(&cfg, text).unwrap();
    ok(&grr(&sim, &["estimate", "-c", "run.toml"]));
    let tb = ok(&grr(&sim, &["taubar", "-c", "run.toml"]));
    let tau_bar: f64 = tb["tau_bar"].as_str().unwrap().parse().unwrap();
    assert!(tau_bar.is_finite());
    assert!(tau_bar >= tau0 * (1.0 - 1e-9), "{tau_bar}");
}
