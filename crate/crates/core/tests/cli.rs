use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cmflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmflow")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().next().unwrap_or_default()).unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.lines().count(), 1, "stderr: {text}");
    serde_json::from_str(text.trim()).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn flow_writes_artifacts_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = cmflow(&[
            "flow", "--grid", "circle:256", "--k", "1", "--f", "harmonic:0.3@2", "--theta", "1.0", "--mesh", "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["config.json", "timeseries.csv", "metrics.csv", "final_h.json", "summary.json", "final_mesh.obj"] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs between identical runs");
    }
    let header = read(&a, "timeseries.csv").lines().next().unwrap().to_string();
    assert_eq!(header, "t,dt,J,speed_sup,min_h,max_h,r,R,sigma_min,sigma_max,lambda_max,w11");
    let config: serde_json::Value = serde_json::from_str(&read(&a, "config.json")).unwrap();
    assert_eq!(config["schema"], 1);
    assert_eq!(config["grid"], "circle:256");
    assert_eq!(config["f"], "harmonic:0.3@2");
    let summary: serde_json::Value = serde_json::from_str(&read(&a, "summary.json")).unwrap();
    // theta = 1 is off the critical dilation, so a single run leaves the steady state
    assert!(["expanded", "shrank"].contains(&summary["classification"].as_str().unwrap()));
}

#[test]
fn sweep_theta_finds_unit_circle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cmflow(&[
        "sweep-theta", "--grid", "circle:64", "--k", "1", "--f", "constant:1", "--h0", "ball:1.3", "--jobs", "2", "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["converged"], true);
    // the steady circle has radius 1
    let theta = v["theta_star"].as_f64().unwrap();
    assert!((theta * 1.3 - 1.0).abs() < 1e-6, "theta* = {theta}");
    assert!(tmp.path().join("probes.json").exists());
}

#[test]
fn xi_constant_density_is_zero() {
    let out = cmflow(&["xi", "--grid", "latlong:96x192", "--f", "constant:1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    for c in v["xi"].as_array().unwrap() {
        assert!(c.as_f64().unwrap().abs() < 1e-14);
    }
}

#[test]
fn verify_chou_wang_passes() {
    let out = cmflow(&["verify", "chou-wang", "--n", "1000", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["pass"], true);
    assert_eq!(v["seed"], 7);
    assert_eq!(v["population"], 1010);
}

#[test]
fn verify_ellipsoid_passes() {
    let out = cmflow(&["verify", "ellipsoid", "--a", "2", "--b", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["pass"], true);
}

#[test]
fn elliptic_fourier_circle() {
    let out = cmflow(&["elliptic", "--grid", "circle:128", "--f", "harmonic:0.3@2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["method"], "fourier_circle");
    assert!(v["residual_sup"].as_f64().unwrap() < 1e-10);
}

#[test]
fn unknown_flag_is_config_error() {
    let out = cmflow(&["flow", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["error"], "config");
    assert_eq!(e["exit_code"], 2);
}

#[test]
fn bad_grid_is_config_error() {
    let out = cmflow(&["xi", "--grid", "latlong:8x9"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn first_harmonic_is_unsolvable() {
    // 1/f = 1 + 0.3 cos(phi) has a first moment
    let out = cmflow(&["elliptic", "--grid", "circle:64", "--f", "harmonic:0.3@1"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "unsolvable");
}

#[test]
fn bracket_must_straddle() {
    let out = cmflow(&[
        "sweep-theta", "--grid", "circle:32", "--f", "constant:1", "--theta-lo", "1.5", "--theta-hi", "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("straddle"));
}

#[test]
fn config_file_values_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "grid = \"latlong:16x32\"\nf = \"exponential:0.3,0,0\"\n").unwrap();
    let out = cmflow(&["xi", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let xi = stdout_json(&out)["xi"].as_array().unwrap().clone();
    assert!((xi[0].as_f64().unwrap() + 0.3).abs() < 1e-9);

    let out = cmflow(&["xi", "--config", cfg.to_str().unwrap(), "--f", "constant:2"]);
    let xi = stdout_json(&out)["xi"].as_array().unwrap().clone();
    assert!(xi[0].as_f64().unwrap().abs() < 1e-14);

    fs::write(&cfg, "gird = \"circle:8\"\n").unwrap();
    let out = cmflow(&["xi", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tabulated_density_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("f.txt");
    let mut text = String::from("# grid circle:16\n");
    for _ in 0..16 {
        text.push_str("2.0\n");
    }
    fs::write(&path, text).unwrap();
    let spec = format!("file:{}", path.display());
    let out = cmflow(&["xi", "--grid", "circle:16", "--f", &spec]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cmflow(&["xi", "--grid", "circle:32", "--f", &spec]);
    assert_eq!(out.status.code(), Some(2));
}
