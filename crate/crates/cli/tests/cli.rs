use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gvcplm::sim::scenario::{gen_scenario, ScenarioSpec};
use tempfile::TempDir;

fn gvcplm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvcplm")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a small Poisson data set and its role map.
fn write_data(dir: &Path) -> (String, String) {
    let spec = ScenarioSpec {
        n: 150,
        beta_true: vec![0.3, 0.0, 0.2],
        seed: 5,
        ..ScenarioSpec::example41()
    };
    let data = gen_scenario(&spec).unwrap();
    let mut csv = String::from("u,x2,z1,z2,\"z 3\",y\n");
    for i in 0..data.n() {
        let z = data.z_row(i);
        csv.push_str(&format!("{},{},{},{},{},{}\n", data.u()[i], data.x_row(i)[1], z[0], z[1], z[2], data.y()[i]));
    }
    let data_path = dir.join("data.csv");
    fs::write(&data_path, csv).unwrap();
    let roles_path = dir.join("roles.toml");
    fs::write(&roles_path, "u = \"u\"\nx2 = \"x\"\nz1 = \"z\"\nz2 = \"z\"\n\"z 3\" = \"z\"\ny = \"y\"\n").unwrap();
    (data_path.display().to_string(), roles_path.display().to_string())
}

#[test]
fn fit_writes_artifacts_with_embedded_config() {
    let dir = TempDir::new().unwrap();
    let (data, roles) = write_data(dir.path());
    let out = dir.path().join("fit");
    let res = gvcplm(&[
        "fit", "--data", &data, "--roles", &roles, "--family", "poisson", "--h", "0.2", "--penalty", "scad",
        "--lambda-policy", "gcv", "-o", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["family"], "poisson");
    assert_eq!(json["result"]["fit"]["z_names"][2], "z 3");
    assert_eq!(json["result"]["fit"]["beta_hat"].as_array().unwrap().len(), 3);
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert!(curves.starts_with("# command = \"fit\""));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("bandwidth used: 0.200000"));
    assert!(out.join("path.csv").is_file());
}

#[test]
fn rerun_from_resolved_config_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (data, roles) = write_data(dir.path());
    let a = dir.path().join("a");
    let res = gvcplm(&[
        "test", "--data", &data, "--roles", &roles, "--family", "poisson", "--h", "0.25", "--null-x", "2",
        "--bootstrap", "20", "--seed", "9", "-o", a.to_str().unwrap(), "--threads", "1",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let b = dir.path().join("b");
    let res = gvcplm(&[
        "test", "--config", a.join("config.toml").to_str().unwrap(), "-o", b.to_str().unwrap(), "--threads", "3",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let strip = |p: &Path| fs::read_to_string(p).unwrap().replace(b.to_str().unwrap(), a.to_str().unwrap());
    assert_eq!(strip(&a.join("results.json")), strip(&b.join("results.json")));
    assert_eq!(strip(&a.join("bootstrap.csv")), strip(&b.join("bootstrap.csv")));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("results.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 9);
    let p = json["result"]["glrt"]["p_bootstrap"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for (name, threads) in [("one", "1"), ("many", "4")] {
        let out = dir.path().join(name);
        let res = gvcplm(&[
            "simulate", "--scenario", "example41", "--methods", "scad,l1,oracle", "--reps", "3",
            "--seed", "7", "--threads", threads, "-o", out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", stderr(&res));
        outputs.push(fs::read_to_string(out.join("results.json")).unwrap().replace(out.to_str().unwrap(), "OUT"));
        assert!(out.join("timings.json").is_file());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(!outputs[0].contains("time_mean"));
}

#[test]
fn select_l0_and_bandwidth() {
    let dir = TempDir::new().unwrap();
    let (data, roles) = write_data(dir.path());
    let out = dir.path().join("l0");
    let res = gvcplm(&[
        "select", "--data", &data, "--roles", &roles, "--family", "poisson", "--h", "0.25", "--penalty", "l0",
        "--criterion", "bic", "-o", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let subsets = fs::read_to_string(out.join("subsets.csv")).unwrap();
    assert_eq!(subsets.lines().filter(|l| !l.starts_with('#')).count(), 1 + 8);

    let out = dir.path().join("bw");
    let res = gvcplm(&[
        "bandwidth", "--data", &data, "--roles", &roles, "--family", "poisson", "--h-grid", "0.15,0.25,0.4",
        "--folds", "3", "--seed", "2", "-o", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("undersmoothed h"));
}

#[test]
fn config_errors_exit_2_and_list_every_problem() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    let res = gvcplm(&["validate", empty.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err = stderr(&res);
    assert!(err.contains("`command` is required") && err.contains("`data`") && err.contains("`scenario`"), "{err}");

    let res = gvcplm(&["simulate", "--scenario", "example41"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("`seed` is required"));

    let (data, _) = write_data(dir.path());
    let roles = dir.path().join("two_y.toml");
    fs::write(&roles, "u = \"u\"\nz1 = \"y\"\ny = \"y\"\n").unwrap();
    let res = gvcplm(&["fit", "--data", &data, "--roles", roles.to_str().unwrap(), "--family", "poisson"]);
    assert_eq!(res.status.code(), Some(2));
    let err = stderr(&res);
    assert!(err.contains("duplicate role y") && err.contains("`h` is required"), "{err}");
}

#[test]
fn validate_echoes_the_preset_scenario() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(&cfg, "command = \"simulate\"\nscenario = \"example41\"\nseed = 1\n").unwrap();
    let res = gvcplm(&["validate", cfg.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("family = \"poisson\""));
    assert!(text.contains("h = 0.125"));
    assert!(text.contains("5.5 + 0.1*exp(2*u - 1)"));
}

#[test]
fn bad_data_exits_3() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "u,z1,y\n0.1,1.0,2\n0.2,,3\n").unwrap();
    let roles = dir.path().join("roles.toml");
    fs::write(&roles, "u = \"u\"\nz1 = \"z\"\ny = \"y\"\n").unwrap();
    let res = gvcplm(&[
        "fit", "--data", data.to_str().unwrap(), "--roles", roles.to_str().unwrap(), "--family", "poisson", "--h", "0.3",
        "-o", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", stderr(&res));
}
