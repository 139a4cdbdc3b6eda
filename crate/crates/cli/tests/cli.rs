use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lookback"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(name: &str) -> String {
    data(name).to_string_lossy().into_owned()
}

#[test]
fn validate_exit_codes() {
    for f in ["uniform.json", "identical.json", "pair.json", "dirac.json"] {
        let out = run(&["validate", "--input", &path(f), "--stdout"]);
        assert_eq!(out.status.code(), Some(0), "{f}");
        assert_eq!(json(&out)["valid"], true);
    }
    let out = run(&["validate", "--input", &path("crossed.json"), "--stdout"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["message"], "convex order violated at t_2, K=1");
    assert!(String::from_utf8_lossy(&out.stderr).contains("convex order violated at t_2, K=1"));

    assert_eq!(
        run(&["validate", "--input", &path("malformed.json")]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["validate", "--input", "/nonexistent.json"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["validate"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn arbitrage_blocks_pricing() {
    let out = run(&["price", "--input", &path("crossed.json"), "--stdout"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_config_is_a_schema_error() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let cfg = dir.join("bad_config.json");
    std::fs::write(&cfg, r#"{"payoff": {"type": "digital", "level": 0.5}}"#).unwrap();
    let out = run(&[
        "price",
        "--input",
        &path("uniform.json"),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(&cfg, r#"{"grid": {"nodes": 1}}"#).unwrap();
    let out = run(&[
        "price",
        "--input",
        &path("uniform.json"),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn price_reports() {
    let digital = json(&run(&[
        "price",
        "--input",
        &path("uniform.json"),
        "--config",
        &path("config_digital.json"),
        "--stdout",
    ]));
    assert!((digital["U"].as_f64().unwrap() - 0.5).abs() < 1e-4);
    let capped = json(&run(&[
        "price",
        "--input",
        &path("uniform.json"),
        "--config",
        &path("config_capped.json"),
        "--stdout",
    ]));
    assert!((capped["U"].as_f64().unwrap() - 1.5).abs() < 1e-4);
    assert!(capped["cost_identity"]["relative"].as_f64().unwrap() < 1e-9);
    assert_eq!(capped["config"]["payoff"]["cap"], 2.0);

    for cfg in [
        "config_digital.json",
        "config_capped.json",
        "config_table.json",
        "config_constant.json",
    ] {
        let out = json(&run(&[
            "price",
            "--input",
            &path("dirac.json"),
            "--config",
            &path(cfg),
            "--stdout",
        ]));
        assert!(
            (out["U"].as_f64().unwrap() - out["phi_spot"].as_f64().unwrap()).abs() < 1e-12,
            "{cfg}"
        );
    }
}

#[test]
fn price_writes_its_files() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("price_out");
    let _ = std::fs::remove_dir_all(&dir);
    let out = run(&["price", "--input", &path("pair.json"), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["price.json", "profile.csv", "integrand.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let profile = std::fs::read_to_string(dir.join("profile.csv")).unwrap();
    assert!(profile.starts_with("m,zeta_1,zeta_2,C\n"));
}

#[test]
fn hedge_tables() {
    let capped = run(&[
        "hedge-table",
        "--input",
        &path("uniform.json"),
        "--config",
        &path("config_capped.json"),
        "--stdout",
    ]);
    let table = String::from_utf8(capped.stdout).unwrap();
    assert!(table.starts_with("x,lambda_1\n"));
    let row = table
        .lines()
        .find(|l| l.starts_with("1.0000000000000000e0,"))
        .expect("x = 1 row");
    let lambda: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((lambda - 0.306853).abs() < 1e-4);

    let constant = run(&[
        "hedge-table",
        "--input",
        &path("pair.json"),
        "--config",
        &path("config_constant.json"),
        "--stdout",
    ]);
    let table = String::from_utf8(constant.stdout).unwrap();
    for line in table.lines().skip(1) {
        assert!(
            line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0),
            "{line}"
        );
    }

    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("hedge_out");
    let out = run(&[
        "hedge-table",
        "--input",
        &path("uniform.json"),
        "--config",
        &path("config_digital.json"),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let holdings: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("holdings.json")).unwrap()).unwrap();
    let rule = &holdings["digital_rules"][0];
    assert_eq!(rule["barrier"], 1.5);
    let strike = rule["strikes"][0].as_f64().unwrap();
    let profile = String::from_utf8(
        run(&[
            "profile",
            "--input",
            &path("uniform.json"),
            "--config",
            &path("config_digital.json"),
            "--stdout",
        ])
        .stdout,
    )
    .unwrap();
    let at = profile
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .find(|r| r[0] == 1.5)
        .expect("barrier on the grid");
    assert_eq!(strike, at[1]);
}

#[test]
fn simulate_dirac_is_exact() {
    let out = run(&[
        "simulate",
        "--input",
        &path("dirac.json"),
        "--config",
        &path("config_simulate_small.json"),
        "--stdout",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["estimate"], 0.0);
    assert_eq!(v["stderr"], 0.0);
    assert_eq!(v["marginal_fit"][0]["ks"], 0.0);
}

#[test]
fn too_many_truncated_paths() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let cfg = dir.join("truncating.json");
    std::fs::write(&cfg, r#"{"sim": {"n_paths": 200, "step": 0.0001, "max_steps": 3}}"#).unwrap();
    let out = run(&[
        "simulate",
        "--input",
        &path("uniform.json"),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn one_marginal_report() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let cfg = dir.join("one_identity.json");
    std::fs::write(
        &cfg,
        r#"{"one_marginal": {"payoff": "identity"}, "sim": {"n_paths": 2000, "step": 0.001}}"#,
    )
    .unwrap();
    let out = run(&[
        "one-marginal",
        "--input",
        &path("uniform.json"),
        "--config",
        cfg.to_str().unwrap(),
        "--stdout",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let (est, se) = (v["estimate"].as_f64().unwrap(), v["stderr"].as_f64().unwrap());
    assert!((est - 1.0).abs() < 4.0 * se + 0.01);
    assert_eq!(v["diagnostics"]["monotone_ok"], true);

    std::fs::write(&cfg, r#"{"one_marginal": {"payoff": "cube"}}"#).unwrap();
    let out = run(&[
        "one-marginal",
        "--input",
        &path("uniform.json"),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_flag_changes_the_sample() {
    let args = |seed: &'static str| {
        run(&[
            "simulate",
            "--input",
            &path("uniform.json"),
            "--config",
            &path("config_simulate_small.json"),
            "--seed",
            seed,
            "--stdout",
        ])
        .stdout
    };
    let a = args("1");
    assert_eq!(a, args("1"));
    assert_ne!(a, args("2"));
}
