use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn mimfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimfair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// Cells equal as text, or as numbers within `tol`.
fn assert_rows_match(got: &[Vec<String>], want: &[Vec<String>], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert_eq!(g.len(), w.len());
        for (a, b) in g.iter().zip(w) {
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() <= tol, "{a} vs {b} in {g:?}"),
                _ => assert_eq!(a, b, "in {g:?}"),
            }
        }
    }
}

fn audit_into(dir: &Path, model: &Path) -> Output {
    mimfair(&[
        "audit",
        "--model",
        model.to_str().unwrap(),
        "--data",
        fixture("audit_data.csv").to_str().unwrap(),
        "--schema",
        fixture("audit_schema.cfg").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn audit_matches_golden_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let out = audit_into(dir.path(), &fixture("audit_model.cfg"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let influence = read_csv(&dir.path().join("influence.csv"));
    assert_rows_match(&influence, &read_csv(&fixture("audit_influence_golden.csv")), 1e-12);
    let fairness = read_csv(&dir.path().join("fairness.csv"));
    assert_rows_match(&fairness, &read_csv(&fixture("audit_fairness_golden.csv")), 1e-12);
}

#[test]
fn zero_weight_model_has_no_influence() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zero.cfg");
    std::fs::write(&model, "model=linear_logistic\nn_features=2\nweights=0,0\nbias=0\n").unwrap();
    let out = audit_into(dir.path(), &model);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for row in read_csv(&dir.path().join("influence.csv")) {
        assert_eq!(row[3].parse::<f64>().unwrap(), 0.0, "{row:?}");
    }
    let fairness = read_csv(&dir.path().join("fairness.csv"));
    let value = |m: &str| fairness.iter().find(|r| r[1] == m).unwrap()[2].clone();
    assert_eq!(value("demographic_disparity"), "0");
    assert_eq!(value("disparate_impact"), "1");
}

#[test]
fn missing_schema_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = mimfair(&[
        "audit",
        "--model",
        fixture("audit_model.cfg").to_str().unwrap(),
        "--data",
        fixture("audit_data.csv").to_str().unwrap(),
        "--schema",
        dir.path().join("absent.cfg").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}

#[test]
fn bad_label_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "x,z,y\n0.1,0,1\n0.2,1,2\n").unwrap();
    let out = mimfair(&[
        "audit",
        "--model",
        fixture("audit_model.cfg").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--schema",
        fixture("audit_schema.cfg").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("`y`"), "{err}");
}

#[test]
fn pscf_demo_prints_key_values() {
    let out = mimfair(&["pscf-demo", "--n", "20000", "--seed", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["mse_pscf", "mse_mim", "delta_sq", "residual"] {
        let line = text.lines().find(|l| l.starts_with(&format!("{key}="))).unwrap();
        line[key.len() + 1..].parse::<f64>().unwrap();
    }
}

#[test]
fn pscf_demo_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scm.cfg");
    std::fs::write(&cfg, "scm.theta_m=1,2\n").unwrap();
    let out = mimfair(&["pscf-demo", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_then_audit_mixture() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("mim.cfg");
    let out = mimfair(&[
        "train",
        "--data",
        fixture("audit_data.csv").to_str().unwrap(),
        "--schema",
        fixture("audit_schema.cfg").to_str().unwrap(),
        "--method",
        "mim",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&model).unwrap().contains("model=linear_logistic_mixture"));
    let out = audit_into(dir.path(), &model);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let influence = read_csv(&dir.path().join("influence.csv"));
    for row in influence.iter().filter(|r| r[1] == "z") {
        assert_eq!(row[3].parse::<f64>().unwrap(), 0.0, "{row:?}");
    }
}

#[test]
fn sweep_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    std::fs::write(
        &cfg,
        "scenario=A\nr_grid=0\ntrials=5\nn_per_trial=600\nmethods=mim\nbootstrap_resamples=500\n",
    )
    .unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = mimfair(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            path.to_str().unwrap(),
            "--seed",
            "4",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(path).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("scenario,r,method,metric,feature,mean,ci_low,ci_high,trials\n"));
    for metric in [
        "shap_X1",
        "shap_X2",
        "shap_Z",
        "mde_X1",
        "mde_X2",
        "mde_Z",
        "accuracy",
        "demographic_disparity",
        "disparate_impact",
        "equal_opportunity_diff",
        "equalized_odds_gap",
    ] {
        assert!(text.contains(&format!(",mim,{metric},")), "missing {metric}");
    }
}

#[test]
fn inadmissible_sweep_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    std::fs::write(&cfg, "scenario=B\nr_grid=0.95\n").unwrap();
    let out = mimfair(&["sweep", "--config", cfg.to_str().unwrap(), "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
}
