use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn rlscale(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlscale"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = rlscale(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap()
}

fn law(d_min: f64, a: f64, alpha: f64, b: f64, beta: f64, sigma: f64, n: f64) -> f64 {
    d_min + (a / sigma).powf(alpha) + (b / n).powf(beta)
}

/// Noiseless efficiency table for one threshold of a known law.
fn efficiency_rows(task: &str, threshold: f64, p: (f64, f64, f64, f64, f64)) -> String {
    let mut s = String::new();
    for sigma in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
        for n in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let d = law(p.0, p.1, p.2, p.3, p.4, sigma, n);
            s.push_str(&format!("{task},{sigma},{n},256,{threshold},{d},\n"));
        }
    }
    s
}

const HEADER: &str = "task,utd,model_size,batch_size,threshold,data,data_std\n";

#[test]
fn allocate_data_budget_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // a = 2, b = 8, d_min = 100 scaled by 1000.
    let p = (1e5, 2e6, 0.5, 8e6, 0.5);
    fs::write(dir.join("eff.csv"), format!("{HEADER}{}", efficiency_rows("t", 800.0, p))).unwrap();
    ok(dir, &["fit-data", "--input", "eff.csv", "--out", "fit"]);
    ok(dir, &["allocate", "--input", "fit/data_fit.json", "--data-budget", "2e5", "--out", "alloc"]);
    let doc = json(dir.join("alloc/allocation.json"));
    let sol = &doc["result"]["data_budget"];
    // Equal exponents split the excess evenly: each term is 5e4.
    let sigma_oracle = p.1 / 5e4_f64.powf(1.0 / p.2);
    let n_oracle = p.3 / 5e4_f64.powf(1.0 / p.4);
    let sigma = sol["sigma_star"].as_f64().unwrap();
    let n = sol["n_star"].as_f64().unwrap();
    assert!(((sigma - sigma_oracle) / sigma_oracle).abs() < 1e-3, "{sigma} vs {sigma_oracle}");
    assert!(((n - n_oracle) / n_oracle).abs() < 1e-3, "{n} vs {n_oracle}");
    assert!(doc["provenance"]["inputs"][0]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn shared_mode_over_two_tasks_yields_one_family() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let body = efficiency_rows("hop", 800.0, (1e5, 2e6, 0.5, 8e6, 0.75))
        + &efficiency_rows("walk", 800.0, (3e5, 9e6, 0.5, 2e7, 0.75));
    fs::write(dir.join("eff.csv"), format!("{HEADER}{body}")).unwrap();
    ok(dir, &["fit-data", "--mode", "shared", "--input", "eff.csv", "--out", "."]);
    let doc = json(dir.join("data_fit.json"));
    assert_eq!(doc["result"]["mode"], "shared_exponent");
    let fams = doc["result"]["families"].as_array().unwrap();
    assert_eq!(fams.len(), 1);
    let alpha = fams[0]["alpha"].as_f64().unwrap();
    let beta = fams[0]["beta"].as_f64().unwrap();
    assert!((alpha - 0.5).abs() < 1e-4 && (beta - 0.75).abs() < 1e-4, "{alpha} {beta}");
    assert_eq!(fams[0]["per_task"].as_object().unwrap().len(), 2);
}

const SPEC: &str = r#"
task_id = "synth-walk"
sigma_grid = [1.0, 2.0, 4.0, 8.0]
n_grid = [1e6, 4e6, 1.6e7, 6.4e7]
b_grid = [256.0]
evals_per_decade = 2000
delta = 1e9

[truth_data]
d_min = 1e5
a = 1e10
alpha = 0.5
b = 4.6e13
beta = 0.75
threshold = 800.0
"#;

#[test]
fn synth_to_evaluate_noiseless_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("spec.toml"), SPEC).unwrap();
    ok(dir, &["synth", "--spec", "spec.toml", "--out", "w"]);
    ok(
        dir,
        &["preprocess", "--manifest", "w/manifest.toml", "--input", "w/runs.csv", "--bootstrap-k", "5", "--out", "w"],
    );
    ok(dir, &["fit-data", "--input", "w/efficiency.csv", "--out", "w"]);
    ok(dir, &["evaluate", "--input", "w/data_fit.json", "--input", "w/efficiency.csv", "--out", "w"]);
    let eval = json(dir.join("w/evaluation.json"));
    let err = eval["result"]["relative_error"].as_f64().unwrap();
    assert!(err < 1e-3, "relative error {err}");
    assert_eq!(eval["result"]["points"].as_u64().unwrap(), 16 * 20);

    ok(dir, &["frontier", "--input", "w/data_fit.json", "--manifest", "w/manifest.toml", "--out", "w"]);
    let frontier = fs::read_to_string(dir.join("w/frontier.csv")).unwrap();
    assert!(frontier.starts_with("threshold,budget,sigma_star,n_star,data,compute\n"));
    assert_eq!(frontier.lines().count(), 21);
    let laws = json(dir.join("w/frontier_laws.json"));
    assert_eq!(laws["result"]["laws"]["n_extrapolate"], 5);

    ok(dir, &["report", "--input", "w/data_fit.json", "--delta", "1e9", "--out", "r"]);
    let contour = fs::read_to_string(dir.join("r/contour.csv")).unwrap();
    assert!(contour.starts_with("d_target,sigma,n\n"));
    assert!(dir.join("r/frontier.csv").exists());

    ok(dir, &["fit-batch", "--input", "w/efficiency.csv", "--out", "w"]);
    let batch = json(dir.join("w/batch_fit.json"));
    assert_eq!(batch["result"][0]["source"], "empirical");
}

#[test]
fn commands_are_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("spec.toml"), SPEC.replace("2000", "200")).unwrap();
    ok(dir, &["synth", "--spec", "spec.toml", "--seed", "7", "--out", "w"]);
    let args = |out: &'static str| {
        vec!["preprocess", "--manifest", "w/manifest.toml", "--input", "w/runs.csv", "--bootstrap-k", "8", "--seed", "3", "--out", out]
    };
    ok(dir, &args("a"));
    ok(dir, &args("b"));
    for f in ["efficiency.csv", "bootstrap.json"] {
        assert_eq!(fs::read(dir.join("a").join(f)).unwrap(), fs::read(dir.join("b").join(f)).unwrap(), "{f}");
    }
    let boot = json(dir.join("a/bootstrap.json"));
    assert_eq!(boot["provenance"]["rng_seed"], 3);
}

#[test]
fn ingest_round_trips_and_merges_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("m.toml"),
        "[tasks.a]\noptimal_return = 500\nj_min = 100\nj_max = 800\ndelta = 1e9\n\n\
         [tasks.b]\nj_min = 100\nj_max = 800\ndelta = 1e9\n",
    )
    .unwrap();
    let h = "task,utd,model_size,batch_size,seed,env_step,return\n";
    fs::write(dir.join("1.csv"), format!("{h}a,1,1e6,256,0,10,1\na,1,1e6,256,0,20,2\nb,2,1e6,256,0,10,3\n")).unwrap();
    fs::write(dir.join("2.csv"), format!("{h}a,1,1e6,256,1,10,4\n")).unwrap();
    ok(dir, &["ingest", "--manifest", "m.toml", "--input", "1.csv", "--input", "2.csv", "--out", "o"]);
    let runs = fs::read_to_string(dir.join("o/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 5);
    assert_eq!(runs.matches("task,").count(), 1);
    let summary = json(dir.join("o/ingest.json"));
    assert_eq!(summary["result"][0]["curves"], 2);
    ok(dir, &["ingest", "--manifest", "o/manifest.toml", "--input", "o/runs.csv", "--out", "p"]);
    assert_eq!(runs, fs::read_to_string(dir.join("p/runs.csv")).unwrap());
}

#[test]
fn missing_input_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rlscale(tmp.path(), &["fit-data", "--input", "nope.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));

    let out = rlscale(tmp.path(), &["allocate", "--format", "structured"]);
    assert_eq!(out.status.code(), Some(2));
    let summary: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(summary["exit_code"], 2);
}

#[test]
fn bad_header_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("e.csv"), "task,sigma\nx,1\n").unwrap();
    let out = rlscale(tmp.path(), &["fit-data", "--input", "e.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unstable_fit_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut body = String::new();
    for sigma in [1.0, 2.0, 4.0, 8.0] {
        for n in [1e6_f64, 4e6, 1.6e7, 6.4e7] {
            body.push_str(&format!("t,{sigma},{n},256,800,{},\n", 1e5 + (1e13 / n).powf(0.75)));
        }
    }
    fs::write(dir.join("eff.csv"), format!("{HEADER}{body}")).unwrap();
    let out = rlscale(dir, &["fit-data", "--input", "eff.csv"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unstable"));
    assert!(dir.join("data_fit.json").exists());
}

#[test]
fn infeasible_compute_budget_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // 1/α + 1/β < 1, so compute has a positive minimum over the family.
    let p = (1e5, 3e-2, 3.0, 5e-2, 3.0);
    fs::write(dir.join("eff.csv"), format!("{HEADER}{}", efficiency_rows("t", 800.0, p))).unwrap();
    ok(dir, &["fit-data", "--input", "eff.csv"]);
    let out = rlscale(dir, &["allocate", "--input", "data_fit.json", "--compute-budget", "1e-30"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
