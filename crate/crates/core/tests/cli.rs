//! End-to-end runs of the `dcreg` binary. Headers are pinned so that the
//! CSV schemas stay stable.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dcreg::data::{validate_dataset, Dataset, RawRecord};

fn dcreg(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dcreg"));
    cmd.args(args).env_remove("DCREG_SEED").env_remove("RUST_LOG");
    cmd
}

fn run(args: &[&str]) -> Output {
    dcreg(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(out: &Output) {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let k = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[k].to_string()).collect()
}

fn write_data(dir: &Path, name: &str, ds: &Dataset) -> PathBuf {
    let path = dir.join(name);
    ds.to_csv_writer(std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn censored(n: usize) -> Dataset {
    let raw = (0..n)
        .map(|i| {
            let z1 = common::weyl(i, 0.618_034);
            let z2 = (i % 2) as f64;
            let v = 12.0 * common::weyl(i, 0.414_214);
            let t = v + 1.0 + 25.0 * common::weyl(i, 0.732_051) * (1.0 - 0.4 * z1) + 3.0 * z2;
            let c = v + 5.0 + 30.0 * common::weyl(i, 0.236_068);
            let (u, delta) = if t <= c { (t, 1.0) } else { (c, 0.0) };
            RawRecord { u, delta, v, z: vec![z1, z2], c: None }
        })
        .collect();
    validate_dataset(raw, None).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_writes_pinned_schema_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", &censored(400));
    let out = dir.path().join("fit");
    ok(&run(&["fit", "--data", s(&data), "--t0", "20:24:2", "--approach", "a,b", "--censoring", "km,ecdf", "--out", s(&out)]));
    let coef = out.join("coefficients.csv");
    assert_eq!(header(&coef), "approach,censoring,t0,term,estimate,se_sandwich,ci_lo,ci_hi,converged");
    // 2 approaches x 2 methods x 3 ages x 3 terms
    assert_eq!(read(&coef).lines().count(), 1 + 36);
    assert!(column(&coef, "converged").iter().all(|c| c == "true"));
    for est in column(&coef, "estimate") {
        let digits = est.trim_start_matches('-').replace('.', "");
        assert!(digits.trim_start_matches('0').split('e').next().unwrap().len() <= 10, "{est}");
    }

    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["convergence"].as_array().unwrap().len(), 12);
    for key in ["config", "version", "jobs", "wall_clock_secs", "outputs"] {
        assert!(manifest.get(key).is_some(), "{key}");
    }

    // the manifest alone reproduces the run
    let again = dir.path().join("again");
    ok(&run(&["fit", "--config", s(&out.join("manifest.json")), "--out", s(&again)]));
    assert_eq!(read(&coef), read(&again.join("coefficients.csv")));
}

#[test]
fn fit_with_bootstrap_adds_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", &censored(300));
    let out = dir.path().join("o");
    ok(&run(&[
        "fit", "--data", s(&data), "--t0", "22", "--approach", "a", "--censoring", "km", "--se", "both",
        "--bootstrap-reps", "20", "--seed", "3", "--out", s(&out),
    ]));
    assert_eq!(
        header(&out.join("coefficients.csv")),
        "approach,censoring,t0,term,estimate,se_sandwich,se_bootstrap,ci_lo,ci_hi,converged"
    );
    assert!(column(&out.join("coefficients.csv"), "se_bootstrap").iter().all(|v| v.parse::<f64>().unwrap() > 0.0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", &censored(200));
    let out = dir.path().join("o");

    let empty = run(&["fit", "--data", s(&data), "--t0", "30:20:1", "--out", s(&out)]);
    assert_eq!(code(&empty), 2);
    assert!(String::from_utf8_lossy(&empty.stderr).contains("error"));

    let missing = run(&["fit", "--data", s(&dir.path().join("nope.csv")), "--t0", "20", "--out", s(&out)]);
    assert_eq!(code(&missing), 2);

    assert_eq!(code(&run(&["fit", "--data", s(&data), "--t0", "20", "--approach", "z", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["fit", "--bogus-flag"])), 2);
    assert_eq!(code(&run(&["simulate", "--preset", "s9", "--out", s(&out)])), 2);

    // no subject is at risk before every V, so every fit fails
    let all_failed = run(&["fit", "--data", s(&data), "--t0=-1", "--approach", "a", "--censoring", "km", "--out", s(&out)]);
    assert_eq!(code(&all_failed), 3);
    assert!(column(&out.join("coefficients.csv"), "converged").iter().all(|c| c == "false"));

    // one failed age among good ones is flagged, not fatal
    ok(&run(&["fit", "--data", s(&data), "--t0=-1,22", "--approach", "a", "--censoring", "km", "--out", s(&out)]));
    let flags = column(&out.join("coefficients.csv"), "converged");
    assert!(flags.contains(&"false".to_string()) && flags.contains(&"true".to_string()));
}

#[test]
fn im_warns_when_risk_set_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", &censored(300));
    let out = run(&["fit", "--data", s(&data), "--t0", "8", "--approach", "im", "--censoring", "km", "--out", s(&dir.path().join("o"))]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("risk-set adjustment is disabled"));
}

const SIM: [&str; 8] = ["simulate", "--preset", "s11", "--n", "400", "--t0", "21,35", "--approaches"];

fn simulate(extra: &[&str], out: &Path) -> Output {
    let mut args: Vec<&str> = SIM.to_vec();
    args.push("a,b");
    args.extend(extra);
    args.extend(["--out", s(out)]);
    run(&args)
}

#[test]
fn simulate_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&simulate(&["--reps", "3", "--seed", "1", "--methods", "true,km", "--survival", "--av-difference"], &out));
    assert_eq!(header(&out.join("metrics.csv")), "approach,censoring,t0,coefficient,truth,k,failed,smean,ssd,smese,rsmse");
    assert_eq!(header(&out.join("censoring_rates.csv")), "t0,mean_rate,sd_rate,mean_at_risk");
    assert_eq!(
        header(&out.join("survival_comparison.csv")),
        "profile,approach,censoring,t0,k,mean_pred,mean_se,sd_pred,true_pi,true_unconditional"
    );
    assert_eq!(header(&out.join("av_difference.csv")), "censoring,t0,coefficient,k,value");
    // 2 approaches x 2 methods x 2 ages x 3 coefficients
    assert_eq!(read(&out.join("metrics.csv")).lines().count(), 1 + 24);
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 1);

    let single = dir.path().join("one");
    ok(&simulate(&["--reps", "1", "--methods", "true"], &single));
    assert_eq!(header(&single.join("metrics.csv")), "approach,censoring,t0,coefficient,truth,k,failed,smean,smese,rsmse");
}

#[test]
fn generator_comparison_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    ok(&run(&[
        "simulate", "--preset", "s3", "--n", "300", "--reps", "2", "--t0", "30", "--methods", "true", "--approaches", "a",
        "--generator", "inverse", "--compare-generator", "--out", s(&out),
    ]));
    assert_eq!(header(&out.join("generator_comparison.csv")), "profile,approach,censoring,t0,backward,inverse,diff");
}

#[test]
fn results_do_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("j1"), dir.path().join("j4"));
    let methods = ["--reps", "4", "--seed", "9", "--methods", "true,srf", "--trees", "5", "--node-size", "40"];
    let mut one = methods.to_vec();
    one.extend(["--jobs", "1"]);
    let mut four = methods.to_vec();
    four.extend(["--jobs", "4"]);
    ok(&simulate(&one, &a));
    ok(&simulate(&four, &b));
    assert_eq!(read(&a.join("metrics.csv")), read(&b.join("metrics.csv")));
    assert_eq!(read(&a.join("censoring_rates.csv")), read(&b.join("censoring_rates.csv")));
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let outputs: Vec<PathBuf> = ["env5", "flag5", "flag6", "flag_over_env"].iter().map(|n| dir.path().join(n)).collect();
    let base = |out: &Path| {
        let mut args: Vec<String> = SIM.iter().map(|x| x.to_string()).collect();
        args.extend(["a".into(), "--reps".into(), "2".into(), "--methods".into(), "true".into(), "--out".into(), s(out).into()]);
        args
    };
    let mut cmd = dcreg(&[]);
    ok(&cmd.args(base(&outputs[0])).env("DCREG_SEED", "5").output().unwrap());
    ok(&dcreg(&[]).args(base(&outputs[1])).args(["--seed", "5"]).output().unwrap());
    ok(&dcreg(&[]).args(base(&outputs[2])).args(["--seed", "6"]).output().unwrap());
    ok(&dcreg(&[]).args(base(&outputs[3])).args(["--seed", "6"]).env("DCREG_SEED", "5").output().unwrap());
    let m: Vec<String> = outputs.iter().map(|o| read(&o.join("metrics.csv"))).collect();
    assert_eq!(m[0], m[1]);
    assert_ne!(m[1], m[2]);
    assert_eq!(m[2], m[3]);

    let bad = dcreg(&[]).args(base(&dir.path().join("bad"))).env("DCREG_SEED", "x").output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn config_layering() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", &censored(300));
    let flat = dir.path().join("flat.json");
    std::fs::write(&flat, format!(r#"{{"data":"{}","t0":[20,22],"approach":"a","censoring":"km"}}"#, s(&data))).unwrap();
    let nested = dir.path().join("nested.json");
    std::fs::write(&nested, format!(r#"{{"fit":{{"data":"{}","t0":"20,22","approach":"a","censoring":"km"}}}}"#, s(&data)))
        .unwrap();

    let (o1, o2, o3) = (dir.path().join("1"), dir.path().join("2"), dir.path().join("3"));
    ok(&run(&["fit", "--config", s(&flat), "--out", s(&o1)]));
    ok(&run(&["fit", "--config", s(&nested), "--out", s(&o2)]));
    assert_eq!(read(&o1.join("coefficients.csv")), read(&o2.join("coefficients.csv")));
    assert_eq!(column(&o1.join("coefficients.csv"), "t0"), ["20", "20", "20", "22", "22", "22"]);

    // flags win over the file
    ok(&run(&["fit", "--config", s(&flat), "--t0", "24", "--approach", "b", "--out", s(&o3)]));
    let c = o3.join("coefficients.csv");
    assert!(column(&c, "t0").iter().all(|t| t == "24"));
    assert!(column(&c, "approach").iter().all(|a| a == "b"));

    // a manifest from another command is refused
    ok(&run(&["diagnose", "--data", s(&data), "--t0", "22", "--censoring", "km", "--out", s(&o3)]));
    assert_eq!(code(&run(&["fit", "--config", s(&o3.join("manifest.json")), "--out", s(&o3)])), 2);

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"dat":"x"}"#).unwrap();
    assert_eq!(code(&run(&["fit", "--config", s(&unknown), "--out", s(&o3)])), 2);
}

#[test]
fn smooth_appends_span_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", &censored(400));
    let out = dir.path().join("o");
    ok(&run(&["fit", "--data", s(&data), "--t0", "17:30:1", "--approach", "a", "--censoring", "km", "--out", s(&out)]));
    let coef = out.join("coefficients.csv");
    let before = header(&coef);
    let smoothed = out.join("smoothed.csv");
    ok(&run(&["smooth", "--input", s(&coef), "--spans", "0.3,0.5,0.8", "--output", s(&smoothed)]));
    assert_eq!(header(&smoothed), format!("{before},smoothed_0.3,smoothed_0.5,smoothed_0.8"));
    assert!(column(&smoothed, "smoothed_0.5").iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
    assert!(out.join("smoothed.smooth.manifest.json").exists());

    // rerunning in place replaces the columns instead of duplicating them
    ok(&run(&["smooth", "--input", s(&smoothed), "--spans", "0.5"]));
    assert_eq!(header(&smoothed), format!("{before},smoothed_0.3,smoothed_0.5,smoothed_0.8"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "age,estimate\n20,1\n").unwrap();
    assert_eq!(code(&run(&["smooth", "--input", s(&bad)])), 2);
}

#[test]
fn diagnose_uncensored_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "d.csv", &common::uncensored_dataset(400));
    let out = dir.path().join("o");
    let run_out = run(&["diagnose", "--data", s(&data), "--t0", "20,25", "--censoring", "km", "--out", s(&out)]);
    ok(&run_out);
    assert!(String::from_utf8_lossy(&run_out.stdout).contains("t0 20:"));
    let matrix = out.join("av_difference.csv");
    let diagonal = out.join("av_difference_diagonal.csv");
    assert_eq!(header(&matrix), "censoring,t0,row,col,value");
    assert_eq!(header(&diagonal), "censoring,t0,term,value,sign");
    let values = column(&matrix, "value");
    assert!(!values.is_empty());
    assert!(values.iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
    assert!(column(&diagonal, "sign").iter().all(|v| v == "0"));

    let theta = run(&["diagnose", "--data", s(&data), "--t0", "20", "--censoring", "km", "--theta", "-1,0.5", "--out", s(&out)]);
    assert_eq!(code(&theta), 2);
    assert_eq!(code(&run(&["diagnose", "--data", s(&data), "--t0", "20", "--censoring", "km,ecdf", "--out", s(&out)])), 2);
}
