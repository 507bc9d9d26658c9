use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use super::args::{DiagnoseArgs, FitArgs, ForestArgs, GridArg, MethodsArg, ScenarioArg, SimulateArgs, SmoothArgs};
use super::output::{self, fmt_num, CoefRow};
use super::{resolve_seed, CliResult, Failure, RunManifest};
use crate::censoring::{self, CensoringModel, CensoringSpec};
use crate::data::Dataset;
use crate::error::Error;
use crate::estimation::{solve, Approach, SolveOptions, Theta};
use crate::inference::{av_difference, bootstrap_se, sandwich_variance, wald_ci, BootstrapSpec, SeMethod};
use crate::simulation::{
    empirical_av_difference, generator_comparison, metrics, run_study, survival_comparison, Generator,
    ScenarioConfig, StudyOutput, StudyPlan,
};
use crate::smoothing::{loess, SmoothingSpec};

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| invalid(format!("--{flag} is required")))
}

fn out_dir(out: &Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| invalid(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn parse_approaches(s: &str) -> CliResult<Vec<Approach>> {
    let list: Vec<Approach> = s.split(',').map(|a| a.parse()).collect::<crate::Result<_>>()?;
    if list.is_empty() {
        return Err(invalid("no approach given"));
    }
    Ok(list)
}

fn approach_list(a: &[Approach]) -> String {
    a.iter().map(|x| x.label()).collect::<Vec<_>>().join(",")
}

/// Turns names or specs into censoring specs and applies the forest and gap
/// flags. Names take the run seed for the forest unless one is given.
fn resolve_methods(
    arg: &Option<MethodsArg>,
    default: &str,
    forest: &ForestArgs,
    seed: u64,
    scenario: Option<&ScenarioConfig>,
) -> CliResult<Vec<CensoringSpec>> {
    let named = |name: &str| match scenario {
        Some(sc) => sc.censoring_method(name),
        None => CensoringSpec::from_name(name),
    };
    let (mut specs, from_names) = match arg {
        None => (vec![named(default)?], true),
        Some(MethodsArg::Names(s)) => (s.split(',').map(named).collect::<crate::Result<Vec<_>>>()?, true),
        Some(MethodsArg::Spec(s)) => (vec![s.clone()], false),
        Some(MethodsArg::Specs(s)) => (s.clone(), false),
    };
    if specs.is_empty() {
        return Err(invalid("no censoring method given"));
    }
    for spec in &mut specs {
        match spec {
            CensoringSpec::Forest(p) => {
                if let Some(v) = forest.trees {
                    p.n_trees = v;
                }
                if let Some(v) = forest.node_size {
                    p.min_node_size = v;
                }
                if forest.mtry.is_some() {
                    p.mtry = forest.mtry;
                }
                if let Some(v) = forest.oob {
                    p.oob_for_insample = v;
                }
                match forest.forest_seed {
                    Some(s) => p.seed = s,
                    None if from_names => p.seed = seed,
                    None => {}
                }
            }
            CensoringSpec::CoxGap { gap } => {
                if let Some(v) = forest.gap {
                    *gap = v;
                }
            }
            _ => {}
        }
    }
    Ok(specs)
}

fn methods_label(specs: &[CensoringSpec]) -> Vec<&'static str> {
    specs.iter().map(CensoringSpec::label).collect()
}

fn terms(ds: &Dataset) -> Vec<String> {
    std::iter::once("alpha".to_string()).chain(ds.names().iter().cloned()).collect()
}

struct AgeFit {
    theta: Option<Theta>,
    converged: bool,
    iterations: usize,
    se_sandwich: Option<Vec<f64>>,
    se_bootstrap: Option<Vec<f64>>,
    error: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn fit_age(
    approach: Approach,
    t0: f64,
    ds: &Dataset,
    g: &CensoringModel,
    spec: &CensoringSpec,
    se: &SeMethod,
    init: Option<Theta>,
) -> AgeFit {
    let opts = SolveOptions { init, ..SolveOptions::default() };
    let est = match solve(approach, t0, ds, g, &opts) {
        Ok(e) => e,
        Err(Error::FitNonconvergence(e)) | Err(Error::CompleteSeparation(e)) => {
            let msg = format!("not converged after {} iterations", e.iterations);
            return AgeFit {
                theta: Some(e.theta.clone()),
                converged: false,
                iterations: e.iterations,
                se_sandwich: None,
                se_bootstrap: None,
                error: Some(msg),
            };
        }
        Err(e) => {
            return AgeFit {
                theta: None,
                converged: false,
                iterations: 0,
                se_sandwich: None,
                se_bootstrap: None,
                error: Some(e.to_string()),
            }
        }
    };
    let mut notes = Vec::new();
    let se_sandwich = if se.wants_sandwich() {
        sandwich_variance(approach, &est.theta, t0, ds, g)
            .map(|s| s.se)
            .map_err(|e| notes.push(format!("sandwich: {e}")))
            .ok()
    } else {
        None
    };
    let se_bootstrap = se.bootstrap().and_then(|b| {
        bootstrap_se(approach, t0, ds, spec, b, Some(g))
            .map(|s| s.se)
            .map_err(|e| notes.push(format!("bootstrap: {e}")))
            .ok()
    });
    for n in &notes {
        log::warn!("{} t0={t0}: {n}", approach.label());
    }
    AgeFit {
        theta: Some(est.theta),
        converged: true,
        iterations: est.iterations,
        se_sandwich,
        se_bootstrap,
        error: (!notes.is_empty()).then(|| notes.join("; ")),
    }
}

pub fn fit(a: FitArgs) -> CliResult<()> {
    let start = Instant::now();
    let seed = resolve_seed(a.seed)?;
    let data = required(&a.data, "data")?;
    let grid = required(&a.t0, "t0")?.resolve()?;
    let approaches = parse_approaches(a.approach.as_deref().unwrap_or("a,b"))?;
    let methods = resolve_methods(&a.censoring, "ecdf", &a.forest, seed, None)?;
    let b = a.bootstrap_reps.unwrap_or(200);
    let frozen_g = a.frozen_g.unwrap_or(false);
    let se_name = a.se.clone().unwrap_or_else(|| "sandwich".into());
    let se = match se_name.as_str() {
        "sandwich" => SeMethod::Sandwich,
        "bootstrap" => SeMethod::Bootstrap(BootstrapSpec { b, seed, frozen_g }),
        "both" => SeMethod::Both(BootstrapSpec { b, seed, frozen_g }),
        other => return Err(invalid(format!("unknown --se '{other}' (sandwich, bootstrap, both)"))),
    };
    se.validate()?;
    let level = a.level.unwrap_or(0.95);
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("--level {level} not in (0, 1)")));
    }
    let warm = a.warm_start.unwrap_or(false);
    let dir = out_dir(&a.out)?;
    let ds = Dataset::from_csv_path(&data)?;
    for spec in &methods {
        if let CensoringSpec::Forest(p) = spec {
            p.validate(ds.p())?;
        }
    }
    let resolved = FitArgs {
        data: Some(data),
        t0: Some(GridArg::Ages(grid.clone())),
        approach: Some(approach_list(&approaches)),
        censoring: Some(MethodsArg::Specs(methods.clone())),
        forest: a.forest.clone(),
        se: Some(se_name),
        bootstrap_reps: Some(b),
        frozen_g: Some(frozen_g),
        level: Some(level),
        warm_start: Some(warm),
        seed: Some(seed),
        out: Some(dir.clone()),
    };

    if approaches.contains(&Approach::Im) {
        let late: Vec<String> =
            grid.iter().filter(|&&t| ds.records().iter().any(|r| r.v >= t)).map(|&t| fmt_num(t)).collect();
        if !late.is_empty() {
            log::warn!(
                "approach im at ages {} includes subjects whose initial event is not before t0; \
                 risk-set adjustment is disabled for im",
                late.join(",")
            );
        }
    }

    let names = terms(&ds);
    let mut rows = Vec::new();
    let mut convergence = Vec::new();
    let mut any_converged = false;
    for spec in &methods {
        let g = match censoring::fit(&ds, spec) {
            Ok(g) => Some(g),
            Err(e) => {
                log::warn!("censoring model {} failed: {e}", spec.label());
                None
            }
        };
        for &approach in &approaches {
            let mut prev: Option<Theta> = None;
            for &t0 in &grid {
                let r = match &g {
                    Some(g) => fit_age(approach, t0, &ds, g, spec, &se, if warm { prev.clone() } else { None }),
                    None => AgeFit {
                        theta: None,
                        converged: false,
                        iterations: 0,
                        se_sandwich: None,
                        se_bootstrap: None,
                        error: Some("censoring model failed".into()),
                    },
                };
                if r.converged {
                    any_converged = true;
                    prev = r.theta.clone();
                } else {
                    log::warn!(
                        "{} / {} at t0={t0}: {}",
                        approach.label(),
                        spec.label(),
                        r.error.as_deref().unwrap_or("failed")
                    );
                }
                let ci_se = r.se_sandwich.as_ref().or(r.se_bootstrap.as_ref());
                let ci = match (&r.theta, ci_se) {
                    (Some(t), Some(s)) if r.converged => wald_ci(t, s, level).ok(),
                    _ => None,
                };
                let est = r.theta.as_ref().map(Theta::to_vec);
                for (j, term) in names.iter().enumerate() {
                    rows.push(CoefRow {
                        approach,
                        censoring: spec.label().to_string(),
                        t0,
                        term: term.clone(),
                        estimate: est.as_ref().map(|e| e[j]),
                        se_sandwich: r.se_sandwich.as_ref().map(|s| s[j]),
                        se_bootstrap: r.se_bootstrap.as_ref().map(|s| s[j]),
                        ci: ci.as_ref().map(|c| c[j]),
                        converged: r.converged,
                    });
                }
                convergence.push(json!({
                    "approach": approach.label(),
                    "censoring": spec.label(),
                    "t0": t0,
                    "converged": r.converged,
                    "iterations": r.iterations,
                    "error": r.error,
                }));
            }
        }
    }

    let coef_path = dir.join("coefficients.csv");
    output::write_coefficients(&coef_path, &rows, se.bootstrap().is_some())?;
    write_manifest(&dir, "fit", &resolved, seed, start, convergence, &[&coef_path])?;
    if !any_converged {
        return Err(Failure::AllFailed(format!(
            "no fit converged for {} over {} ages",
            methods_label(&methods).join(","),
            grid.len()
        )));
    }
    Ok(())
}

fn write_manifest<C: serde::Serialize>(
    dir: &Path,
    command: &str,
    config: &C,
    seed: u64,
    start: Instant,
    convergence: Vec<serde_json::Value>,
    outputs: &[&Path],
) -> CliResult<()> {
    let manifest = RunManifest {
        command: command.into(),
        config,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        jobs: rayon::current_num_threads(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        convergence,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    output::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(())
}

fn generator_label(g: Generator) -> &'static str {
    match g {
        Generator::Backward => "backward",
        Generator::Inverse => "inverse",
    }
}

fn study_convergence(out: &StudyOutput) -> Vec<serde_json::Value> {
    let mut counts: BTreeMap<(String, String, usize), (usize, usize)> = BTreeMap::new();
    for f in &out.fits {
        let ki = out.scenario.t0_grid.iter().position(|&t| t == f.t0).unwrap_or(usize::MAX);
        let e = counts.entry((f.method.clone(), f.approach.label().to_string(), ki)).or_default();
        if f.converged {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|((method, approach, ki), (ok, failed))| {
            json!({
                "approach": approach,
                "censoring": method,
                "t0": out.scenario.t0_grid.get(ki),
                "converged": ok,
                "failed": failed,
            })
        })
        .collect()
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut sc = match (&a.scenario, &a.preset) {
        (Some(ScenarioArg::Inline(s)), _) => (**s).clone(),
        (Some(ScenarioArg::Path(p)), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
        }
        (None, Some(p)) => ScenarioConfig::preset(p)?,
        (None, None) => return Err(invalid("--preset or --scenario is required")),
    };
    if let Some(r) = a.reps {
        sc.reps = r;
    }
    if let Some(n) = a.n {
        sc.n = n;
    }
    if a.seed.is_some() || std::env::var_os(super::SEED_ENV).is_some() {
        sc.base_seed = resolve_seed(a.seed)?;
    }
    if let Some(g) = &a.generator {
        sc.generator = match g.to_ascii_lowercase().as_str() {
            "backward" => Generator::Backward,
            "inverse" => Generator::Inverse,
            other => return Err(invalid(format!("unknown generator '{other}'"))),
        };
    }
    if let Some(t) = &a.t0 {
        sc.t0_grid = t.resolve()?;
    }
    sc.validate()?;
    let approaches = parse_approaches(a.approaches.as_deref().unwrap_or("a,b"))?;
    let methods = resolve_methods(&a.methods, "true", &a.forest, sc.base_seed, Some(&sc))?;
    for spec in &methods {
        if let CensoringSpec::Forest(p) = spec {
            p.validate(2)?;
        }
    }
    let sandwich = a.sandwich.unwrap_or(true);
    let survival = a.survival.unwrap_or(false);
    let av = a.av_difference.unwrap_or(false);
    let compare = a.compare_generator.unwrap_or(false);
    if av && !(approaches.contains(&Approach::A) && approaches.contains(&Approach::B)) {
        return Err(invalid("--av-difference needs approaches a and b"));
    }
    let dir = out_dir(&a.out)?;
    let resolved = SimulateArgs {
        preset: None,
        scenario: Some(ScenarioArg::Inline(Box::new(sc.clone()))),
        reps: Some(sc.reps),
        n: Some(sc.n),
        seed: Some(sc.base_seed),
        methods: Some(MethodsArg::Specs(methods.clone())),
        approaches: Some(approach_list(&approaches)),
        generator: Some(generator_label(sc.generator).into()),
        t0: Some(GridArg::Ages(sc.t0_grid.clone())),
        forest: a.forest.clone(),
        sandwich: Some(sandwich),
        survival: Some(survival),
        av_difference: Some(av),
        compare_generator: Some(compare),
        out: Some(dir.clone()),
    };

    let plan = StudyPlan { approaches, methods, sandwich };
    let out = run_study(&sc, &plan)?;
    let table = metrics(&out);
    let mut written: Vec<PathBuf> = vec![dir.join("metrics.csv"), dir.join("censoring_rates.csv")];
    output::write_metrics(&written[0], &table, sc.reps > 1)?;
    output::write_censoring_rates(&written[1], &table)?;
    if survival {
        let p = dir.join("survival_comparison.csv");
        output::write_survival(&p, &survival_comparison(&out, &[]))?;
        written.push(p);
    }
    if av {
        let p = dir.join("av_difference.csv");
        output::write_empirical_av(&p, &empirical_av_difference(&out)?)?;
        written.push(p);
    }
    if compare {
        let mut other = sc.clone();
        other.generator = match sc.generator {
            Generator::Backward => Generator::Inverse,
            Generator::Inverse => Generator::Backward,
        };
        let second = run_study(&other, &plan)?;
        let (this_rows, other_rows) = (survival_comparison(&out, &[]), survival_comparison(&second, &[]));
        let rows = match sc.generator {
            Generator::Backward => generator_comparison(&this_rows, &other_rows),
            Generator::Inverse => generator_comparison(&other_rows, &this_rows),
        };
        let p = dir.join("generator_comparison.csv");
        output::write_generator(&p, &rows)?;
        written.push(p);
    }
    let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    write_manifest(&dir, "simulate", &resolved, sc.base_seed, start, study_convergence(&out), &refs)?;
    if !out.fits.iter().any(|f| f.converged) {
        return Err(Failure::AllFailed("no fit converged in any replication".into()));
    }
    Ok(())
}

/// Columns that identify one trajectory in a coefficient or metrics table.
const GROUP_COLUMNS: [&str; 5] = ["approach", "censoring", "term", "coefficient", "profile"];

pub fn smooth(a: SmoothArgs) -> CliResult<()> {
    let start = Instant::now();
    let input = required(&a.input, "input")?;
    let spans: Vec<f64> = a
        .spans
        .as_deref()
        .unwrap_or("0.3,0.5,0.8")
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad span '{s}'"))))
        .collect::<CliResult<_>>()?;
    let degree = a.degree.unwrap_or(2);
    let column = a.column.clone().unwrap_or_else(|| "estimate".into());
    let output_path = a.output.clone().unwrap_or_else(|| input.clone());

    let mut rdr = csv::Reader::from_path(&input).map_err(|e| invalid(format!("{}: {e}", input.display())))?;
    let mut header: Vec<String> = rdr.headers().map_err(Error::from)?.iter().map(str::to_string).collect();
    let pos = |name: &str| header.iter().position(|h| h == name);
    let it0 = pos("t0").ok_or_else(|| invalid("schema mismatch: no 't0' column"))?;
    let iy = pos(&column).ok_or_else(|| invalid(format!("schema mismatch: no '{column}' column")))?;
    let keys: Vec<usize> = GROUP_COLUMNS.iter().filter_map(|c| pos(c)).collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(Error::from)?.iter().map(str::to_string).collect());
    }

    let mut groups: BTreeMap<Vec<String>, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let t0: f64 = r[it0].parse().map_err(|_| invalid(format!("row {}: bad t0 '{}'", i + 1, r[it0])))?;
        if let Ok(y) = r[iy].parse::<f64>() {
            if y.is_finite() {
                groups.entry(keys.iter().map(|&k| r[k].clone()).collect()).or_default().push((i, t0, y));
            }
        }
    }

    let mut new_cols: Vec<(String, Vec<String>)> = Vec::new();
    for &span in &spans {
        let spec = SmoothingSpec { span, degree };
        let mut col = vec![String::new(); rows.len()];
        for (key, pts) in &mut groups {
            pts.sort_by(|a, b| a.1.total_cmp(&b.1));
            let t: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let fitted = loess(&t, &y, &spec).map_err(|e| invalid(format!("group [{}]: {e}", key.join(","))))?;
            for (p, f) in pts.iter().zip(fitted) {
                col[p.0] = fmt_num(f);
            }
        }
        let name = if column == "estimate" {
            format!("smoothed_{}", fmt_num(span))
        } else {
            format!("{column}_smoothed_{}", fmt_num(span))
        };
        new_cols.push((name, col));
    }

    for (name, col) in new_cols {
        match header.iter().position(|h| *h == name) {
            Some(k) => rows.iter_mut().zip(col).for_each(|(r, v)| r[k] = v),
            None => {
                header.push(name);
                rows.iter_mut().zip(col).for_each(|(r, v)| r.push(v));
            }
        }
    }
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    output::write_rows(&output_path, &hdr, rows)?;

    let dir = output_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let resolved = SmoothArgs {
        input: Some(input),
        spans: Some(spans.iter().map(|s| fmt_num(*s)).collect::<Vec<_>>().join(",")),
        degree: Some(degree),
        column: Some(column),
        output: Some(output_path.clone()),
    };
    let stem = output_path.file_stem().map_or("smooth".into(), |s| s.to_string_lossy().into_owned());
    let manifest = RunManifest {
        command: "smooth".into(),
        config: &resolved,
        seed: 0,
        version: env!("CARGO_PKG_VERSION"),
        jobs: rayon::current_num_threads(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        convergence: Vec::new(),
        outputs: vec![output_path.display().to_string()],
    };
    output::write_json(&dir.join(format!("{stem}.smooth.manifest.json")), &manifest)?;
    Ok(())
}

pub fn diagnose(a: DiagnoseArgs) -> CliResult<()> {
    let start = Instant::now();
    let seed = resolve_seed(a.seed)?;
    let data = required(&a.data, "data")?;
    let grid = required(&a.t0, "t0")?.resolve()?;
    let methods = resolve_methods(&a.censoring, "ecdf", &a.forest, seed, None)?;
    let [spec] = methods.as_slice() else {
        return Err(invalid("diagnose takes a single censoring method"));
    };
    let ds = Dataset::from_csv_path(&data)?;
    let fixed = match &a.theta {
        Some(s) => {
            let v: Vec<f64> = s
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| invalid(format!("bad coefficient '{x}'"))))
                .collect::<CliResult<_>>()?;
            if v.len() != ds.p() + 1 {
                return Err(invalid(format!("--theta has {} values, expected {}", v.len(), ds.p() + 1)));
            }
            Some(Theta::from_slice(&v))
        }
        None => None,
    };
    if let CensoringSpec::Forest(p) = spec {
        p.validate(ds.p())?;
    }
    let dir = out_dir(&a.out)?;
    let g = censoring::fit(&ds, spec)?;
    let names = terms(&ds);
    let label = spec.label().to_string();

    let mut matrix_rows = Vec::new();
    let mut diag_rows = Vec::new();
    let mut convergence = Vec::new();
    for &t0 in &grid {
        let theta = match &fixed {
            Some(t) => Ok(t.clone()),
            None => solve(Approach::A, t0, &ds, &g, &SolveOptions::default()).map(|e| e.theta),
        };
        let result = theta.and_then(|t| av_difference(&t, t0, &ds, &g));
        match result {
            Ok(d) => {
                let mut signs = Vec::new();
                for (i, ri) in names.iter().enumerate() {
                    for (j, cj) in names.iter().enumerate() {
                        matrix_rows.push(vec![label.clone(), fmt_num(t0), ri.clone(), cj.clone(), fmt_num(d.diff[(i, j)])]);
                    }
                    let v = d.diff[(i, i)];
                    let sign = if v > 0.0 { "+" } else if v < 0.0 { "-" } else { "0" };
                    diag_rows.push(vec![label.clone(), fmt_num(t0), ri.clone(), fmt_num(v), sign.to_string()]);
                    signs.push(format!("{ri} {sign}{}", fmt_num(v.abs())));
                }
                println!("t0 {}: {}", fmt_num(t0), signs.join(", "));
                convergence.push(json!({ "t0": t0, "converged": true }));
            }
            Err(e) => {
                log::warn!("t0={t0}: {e}");
                convergence.push(json!({ "t0": t0, "converged": false, "error": e.to_string() }));
            }
        }
    }
    let matrix_path = dir.join("av_difference.csv");
    let diag_path = dir.join("av_difference_diagonal.csv");
    output::write_rows(&matrix_path, &output::AV_MATRIX_HEADER, matrix_rows)?;
    output::write_rows(&diag_path, &output::AV_DIAGONAL_HEADER, diag_rows)?;
    let resolved = DiagnoseArgs {
        data: Some(data),
        t0: Some(GridArg::Ages(grid.clone())),
        censoring: Some(MethodsArg::Specs(methods.clone())),
        forest: a.forest.clone(),
        theta: a.theta.clone(),
        seed: Some(seed),
        out: Some(dir.clone()),
    };
    let any_ok = convergence.iter().any(|c| c["converged"] == true);
    write_manifest(&dir, "diagnose", &resolved, seed, start, convergence, &[&matrix_path, &diag_path])?;
    if !any_ok {
        return Err(Failure::AllFailed("no age produced a diagnostic".into()));
    }
    Ok(())
}
