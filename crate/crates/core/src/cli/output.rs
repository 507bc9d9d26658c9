//! CSV writers and number formatting for CLI artifacts.

use std::path::Path;

use serde::Serialize;

use crate::estimation::Approach;
use crate::simulation::{AvDiffRow, GeneratorDiffRow, MetricsTable, SurvivalRow};

/// Formats a number with 10 significant digits, `%g` style.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.9e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..10).contains(&exp) {
        trim_zeros(format!("{:.*}", (9 - exp).max(0) as usize, x))
    } else {
        format!("{}e{}", trim_zeros(mant.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> crate::Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

/// One line of `coefficients.csv`.
#[derive(Debug, Clone)]
pub struct CoefRow {
    pub approach: Approach,
    pub censoring: String,
    pub t0: f64,
    pub term: String,
    pub estimate: Option<f64>,
    pub se_sandwich: Option<f64>,
    pub se_bootstrap: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub converged: bool,
}

pub fn coefficients_header(with_bootstrap: bool) -> Vec<&'static str> {
    let mut h = vec!["approach", "censoring", "t0", "term", "estimate", "se_sandwich"];
    if with_bootstrap {
        h.push("se_bootstrap");
    }
    h.extend(["ci_lo", "ci_hi", "converged"]);
    h
}

pub fn write_coefficients(path: &Path, rows: &[CoefRow], with_bootstrap: bool) -> crate::Result<()> {
    let body = rows.iter().map(|r| {
        let mut v = vec![
            r.approach.label().to_string(),
            r.censoring.clone(),
            fmt_num(r.t0),
            r.term.clone(),
            opt(r.estimate),
            opt(r.se_sandwich),
        ];
        if with_bootstrap {
            v.push(opt(r.se_bootstrap));
        }
        v.push(opt(r.ci.map(|c| c.0)));
        v.push(opt(r.ci.map(|c| c.1)));
        v.push(r.converged.to_string());
        v
    });
    write_rows(path, &coefficients_header(with_bootstrap), body)
}

pub fn metrics_header(with_ssd: bool) -> Vec<&'static str> {
    let mut h = vec!["approach", "censoring", "t0", "coefficient", "truth", "k", "failed", "smean"];
    if with_ssd {
        h.push("ssd");
    }
    h.extend(["smese", "rsmse"]);
    h
}

/// `with_ssd = false` drops the SSD column (single-replication runs).
pub fn write_metrics(path: &Path, table: &MetricsTable, with_ssd: bool) -> crate::Result<()> {
    let body = table.rows.iter().map(|r| {
        let mut v = vec![
            r.approach.label().to_string(),
            r.method.clone(),
            fmt_num(r.t0),
            r.coefficient.clone(),
            opt(r.truth),
            r.k.to_string(),
            r.failed.to_string(),
            opt(r.smean),
        ];
        if with_ssd {
            v.push(opt(r.ssd));
        }
        v.push(opt(r.smese));
        v.push(opt(r.rsmse));
        v
    });
    write_rows(path, &metrics_header(with_ssd), body)
}

pub const CENSORING_RATES_HEADER: [&str; 4] = ["t0", "mean_rate", "sd_rate", "mean_at_risk"];

pub fn write_censoring_rates(path: &Path, table: &MetricsTable) -> crate::Result<()> {
    let body = table
        .censoring_rates
        .iter()
        .map(|r| vec![fmt_num(r.t0), fmt_num(r.mean_rate), opt(r.sd_rate), fmt_num(r.mean_at_risk)]);
    write_rows(path, &CENSORING_RATES_HEADER, body)
}

pub const SURVIVAL_HEADER: [&str; 10] =
    ["profile", "approach", "censoring", "t0", "k", "mean_pred", "mean_se", "sd_pred", "true_pi", "true_unconditional"];

pub fn write_survival(path: &Path, rows: &[SurvivalRow]) -> crate::Result<()> {
    let body = rows.iter().map(|r| {
        vec![
            r.profile.clone(),
            r.approach.label().to_string(),
            r.method.clone(),
            fmt_num(r.t0),
            r.k.to_string(),
            fmt_num(r.mean_pred),
            opt(r.mean_se),
            opt(r.sd_pred),
            fmt_num(r.true_pi),
            opt(r.true_unconditional),
        ]
    });
    write_rows(path, &SURVIVAL_HEADER, body)
}

pub const EMPIRICAL_AV_HEADER: [&str; 5] = ["censoring", "t0", "coefficient", "k", "value"];

pub fn write_empirical_av(path: &Path, rows: &[AvDiffRow]) -> crate::Result<()> {
    let body = rows
        .iter()
        .map(|r| vec![r.method.clone(), fmt_num(r.t0), r.coefficient.clone(), r.k.to_string(), opt(r.value)]);
    write_rows(path, &EMPIRICAL_AV_HEADER, body)
}

pub const GENERATOR_HEADER: [&str; 7] = ["profile", "approach", "censoring", "t0", "backward", "inverse", "diff"];

pub fn write_generator(path: &Path, rows: &[GeneratorDiffRow]) -> crate::Result<()> {
    let body = rows.iter().map(|r| {
        vec![
            r.profile.clone(),
            r.approach.label().to_string(),
            r.method.clone(),
            fmt_num(r.t0),
            fmt_num(r.backward),
            fmt_num(r.inverse),
            fmt_num(r.diff),
        ]
    });
    write_rows(path, &GENERATOR_HEADER, body)
}

pub const AV_MATRIX_HEADER: [&str; 5] = ["censoring", "t0", "row", "col", "value"];
pub const AV_DIAGONAL_HEADER: [&str; 5] = ["censoring", "t0", "term", "value", "sign"];
