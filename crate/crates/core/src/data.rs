//! Subject records, validated datasets, and CSV ingestion/emission.
//!
//! The CSV schema is `u, delta, v, [c,] <covariates...>` with a required
//! header. Every column after `u`, `delta`, `v` and the optional `c` is a
//! covariate, kept in file order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::censoring::CensoringSpec;
use crate::error::{Error, Result};
use crate::estimation::Approach;
use crate::inference::SeMethod;

/// Tolerance for `u == c` when a censored record carries its censoring age.
pub const CENSORING_MATCH_TOL: f64 = 1e-9;

/// One observation: exit age `u = min(T, C)`, event flag, initial-event age
/// `v`, covariates, and the censoring age when it is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub u: f64,
    pub delta: u8,
    pub v: f64,
    pub z: Vec<f64>,
    pub c: Option<f64>,
}

impl SubjectRecord {
    pub fn is_event(&self) -> bool {
        self.delta == 1
    }

    /// Observed censoring time and whether it is an exact observation of C.
    ///
    /// With `c` present every subject contributes an exact C. Without it the
    /// pair `(u, 1 - delta)` is a right-censored observation of C.
    pub fn censoring_observation(&self) -> (f64, bool) {
        match self.c {
            Some(c) => (c, true),
            None => (self.u, self.delta == 0),
        }
    }
}

/// Unvalidated record as read from a file or handed over by a caller.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub u: f64,
    pub delta: f64,
    pub v: f64,
    pub z: Vec<f64>,
    pub c: Option<f64>,
}

impl From<&SubjectRecord> for RawRecord {
    fn from(r: &SubjectRecord) -> Self {
        RawRecord { u: r.u, delta: f64::from(r.delta), v: r.v, z: r.z.clone(), c: r.c }
    }
}

/// A validated, immutable collection of subject records sharing one
/// covariate dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<SubjectRecord>,
    p: usize,
    names: Vec<String>,
}

/// Per-age counts reported alongside validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskDiagnostics {
    pub t0: f64,
    pub at_risk: usize,
    pub observed_events: usize,
}

/// Returns true iff the subject is at risk at `t0`, i.e. `t0 >= v`.
pub fn risk_indicator(record: &SubjectRecord, t0: f64) -> bool {
    t0 >= record.v
}

pub fn validate_dataset(raw: Vec<RawRecord>, names: Option<Vec<String>>) -> Result<Dataset> {
    let first = raw.first().ok_or_else(|| Error::Empty("no records".into()))?;
    let p = first.z.len();
    let names = match names {
        Some(n) if n.len() == p => n,
        Some(n) => return Err(Error::InconsistentDimension { row: 0, expected: p, found: n.len() }),
        None => (1..=p).map(|j| format!("z_{j}")).collect(),
    };
    let mut records = Vec::with_capacity(raw.len());
    for (row, r) in raw.into_iter().enumerate() {
        records.push(validate_record(row, r, p)?);
    }
    Ok(Dataset { records, p, names })
}

fn validate_record(row: usize, r: RawRecord, p: usize) -> Result<SubjectRecord> {
    let finite = |x: f64, field: &str| {
        if x.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFiniteValue { row, field: field.to_string() })
        }
    };
    finite(r.u, "u")?;
    finite(r.delta, "delta")?;
    finite(r.v, "v")?;
    if let Some(c) = r.c {
        finite(c, "c")?;
    }
    if r.z.len() != p {
        return Err(Error::InconsistentDimension { row, expected: p, found: r.z.len() });
    }
    for (j, &x) in r.z.iter().enumerate() {
        finite(x, &format!("z_{}", j + 1))?;
    }
    let delta = if r.delta == 0.0 {
        0u8
    } else if r.delta == 1.0 {
        1u8
    } else {
        return Err(Error::DeltaOutOfRange { row, value: r.delta });
    };
    if r.u < 0.0 {
        return Err(Error::InvalidRecord { row, msg: format!("u = {} is negative", r.u) });
    }
    if r.v < 0.0 {
        return Err(Error::InvalidRecord { row, msg: format!("v = {} is negative", r.v) });
    }
    if let Some(c) = r.c {
        let ok = if delta == 1 { r.u <= c } else { (r.u - c).abs() <= CENSORING_MATCH_TOL };
        if !ok {
            return Err(Error::CensoringMismatch { row, u: r.u, c, delta });
        }
    }
    Ok(SubjectRecord { u: r.u, delta, v: r.v, z: r.z, c: r.c })
}

impl Dataset {
    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_censoring_ages(&self) -> bool {
        self.records.iter().all(|r| r.c.is_some())
    }

    /// Builds a dataset from records already known to be valid (used for
    /// resamples and simulated data).
    pub(crate) fn from_validated(records: Vec<SubjectRecord>, p: usize, names: Vec<String>) -> Self {
        debug_assert!(records.iter().all(|r| r.z.len() == p));
        Dataset { records, p, names }
    }

    /// New dataset made of the records at `indices` (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Dataset { records, p: self.p, names: self.names.clone() }
    }

    pub fn at_risk_count(&self, t0: f64) -> usize {
        self.records.iter().filter(|r| risk_indicator(r, t0)).count()
    }

    /// n*(t0): subjects with `v < t0` whose event was observed by `t0`.
    pub fn observed_event_count(&self, t0: f64) -> usize {
        self.records.iter().filter(|r| r.v < t0 && r.delta == 1 && r.u <= t0).count()
    }

    pub fn diagnostics(&self, grid: &[f64]) -> Vec<RiskDiagnostics> {
        grid.iter()
            .map(|&t0| RiskDiagnostics {
                t0,
                at_risk: self.at_risk_count(t0),
                observed_events: self.observed_event_count(t0),
            })
            .collect()
    }

    pub fn event_count(&self) -> usize {
        self.records.iter().filter(|r| r.delta == 1).count()
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
        let (iu, id, iv) = match (col("u"), col("delta"), col("v")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::Parse("header must contain u, delta and v".into())),
        };
        let ic = col("c");
        let zcols: Vec<usize> =
            (0..header.len()).filter(|&k| k != iu && k != id && k != iv && Some(k) != ic).collect();
        let names = zcols.iter().map(|&k| header[k].clone()).collect();

        let mut raw = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                let s = rec.get(k).unwrap_or("");
                s.parse::<f64>().map_err(|_| Error::Parse(format!("row {row}, column {}: '{s}'", header[k])))
            };
            let c = match ic {
                Some(k) if !rec.get(k).unwrap_or("").is_empty() => Some(num(k)?),
                _ => None,
            };
            raw.push(RawRecord {
                u: num(iu)?,
                delta: num(id)?,
                v: num(iv)?,
                c,
                z: zcols.iter().map(|&k| num(k)).collect::<Result<_>>()?,
            });
        }
        validate_dataset(raw, Some(names))
    }

    pub fn to_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(file)
    }

    /// Writes the dataset with shortest round-trip float formatting.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let with_c = self.has_censoring_ages();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["u".to_string(), "delta".into(), "v".into()];
        if with_c {
            header.push("c".into());
        }
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.u.to_string(), r.delta.to_string(), r.v.to_string()];
            if with_c {
                row.push(r.c.map(|c| c.to_string()).unwrap_or_default());
            }
            row.extend(r.z.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What to fit: analysis ages, estimating function, censoring estimator and
/// standard-error method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    pub t0_grid: Vec<f64>,
    pub approach: Approach,
    pub censoring: CensoringSpec,
    pub se_method: SeMethod,
}

impl AnalysisSpec {
    pub fn new(t0_grid: Vec<f64>, approach: Approach, censoring: CensoringSpec, se_method: SeMethod) -> Result<Self> {
        validate_grid(&t0_grid)?;
        se_method.validate()?;
        Ok(AnalysisSpec { t0_grid, approach, censoring, se_method })
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::ConfigInvalid("empty t0 grid".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::ConfigInvalid("t0 grid contains a non-finite age".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::ConfigInvalid("t0 grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Parses `start:end:step`, a single age, or a comma-separated list.
pub fn parse_t0_grid(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::ConfigInvalid("empty t0 grid".into()));
    }
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad age '{x}'")));
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("grid '{s}' is not start:end:step")));
        }
        let (start, end, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step <= 0.0 || end < start {
            return Err(Error::ConfigInvalid(format!("grid '{s}' is empty")));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| start + k as f64 * step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    validate_grid(&grid)?;
    Ok(grid)
}
