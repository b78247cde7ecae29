//! Experiment logs: outcome/arm metadata, per-unit records, validation,
//! sample ATEs and holdout splitting.
//!
//! Arm ids are 1-based everywhere in the public API; arm 1 is the control.
//! Outcome indices are 0-based and follow the `y_0..y_{m-1}` log columns.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, streams};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("arm {arm} has no records")]
    MissingArm { arm: usize },
    #[error("holdout fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("invalid log: {0}")]
    Invalid(String),
    #[error("log parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// +1 for maximize, -1 for minimize.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Maximize => 1.0,
            Direction::Minimize => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    pub direction: Direction,
}

impl OutcomeSpec {
    pub fn new(name: impl Into<String>, direction: Direction) -> Self {
        Self { name: name.into(), direction }
    }

    /// `y_0..y_{m-1}`, all maximized.
    pub fn default_specs(m: usize) -> Vec<OutcomeSpec> {
        (0..m).map(|j| OutcomeSpec::new(format!("y_{j}"), Direction::Maximize)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentArm {
    pub id: usize,
    pub label: String,
}

impl TreatmentArm {
    pub fn is_control(&self) -> bool {
        self.id == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub unit_id: String,
    pub covariates: Vec<f64>,
    pub arm: usize,
    pub propensity: f64,
    pub outcomes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDataset {
    pub records: Vec<UnitRecord>,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub outcome_specs: Vec<OutcomeSpec>,
}

/// One invariant violation, tied to the offending record (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub record: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.record {
            Some(i) => write!(f, "record {i}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl LogDataset {
    pub fn empty(n: usize, m: usize, d: usize, outcome_specs: Vec<OutcomeSpec>) -> Self {
        Self { records: Vec::new(), n, m, d, outcome_specs }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn arms(&self) -> Vec<TreatmentArm> {
        (1..=self.n)
            .map(|id| TreatmentArm {
                id,
                label: if id == 1 { "control".to_string() } else { format!("treatment_{}", id - 1) },
            })
            .collect()
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.outcome_specs.iter().map(|s| s.direction).collect()
    }

    /// Same metadata, records picked by index (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> LogDataset {
        LogDataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            n: self.n,
            m: self.m,
            d: self.d,
            outcome_specs: self.outcome_specs.clone(),
        }
    }

    /// Appends records from a log with identical dimensions.
    pub fn extend_from(&mut self, other: &LogDataset) -> Result<(), DataError> {
        if other.n != self.n || other.m != self.m || other.d != self.d {
            return Err(DataError::Invalid(format!(
                "dimension mismatch: (n,m,d)=({},{},{}) vs ({},{},{})",
                self.n, self.m, self.d, other.n, other.m, other.d
            )));
        }
        self.records.extend(other.records.iter().cloned());
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        let mut header = vec!["unit_id".to_string(), "arm".to_string(), "propensity".to_string()];
        header.extend((0..self.d).map(|k| format!("x_{k}")));
        header.extend((0..self.m).map(|j| format!("y_{j}")));
        w.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for r in &self.records {
            row.clear();
            row.push(r.unit_id.clone());
            row.push(r.arm.to_string());
            // f64 Display is the shortest string that round-trips.
            row.push(r.propensity.to_string());
            row.extend(r.covariates.iter().map(|v| v.to_string()));
            row.extend(r.outcomes.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the log file format. `n` is the arm count, which the file
    /// cannot carry when some arm has no records.
    pub fn read_csv<R: Read>(
        reader: R,
        n: usize,
        outcome_specs: Option<Vec<OutcomeSpec>>,
    ) -> Result<LogDataset, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 3 || cols[0] != "unit_id" || cols[1] != "arm" || cols[2] != "propensity" {
            return Err(DataError::Parse {
                line: 1,
                message: "header must start with unit_id,arm,propensity".into(),
            });
        }
        let d = cols.iter().filter(|c| c.starts_with("x_")).count();
        let m = cols.iter().filter(|c| c.starts_with("y_")).count();
        for (k, c) in cols[3..].iter().enumerate() {
            let expected = if k < d { format!("x_{k}") } else { format!("y_{}", k - d) };
            if *c != expected {
                return Err(DataError::Parse {
                    line: 1,
                    message: format!("expected column {expected}, found {c}"),
                });
            }
        }
        let specs = match outcome_specs {
            Some(s) if s.len() == m => s,
            Some(s) => {
                return Err(DataError::Invalid(format!(
                    "{} outcome specs for {m} outcome columns",
                    s.len()
                )))
            }
            None => OutcomeSpec::default_specs(m),
        };
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let parse = |s: &str| -> Result<f64, DataError> {
                s.parse::<f64>()
                    .map_err(|e| DataError::Parse { line, message: format!("{s:?}: {e}") })
            };
            if row.len() != 3 + d + m {
                return Err(DataError::Parse {
                    line,
                    message: format!("expected {} fields, found {}", 3 + d + m, row.len()),
                });
            }
            let arm = row[1]
                .parse::<usize>()
                .map_err(|e| DataError::Parse { line, message: format!("arm: {e}") })?;
            records.push(UnitRecord {
                unit_id: row[0].to_string(),
                arm,
                propensity: parse(&row[2])?,
                covariates: (0..d).map(|k| parse(&row[3 + k])).collect::<Result<_, _>>()?,
                outcomes: (0..m).map(|j| parse(&row[3 + d + j])).collect::<Result<_, _>>()?,
            });
        }
        Ok(LogDataset { records, n, m, d, outcome_specs: specs })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(
        path: &Path,
        n: usize,
        outcome_specs: Option<Vec<OutcomeSpec>>,
    ) -> Result<LogDataset, DataError> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), n, outcome_specs)
    }
}

pub fn validate_log(log: &LogDataset) -> ValidationReport {
    let mut violations = Vec::new();
    let mut global = |message: String| violations.push(Violation { record: None, message });
    if log.n < 1 {
        global("n must be at least 1".into());
    }
    if log.m < 1 {
        global("m must be at least 1".into());
    }
    if log.outcome_specs.len() != log.m {
        global(format!("{} outcome specs for m = {}", log.outcome_specs.len(), log.m));
    }
    let mut names = BTreeSet::new();
    for s in &log.outcome_specs {
        if !names.insert(s.name.as_str()) {
            global(format!("duplicate outcome name {:?}", s.name));
        }
    }
    for (i, r) in log.records.iter().enumerate() {
        let mut bad = |message: String| violations.push(Violation { record: Some(i), message });
        if !(r.propensity > 0.0 && r.propensity <= 1.0) {
            bad(format!("propensity {} outside (0, 1]", r.propensity));
        }
        if r.arm < 1 || r.arm > log.n {
            bad(format!("arm out of range: {} not in [1, {}]", r.arm, log.n));
        }
        if r.covariates.len() != log.d {
            bad(format!("covariate length {} != d = {}", r.covariates.len(), log.d));
        }
        if r.outcomes.len() != log.m {
            bad(format!("outcome length {} != m = {}", r.outcomes.len(), log.m));
        }
        if r.covariates.iter().any(|v| !v.is_finite()) {
            bad("non-finite covariate".into());
        }
        if r.outcomes.iter().any(|v| !v.is_finite()) {
            bad("non-finite outcome".into());
        }
    }
    ValidationReport { violations }
}

/// Sample average treatment effects, n×m, row `i-1` holds arm `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AteMatrix {
    values: DMatrix<f64>,
}

impl AteMatrix {
    /// Row for arm 1 is forced to zero.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut values = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        if n > 0 {
            values.row_mut(0).fill(0.0);
        }
        Self { values }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    /// ATE of `arm` (1-based) on outcome `outcome` (0-based).
    pub fn get(&self, arm: usize, outcome: usize) -> f64 {
        self.values[(arm - 1, outcome)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

impl Serialize for AteMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for AteMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Ok(AteMatrix::from_rows(&rows))
    }
}

/// Per-arm sample means, n×m. Errors on an arm without records.
pub fn arm_means(log: &LogDataset) -> Result<DMatrix<f64>, DataError> {
    let mut sums = DMatrix::<f64>::zeros(log.n, log.m);
    let mut counts = vec![0usize; log.n];
    for r in &log.records {
        counts[r.arm - 1] += 1;
        for (j, y) in r.outcomes.iter().enumerate() {
            sums[(r.arm - 1, j)] += y;
        }
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(DataError::MissingArm { arm: i + 1 });
    }
    for (i, &c) in counts.iter().enumerate() {
        sums.row_mut(i).scale_mut(1.0 / c as f64);
    }
    Ok(sums)
}

pub fn compute_ate(log: &LogDataset) -> Result<AteMatrix, DataError> {
    let means = arm_means(log)?;
    let mut values = DMatrix::zeros(log.n, log.m);
    for i in 1..log.n {
        for j in 0..log.m {
            values[(i, j)] = means[(i, j)] - means[(0, j)];
        }
    }
    Ok(AteMatrix { values })
}

/// Random disjoint partition into (main, holdout) with
/// `round(fraction * N)` holdout units; record order is preserved.
pub fn split_log(
    log: &LogDataset,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(LogDataset, LogDataset), DataError> {
    if !(0.0..=1.0).contains(&holdout_fraction) {
        return Err(DataError::BadFraction(holdout_fraction));
    }
    let total = log.len();
    let k = (holdout_fraction * total as f64).round() as usize;
    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(&mut stream_rng(seed, streams::SPLIT));
    let mut in_holdout = vec![false; total];
    for &i in &idx[..k] {
        in_holdout[i] = true;
    }
    let (hold, main): (Vec<usize>, Vec<usize>) = (0..total).partition(|&i| in_holdout[i]);
    Ok((log.select(&main), log.select(&hold)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: usize, arm: usize, y: f64) -> UnitRecord {
        UnitRecord {
            unit_id: format!("u{id}"),
            covariates: vec![id as f64 * 0.1],
            arm,
            propensity: 0.5,
            outcomes: vec![y],
        }
    }

    fn small_log() -> LogDataset {
        LogDataset {
            records: (0..10).map(|i| rec(i, 1 + i % 2, i as f64)).collect(),
            n: 2,
            m: 1,
            d: 1,
            outcome_specs: OutcomeSpec::default_specs(1),
        }
    }

    #[test]
    fn well_formed_log_is_ok() {
        assert!(validate_log(&small_log()).is_ok());
    }

    #[test]
    fn zero_propensity_flagged_at_index() {
        let mut log = small_log();
        log.records[3].propensity = 0.0;
        let report = validate_log(&log);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].record, Some(3));
    }

    #[test]
    fn arm_out_of_range_flagged() {
        let mut log = small_log();
        log.records[7].arm = 3;
        let report = validate_log(&log);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].record, Some(7));
        assert!(report.violations[0].message.contains("arm out of range"));
    }

    #[test]
    fn length_mismatch_and_duplicate_names() {
        let mut log = small_log();
        log.records[0].outcomes.push(1.0);
        log.outcome_specs.push(OutcomeSpec::new("y_0", Direction::Minimize));
        let report = validate_log(&log);
        assert!(report.violations.iter().any(|v| v.record == Some(0)));
        assert!(report.violations.iter().any(|v| v.message.contains("duplicate")));
    }

    #[test]
    fn ate_hand_example() {
        let log = LogDataset {
            records: vec![rec(0, 1, 1.0), rec(1, 1, 3.0), rec(2, 2, 4.0), rec(3, 2, 6.0)],
            n: 2,
            m: 1,
            d: 1,
            outcome_specs: OutcomeSpec::default_specs(1),
        };
        let ate = compute_ate(&log).unwrap();
        assert_eq!(ate.get(1, 0), 0.0);
        assert_eq!(ate.get(2, 0), 3.0);
    }

    #[test]
    fn ate_zero_when_no_effect() {
        let mut log = small_log();
        for r in &mut log.records {
            r.outcomes[0] = 2.5;
        }
        let ate = compute_ate(&log).unwrap();
        assert!(ate.matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ate_missing_arm_named() {
        let mut log = small_log();
        log.n = 3;
        match compute_ate(&log) {
            Err(DataError::MissingArm { arm }) => assert_eq!(arm, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_counts_and_determinism() {
        let log = LogDataset {
            records: (0..1000).map(|i| rec(i, 1 + i % 2, 0.0)).collect(),
            n: 2,
            m: 1,
            d: 1,
            outcome_specs: OutcomeSpec::default_specs(1),
        };
        let (main, hold) = split_log(&log, 0.05, 9).unwrap();
        assert_eq!(hold.len(), 50);
        assert_eq!(main.len(), 950);
        let ids: BTreeSet<_> = main.records.iter().map(|r| &r.unit_id).collect();
        assert!(hold.records.iter().all(|r| !ids.contains(&r.unit_id)));
        let (main2, hold2) = split_log(&log, 0.05, 9).unwrap();
        assert_eq!(main, main2);
        assert_eq!(hold, hold2);
        let (_, empty) = split_log(&log, 0.0, 9).unwrap();
        assert!(empty.is_empty());
        assert!(matches!(split_log(&log, 1.5, 9), Err(DataError::BadFraction(_))));
    }

    #[test]
    fn csv_header_and_roundtrip() {
        let mut log = small_log();
        log.records[1].outcomes[0] = 0.1 + 0.2;
        log.records[2].covariates[0] = -1.0e-300;
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "unit_id,arm,propensity,x_0,y_0");
        assert!(text.lines().all(|l| !l.ends_with(',')));
        let back = LogDataset::read_csv(buf.as_slice(), 2, None).unwrap();
        assert_eq!(back, log);
    }
}
