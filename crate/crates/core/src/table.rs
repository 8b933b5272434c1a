//! CSV output: the long-format results table and plot data.
//!
//! Floating-point cells carry 17 significant digits (`{:.16e}`), so every
//! value round-trips exactly and identical runs give identical bytes.

use std::io::Write;

use crate::ensemble::{EnsembleSummary, Histogram, Metric, Stat, SweepCell};
use crate::error::Result;
use crate::grid::Grid;
use crate::model::{Interpretation, ModelSpec};

pub const HEADER: [&str; 14] = [
    "run_id",
    "alpha",
    "nu",
    "mu",
    "xi",
    "interpretation",
    "estimator",
    "value",
    "std_error",
    "width_mean",
    "completed",
    "blown_up",
    "extinct",
    "seed",
];

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub run_id: String,
    pub alpha: f64,
    pub nu: f64,
    pub mu: f64,
    pub xi: f64,
    pub interpretation: Interpretation,
    pub estimator: String,
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    pub width_mean: Option<f64>,
    pub completed: usize,
    pub blown_up: usize,
    pub extinct: usize,
    pub seed: u64,
}

impl Row {
    fn record(&self) -> [String; 14] {
        [
            self.run_id.clone(),
            num(self.alpha),
            num(self.nu),
            num(self.mu),
            num(self.xi),
            self.interpretation.name().to_string(),
            self.estimator.clone(),
            opt(self.value),
            opt(self.std_error),
            opt(self.width_mean),
            self.completed.to_string(),
            self.blown_up.to_string(),
            self.extinct.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Identity of the configuration a group of rows belongs to.
#[derive(Debug, Clone)]
pub struct RunInfo {
    pub run_id: String,
    pub model: ModelSpec,
    pub xi: f64,
    pub seed: u64,
}

impl RunInfo {
    pub fn row(&self, estimator: &str, value: Option<f64>, std_error: Option<f64>) -> Row {
        Row {
            run_id: self.run_id.clone(),
            alpha: self.model.alpha,
            nu: self.model.nu,
            mu: self.model.mu,
            xi: self.xi,
            interpretation: self.model.interpretation,
            estimator: estimator.to_string(),
            value,
            std_error,
            width_mean: None,
            completed: 0,
            blown_up: 0,
            extinct: 0,
            seed: self.seed,
        }
    }
}

/// One row per estimator: the mean with its standard error, followed by a
/// `<name>_std` row with the sample standard deviation, then the pooled
/// instantaneous-speed spread and the completed fraction.
pub fn summary_rows(info: &RunInfo, s: &EnsembleSummary) -> Vec<Row> {
    let width = s.metric(Metric::Width).map(|w| w.mean);
    let with_counts = |mut r: Row| {
        r.width_mean = width;
        r.completed = s.completed;
        r.blown_up = s.blown_up;
        r.extinct = s.extinct;
        r
    };
    let mut rows = Vec::new();
    for m in Metric::ALL {
        let stat: Option<Stat> = s.metric(m);
        rows.push(with_counts(info.row(m.name(), stat.map(|x| x.mean), stat.map(|x| x.std_error))));
        rows.push(with_counts(info.row(&format!("{}_std", m.name()), stat.map(|x| x.std), None)));
    }
    rows.push(with_counts(info.row(
        "lambda_spread",
        s.lambda_spread.map(|x| x.std),
        None,
    )));
    rows.push(with_counts(info.row("completed_fraction", Some(s.completed_fraction()), None)));
    rows
}

/// Row of a failed ensemble: the error message in place of an estimator.
pub fn failure_row(info: &RunInfo, message: &str) -> Row {
    info.row(&format!("failed: {message}"), None, None)
}

/// Rows of an ensemble in which no realization reached `T`: the failure and
/// a zero completed fraction, both carrying the failure counts.
pub fn all_failed_rows(info: &RunInfo, realizations: usize, blown_up: usize, extinct: usize) -> Vec<Row> {
    let counts = |mut r: Row| {
        r.blown_up = blown_up;
        r.extinct = extinct;
        r
    };
    let message = format!("all {realizations} realizations failed");
    vec![
        counts(failure_row(info, &message)),
        counts(info.row("completed_fraction", Some(0.0), None)),
    ]
}

pub fn sweep_rows(base_id: &str, nu: f64, seed: u64, cells: &[SweepCell]) -> Vec<Row> {
    let mut rows = Vec::new();
    for cell in cells {
        let info = RunInfo {
            run_id: format!(
                "{base_id}/{}/alpha={}/mu2={}/xi={}",
                cell.interpretation.name(),
                cell.alpha,
                cell.mu2,
                cell.xi
            ),
            model: ModelSpec {
                alpha: cell.alpha,
                nu,
                mu: cell.mu2.sqrt(),
                interpretation: cell.interpretation,
            },
            xi: cell.xi,
            seed,
        };
        match &cell.summary {
            Ok(s) => rows.extend(summary_rows(&info, s)),
            Err(e) => rows.push(failure_row(&info, e)),
        }
    }
    rows
}

pub fn write_rows<W: Write>(w: W, rows: &[Row]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    for r in rows {
        out.write_record(r.record())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_histogram<W: Write>(w: W, h: &Histogram) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_left", "bin_right", "count"])?;
    for (k, c) in h.counts.iter().enumerate() {
        out.write_record([num(h.edges[k]), num(h.edges[k + 1]), c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_profile<W: Write>(w: W, grid: &Grid, u: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "u"])?;
    for (i, v) in u.iter().enumerate() {
        out.write_record([num(grid.x(i)), num(*v)])?;
    }
    out.flush()?;
    Ok(())
}

/// `t, lambda` of the ensemble-mean instantaneous speed.
pub fn write_series<W: Write>(w: W, times: &[f64], values: &[f64], name: &str) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", name])?;
    for (t, v) in times.iter().zip(values) {
        out.write_record([num(*t), num(*v)])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info() -> RunInfo {
        RunInfo {
            run_id: "spde".into(),
            model: ModelSpec {
                alpha: -0.25,
                nu: 0.0,
                mu: 0.1,
                interpretation: Interpretation::Stratonovich,
            },
            xi: 0.1,
            seed: 42,
        }
    }

    #[test]
    fn numbers_keep_seventeen_digits() {
        let x = 0.1 + 0.2;
        let s = num(x);
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(s.parse::<f64>().unwrap(), x);
        let digits = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(digits.len(), 17);
    }

    #[test]
    fn csv_has_header_and_quotes_commas() {
        let mut buf = Vec::new();
        let rows = vec![info().row("lambda_c", Some(1.0), Some(0.01)), failure_row(&info(), "a, b")];
        write_rows(&mut buf, &rows).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), HEADER.to_vec());
        let recs: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(recs.len(), 2);
        assert_eq!(&recs[1][6], "failed: a, b");
        assert_eq!(recs[0][7].parse::<f64>().unwrap(), 1.0);
        assert_eq!(&recs[0][13], "42");
    }
}
