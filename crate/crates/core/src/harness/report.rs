//! Result rows and the append-only CSV report.

use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;

pub const CSV_HEADER: &str = "experiment,dict_source,dict_classes,target,n_train,k,sigma,\
assignment,pooling,n_runs,mean_acc,ci_low,ci_high";

/// Test accuracy of one (dictionary, split) run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub accuracy: f64,
    pub seed: u64,
    pub n_train: usize,
    pub dictionary_id: String,
}

/// Aggregate over the runs of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub dict_source: String,
    pub dict_classes: usize,
    /// Labels the dictionaries were drawn from.
    pub dict_class_labels: Vec<String>,
    pub target: String,
    pub n_train: usize,
    pub k: usize,
    pub sigma: f64,
    pub assignment: String,
    pub pooling: String,
    pub n_runs: usize,
    pub mean_acc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: Vec<TrialResult>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl SummaryRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
            csv_field(&self.experiment),
            csv_field(&self.dict_source),
            self.dict_classes,
            csv_field(&self.target),
            self.n_train,
            self.k,
            self.sigma,
            self.assignment,
            self.pooling,
            self.n_runs,
            self.mean_acc,
            self.ci_low,
            self.ci_high
        )
    }
}

pub fn write_rows(w: &mut impl Write, rows: &[SummaryRow], header: bool) -> io::Result<()> {
    if header {
        writeln!(w, "{CSV_HEADER}")?;
    }
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

/// Appends rows to `path`, writing the header first when the file is new
/// or empty.
pub fn append_csv(path: &Path, rows: &[SummaryRow]) -> io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = f.metadata()?.len() == 0;
    write_rows(&mut f, rows, fresh)
}
