//! Experiment harness: configuration, named experiments, verdicts and
//! report emission.
//!
//! A run is fully determined by its [`ExperimentConfig`]. Every experiment
//! records its per-seed results as [`Table`]s; verdicts and aggregates are
//! computed from those tables alone by [`judge`], so they can be recomputed
//! from the emitted CSV files.

mod experiments;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::complexity::DEFAULT_CELL_BUDGET;
use crate::erm::LossSpec;
use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::meanwidth::NoiseModel;
use crate::search::SearchConfig;

pub use experiments::judge;

/// Version of the configuration and report schema.
pub const SCHEMA_VERSION: u32 = 1;

/// Named experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    EntropyEquality,
    ZeroEntropyFamilies,
    MeanWidth,
    ConsistencySubcritical,
    InconsistencySigma,
    DistortionLab,
    Sudakov,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::EntropyEquality,
        Experiment::ZeroEntropyFamilies,
        Experiment::MeanWidth,
        Experiment::ConsistencySubcritical,
        Experiment::InconsistencySigma,
        Experiment::DistortionLab,
        Experiment::Sudakov,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::EntropyEquality => "entropy_equality",
            Experiment::ZeroEntropyFamilies => "zero_entropy_families",
            Experiment::MeanWidth => "mean_width",
            Experiment::ConsistencySubcritical => "consistency_subcritical",
            Experiment::InconsistencySigma => "inconsistency_sigma",
            Experiment::DistortionLab => "distortion_lab",
            Experiment::Sudakov => "sudakov",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Experiment::EntropyEquality => "covering entropy of the full logistic map under p = 2 and p = inf",
            Experiment::ZeroEntropyFamilies => "covering entropy of rotation, subcritical logistic and Thue-Morse families",
            Experiment::MeanWidth => "Gaussian mean width of zero-entropy families and of the full logistic map",
            Experiment::ConsistencySubcritical => "least squares fits of a noisy subcritical logistic orbit",
            Experiment::InconsistencySigma => "least squares fits of a noisy constant by identity vs chaos; auxiliary loss",
            Experiment::DistortionLab => "coupling LP bounds on quantized process pairs; signal-noise identity",
            Experiment::Sudakov => "packing lemma probe sweep and Sudakov cross-check",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Resource caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budget {
    /// Largest `|sample| · n` accepted by a covering-number cell.
    pub cell_budget: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self { cell_budget: DEFAULT_CELL_BUDGET }
    }
}

/// Initial-state grid spacing on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// Points `sin²(π u / 2)` for equispaced `u`, denser near the endpoints.
    Arcsine,
}

/// Experiment configuration. Unset optional fields take per-experiment
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    /// Initial states per coordinate in complexity samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_spacing: Option<Spacing>,
    /// Parameter points for complexity samples (defaults to the family grid).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<Vec<f64>>>,
    /// Series length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Ground-truth parameter for fitting experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub budget: Budget,
}

impl ExperimentConfig {
    /// Configuration with every optional field unset.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            family: None,
            noise: None,
            horizons: None,
            radii: None,
            seeds: None,
            loss: None,
            search: None,
            replicates: None,
            grid_points: None,
            x_spacing: None,
            thetas: None,
            n: None,
            truth: None,
            block_length: None,
            bins: None,
            output_dir: None,
            budget: Budget::default(),
        }
    }

    /// Parse and validate a JSON configuration. Errors carry the path of the
    /// offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config { path, message: e.into_inner().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config { path: ".".into(), message: format!("cannot read {}: {e}", path.display()) })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| Err(Error::Config { path: path.into(), message });
        if self.schema_version != SCHEMA_VERSION {
            return bad("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        if let Some(f) = &self.family {
            if let Err(e) = f.build() {
                return bad("family", e.to_string());
            }
        }
        if let Some(noise) = &self.noise {
            if let Err(e) = noise.validate() {
                return bad("noise", e.to_string());
            }
        }
        if let Some(h) = &self.horizons {
            if h.is_empty() || h[0] == 0 || h.windows(2).any(|w| w[0] >= w[1]) {
                return bad("horizons", "horizons must be positive and strictly increasing".into());
            }
        }
        if let Some(r) = &self.radii {
            if r.is_empty() || r.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return bad("radii", "radii must be positive and finite".into());
            }
        }
        if let Some(s) = &self.seeds {
            if s.is_empty() {
                return bad("seeds", "at least one seed is required".into());
            }
        }
        if let Some(s) = &self.search {
            if let Err(e) = s.validate() {
                return bad("search", e.to_string());
            }
        }
        for (key, v) in [
            ("replicates", self.replicates),
            ("grid_points", self.grid_points),
            ("n", self.n),
            ("block_length", self.block_length),
            ("bins", self.bins),
        ] {
            if v == Some(0) {
                return bad(key, "must be positive".into());
            }
        }
        if self.budget.cell_budget == 0 {
            return bad("budget.cell_budget", "must be positive".into());
        }
        Ok(())
    }

    /// Seeds in use, with an experiment-specific default.
    pub(crate) fn seeds_or(&self, count: u64) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| (0..count).collect())
    }
}

// ---------------------------------------------------------------------------
// Tables

/// One table cell: a finite number or a text label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn parse(field: &str) -> Self {
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => Cell::Num(v),
            _ => Cell::Text(field.to_string()),
        }
    }
}

macro_rules! num_cell {
    ($($t:ty),*) => {$(
        impl From<$t> for Cell {
            fn from(v: $t) -> Self {
                Cell::Num(v as f64)
            }
        }
    )*};
}
num_cell!(f64, usize, u64, i64);

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.into())
    }
}

/// A rectangular table of recorded results.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        if let Some(bad) = row.iter().find(|c| matches!(c, Cell::Num(v) if !v.is_finite())) {
            panic!("non-finite table cell {bad:?}");
        }
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidArgument(format!("table has no column `{name}`")))
    }

    pub fn num(&self, row: usize, col: &str) -> Result<f64> {
        match &self.rows[row][self.column(col)?] {
            Cell::Num(v) => Ok(*v),
            Cell::Text(s) => Err(Error::InvalidArgument(format!("column `{col}` holds text `{s}`, not a number"))),
        }
    }

    pub fn text(&self, row: usize, col: &str) -> Result<String> {
        Ok(self.rows[row][self.column(col)?].render())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.columns)?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(Cell::render))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let columns = rdr.headers()?.iter().map(str::to_string).collect();
        let mut t = Table { columns, rows: Vec::new() };
        for rec in rdr.records() {
            t.rows.push(rec?.iter().map(Cell::parse).collect());
        }
        Ok(t)
    }
}

// ---------------------------------------------------------------------------
// Reports

/// Verdict on one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub criterion: String,
    pub pass: bool,
    /// Headline statistic compared against the threshold.
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub tables: BTreeMap<String, Table>,
    pub aggregates: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    pub budget_exceeded: Option<String>,
}

impl RunReport {
    /// True iff the run completed and every verdict passed.
    pub fn passed(&self) -> bool {
        self.budget_exceeded.is_none() && self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, id: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.id == id)
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables.get(name).ok_or_else(|| Error::InvalidArgument(format!("report has no table `{name}`")))
    }
}

/// Run a configured experiment. A budget error yields a partial report with
/// `budget_exceeded` set and no verdicts; other errors are returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut tables = BTreeMap::new();
    let outcome = experiments::run(cfg, &mut tables);
    let budget_exceeded = match outcome {
        Ok(()) => None,
        Err(Error::Budget(msg)) => Some(msg),
        Err(e) => return Err(e),
    };
    let (verdicts, aggregates) =
        if budget_exceeded.is_none() { judge(cfg.experiment, &tables)? } else { (Vec::new(), BTreeMap::new()) };
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.experiment,
        config: cfg.clone(),
        tables,
        aggregates,
        verdicts,
        budget_exceeded,
    })
}

/// Write `report.json` and one CSV per table into `dir`. Returns the paths
/// written.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::Internal(format!("report serialization: {e}")))?;
    json.push('\n');
    fs::write(&json_path, json)?;
    written.push(json_path);
    for (name, table) in &report.tables {
        let path = dir.join(format!("{name}.csv"));
        let file = fs::File::create(&path)?;
        table.write_csv(std::io::BufWriter::new(file))?;
        written.push(path);
    }
    Ok(written)
}

/// Read back the CSV tables written by [`emit_report`].
pub fn load_tables(dir: &Path) -> Result<BTreeMap<String, Table>> {
    let mut out = BTreeMap::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    for p in paths {
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        out.insert(name, Table::read_csv(fs::File::open(&p)?)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let err = ExperimentConfig::from_json(r#"{"schema_version":1,"experiment":"mean_width","sigma0_override":2}"#)
            .unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert!(message.contains("sigma0_override"), "{message}");
                assert!(path.contains("sigma0_override") || path == ".", "{path}");
            }
            other => panic!("{other:?}"),
        }
        let err = ExperimentConfig::from_json(
            r#"{"schema_version":1,"experiment":"mean_width","search":{"x_points":4,"bogus":1}}"#,
        )
        .unwrap_err();
        match err {
            Error::Config { path, .. } => assert!(path.starts_with("search"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::from_json(r#"{"schema_version":2,"experiment":"sudakov"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"experiment":"nope"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"experiment":"sudakov","horizons":[4,4]}"#).is_err());
        let bad_family = r#"{"schema_version":1,"experiment":"mean_width","family":{"id":"logistic","a_lo":0,"a_hi":5}}"#;
        match ExperimentConfig::from_json(bad_family) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "family"),
            other => panic!("{other:?}"),
        }
        let ok = ExperimentConfig::from_json(
            r#"{"schema_version":1,"experiment":"consistency_subcritical","seeds":[1,2],"noise":{"kind":"gaussian","sigma":0.5}}"#,
        )
        .unwrap();
        assert_eq!(ok.seeds_or(20), vec![1, 2]);
        let echo = serde_json::to_string(&ok).unwrap();
        assert_eq!(ExperimentConfig::from_json(&echo).unwrap(), ok);
    }

    #[test]
    fn tables_roundtrip_through_csv() {
        let mut t = Table::new(&["p", "x", "label"]);
        t.push(vec!["inf".into(), 0.1f64.into(), "a,b".into()]);
        t.push(vec![2.0f64.into(), (1.0f64 / 3.0).into(), "x".into()]);
        t.push(vec![1usize.into(), 1e-300.into(), "true".into()]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Table::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.text(0, "p").unwrap(), "inf");
        assert_eq!(back.text(1, "p").unwrap(), "2");
        assert!(back.num(0, "p").is_err());

        let empty = Table::new(&["n", "kappa_over_n"]);
        let mut buf = Vec::new();
        empty.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,kappa_over_n\n");
    }

    #[test]
    #[should_panic]
    fn non_finite_cells_are_refused() {
        Table::new(&["x"]).push(vec![f64::NAN.into()]);
    }
}
