use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use frontlab::asymptotics::{DecayFit, PredictedRates, ResidueAmplitude};
use frontlab::greens::GreensDiagnostics;
use frontlab::hypotheses::HypothesisReport;
use frontlab::model::ModelSummary;
use frontlab::spectrum::{Classification, RangeIdentity, SpectrumReport};
use frontlab::wave::WaveHeader;
use frontlab::{Error, Result};

/// Bumped whenever a field changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;
pub const SCHEMA_NAME: &str = "frontlab-run-report";

/// A numeric claim together with the bound it was held to.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `"<"` or `">"`: how `value` must compare with `tolerance`.
    pub relation: &'static str,
    pub passed: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            relation: "<",
            passed: value < tolerance,
        }
    }

    pub fn above(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            relation: ">",
            passed: value > tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RatesSection {
    pub window: [f64; 2],
    pub predicted: PredictedRates,
    pub fits: Vec<DecayFit>,
    pub amplitudes: Vec<ResidueAmplitude>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSection {
    pub report: SpectrumReport,
    pub classification: Classification,
    pub range_identity: RangeIdentity,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub schema_version: u32,
    pub command: String,
    /// `pass`, `fail` (a check failed) or `error` (the pipeline stopped).
    pub status: &'static str,
    pub exit_code: i32,
    pub error: Option<String>,
    pub config: BTreeMap<String, serde_json::Value>,
    pub model: Option<ModelSummary>,
    pub checks: Vec<Check>,
    pub hypotheses: Option<HypothesisReport>,
    pub wave: Option<WaveHeader>,
    pub rates: Option<RatesSection>,
    pub spectrum: Option<SpectrumSection>,
    pub greens: Option<GreensDiagnostics>,
    /// Files written next to the report.
    pub outputs: Vec<String>,
    /// Seconds per stage; omitted in reproducible runs.
    pub timings: Option<BTreeMap<String, f64>>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self {
            schema: SCHEMA_NAME,
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            status: "pass",
            exit_code: 0,
            error: None,
            config: BTreeMap::new(),
            model: None,
            checks: Vec::new(),
            hypotheses: None,
            wave: None,
            rates: None,
            spectrum: None,
            greens: None,
            outputs: Vec::new(),
            timings: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Sets status and exit code from the checks (or from `error`).
    pub fn finish(&mut self, error: Option<&Error>) {
        if let Some(e) = error {
            self.status = "error";
            self.exit_code = if e.is_usage() { 2 } else { 1 };
            self.error = Some(e.to_string());
        } else if self.passed() {
            self.status = "pass";
            self.exit_code = 0;
        } else {
            self.status = "fail";
            self.exit_code = 1;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub schema: &'static str,
    pub schema_version: u32,
    pub exit_code: i32,
    pub runs: Vec<RunReport>,
    pub timings: Option<BTreeMap<String, f64>>,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(format!("report serialization: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
