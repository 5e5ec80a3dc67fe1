//! JSON report schema `rcr-report/1`. Field order is fixed by the struct
//! definitions, so identical runs serialize byte-identically.

use serde::Serialize;

use rcr::{CorrectionTable, SigmaEstimate, SigmaValue};

pub const SCHEMA: &str = "rcr-report/1";

#[derive(Serialize)]
pub struct Report<T: Serialize> {
    pub schema: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config: serde_json::Value,
    pub correction_table: TableMeta,
    pub result: T,
}

#[derive(Serialize)]
pub struct TableMeta {
    pub version: String,
    pub seed: u64,
    pub entries: usize,
}

impl TableMeta {
    pub fn from_table(table: &CorrectionTable) -> Self {
        TableMeta {
            version: table.version().to_string(),
            seed: table.seed(),
            entries: table.len(),
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaJson {
    TwoSided { value: f64 },
    OneSided { below: f64, above: f64 },
}

impl SigmaJson {
    pub fn from_value(value: &SigmaValue) -> Self {
        match *value {
            SigmaValue::TwoSided(v) => SigmaJson::TwoSided { value: v },
            SigmaValue::OneSided { below, above } => SigmaJson::OneSided { below, above },
        }
    }

    pub fn from_estimate(estimate: &SigmaEstimate) -> Self {
        Self::from_value(&estimate.value)
    }
}

#[derive(Serialize)]
pub struct StageJson {
    pub stage: String,
    pub n: usize,
    pub mu: f64,
    pub sigma: SigmaJson,
    pub rejected: Vec<usize>,
}

#[derive(Serialize)]
pub struct RejectOutcome {
    pub n: usize,
    pub mu: f64,
    pub sigma: SigmaJson,
    pub kept: Vec<usize>,
    pub rejected: Vec<usize>,
    pub stage_log: Vec<StageJson>,
}

#[derive(Serialize)]
pub struct FitStageJson {
    pub stage: String,
    pub n: usize,
    pub theta: Vec<f64>,
    pub sigma: SigmaJson,
    pub rejected: Vec<usize>,
}

#[derive(Serialize)]
pub struct EnsembleSummary {
    pub size: usize,
    pub exhaustive: bool,
    pub degenerate_dropped: usize,
}

#[derive(Serialize)]
pub struct FitOutcome {
    pub model: String,
    pub n: usize,
    pub theta: Vec<f64>,
    pub pivot: Option<Vec<f64>>,
    pub sigma: SigmaJson,
    pub kept: Vec<usize>,
    pub rejected: Vec<usize>,
    pub ensemble: EnsembleSummary,
    pub stage_log: Vec<FitStageJson>,
}

pub fn render<T: Serialize>(report: &Report<T>) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("reports serialize");
    text.push('\n');
    text
}
