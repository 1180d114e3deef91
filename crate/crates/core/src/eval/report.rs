use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::similarity::PairMetrics;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub source_id: String,
    pub target_id: String,
    /// Utterance stem, used to order records deterministically.
    #[serde(default)]
    pub utterance: String,
    pub mae: f64,
    pub mse: f64,
    pub cos_theta: f64,
    pub e_norm: f64,
    pub frames_evaluated: usize,
}

impl PairRecord {
    pub fn new(source_id: &str, target_id: &str, utterance: &str, m: PairMetrics) -> Self {
        Self {
            source_id: source_id.into(),
            target_id: target_id.into(),
            utterance: utterance.into(),
            mae: m.mae,
            mse: m.mse,
            cos_theta: m.cos_theta,
            e_norm: m.e_norm,
            frames_evaluated: m.frames_evaluated,
        }
    }

    fn key(&self) -> (&str, &str, &str) {
        (&self.source_id, &self.target_id, &self.utterance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mae: f64,
    pub mse: f64,
    pub cos_theta: f64,
    pub e_norm: f64,
    pub pairs: usize,
}

impl Aggregate {
    pub fn of(records: &[PairRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Evaluation("no pairs to aggregate".into()));
        }
        let n = records.len() as f64;
        let mean = |f: fn(&PairRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            mae: mean(|r| r.mae),
            mse: mean(|r| r.mse),
            cos_theta: mean(|r| r.cos_theta),
            e_norm: mean(|r| r.e_norm),
            pairs: records.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub records: Vec<PairRecord>,
    pub aggregate: Aggregate,
}

impl MetricsBlock {
    /// Sorts by (source, target, utterance) and averages.
    pub fn new(mut records: Vec<PairRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.key().cmp(&b.key()));
        let aggregate = Aggregate::of(&records)?;
        Ok(Self { records, aggregate })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Free-form label such as `seen-to-seen`.
    pub setting: String,
    pub conversion: MetricsBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<MetricsBlock>,
    /// Generator milliseconds per second of audio, when measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_ms_per_s: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config_hash: String,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn csv_header() -> &'static str {
        "setting,mode,mae,mse,cos_theta,e_norm,speed_ms_per_s\n"
    }

    /// One row per block in the column order MAE, MSE, cos, e_norm, speed.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        let speed = self.speed_ms_per_s.map(|s| format!("{s:.4}")).unwrap_or_default();
        let mut row = |mode: &str, a: &Aggregate, speed: &str| {
            let _ = writeln!(
                out,
                "{},{mode},{:.6},{:.6},{:.6},{:.6},{speed}",
                self.setting, a.mae, a.mse, a.cos_theta, a.e_norm
            );
        };
        row("conversion", &self.conversion.aggregate, &speed);
        if let Some(r) = &self.reconstruction {
            row("reconstruction", &r.aggregate, "");
        }
        out
    }
}

/// Writes several reports as one CSV table.
pub fn write_csv(reports: &[MetricsReport], path: impl AsRef<Path>) -> Result<()> {
    let mut s = MetricsReport::csv_header().to_string();
    for r in reports {
        s.push_str(&r.csv_rows());
    }
    std::fs::write(path, s)?;
    Ok(())
}
