//! Result records written by `extract`, `detect` and `batch`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use veinroi::{CircleHit, Error, RoiResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiRecord {
    pub center: (f64, f64),
    /// `round(500 * scale)`, reference pixels.
    pub side: u32,
    /// Crop side in image pixels.
    pub side_px: f64,
    pub rotation: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRecord {
    pub input: String,
    pub profile: String,
    pub status: Status,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Success {
        pegs: [CircleHit; 2],
        ambiguous: bool,
        scale: f64,
        roi: RoiRecord,
        output: Option<String>,
        overlay: Option<String>,
        enhanced: bool,
    },
    Failure {
        stage: Option<String>,
        kind: String,
        message: String,
    },
}

impl ExtractRecord {
    pub fn success(
        input: String,
        profile: String,
        r: &RoiResult,
        output: Option<String>,
        overlay: Option<String>,
        enhanced: bool,
    ) -> Self {
        ExtractRecord {
            input,
            profile,
            status: Status::Ok,
            outcome: Outcome::Success {
                pegs: [r.pegs.left, r.pegs.right],
                ambiguous: r.pegs.ambiguous,
                scale: r.scale,
                roi: RoiRecord {
                    center: r.spec.center,
                    side: r.spec.side,
                    side_px: r.spec.side_px(),
                    rotation: r.spec.rotation,
                    clamped: r.spec.clamped,
                },
                output,
                overlay,
                enhanced,
            },
        }
    }

    pub fn failure(input: String, profile: String, e: &Error) -> Self {
        ExtractRecord {
            input,
            profile,
            status: Status::Error,
            outcome: Outcome::Failure {
                stage: e.stage().map(|s| s.to_string()),
                kind: e.root().kind().to_string(),
                message: e.to_string(),
            },
        }
    }

    pub fn scale(&self) -> Option<f64> {
        match &self.outcome {
            Outcome::Success { scale, .. } => Some(*scale),
            Outcome::Failure { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub images: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub success_rate: f64,
    pub mean_scale: Option<f64>,
    pub failures_by_stage: BTreeMap<String, usize>,
    pub note: String,
}

impl BatchSummary {
    pub fn of(records: &[ExtractRecord]) -> Self {
        let scales: Vec<f64> = records.iter().filter_map(ExtractRecord::scale).collect();
        let mut failures_by_stage = BTreeMap::new();
        for r in records {
            if let Outcome::Failure { stage, .. } = &r.outcome {
                *failures_by_stage
                    .entry(stage.clone().unwrap_or_else(|| "unknown".into()))
                    .or_insert(0) += 1;
            }
        }
        let n = records.len();
        BatchSummary {
            images: n,
            succeeded: scales.len(),
            failed: n - scales.len(),
            success_rate: if n == 0 {
                0.0
            } else {
                scales.len() as f64 / n as f64
            },
            mean_scale: (!scales.is_empty())
                .then(|| scales.iter().sum::<f64>() / scales.len() as f64),
            failures_by_stage,
            note: format!(
                "{n} images, {} extracted, {} failed",
                scales.len(),
                n - scales.len()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResults {
    pub summary: BatchSummary,
    /// Sorted by input path.
    pub records: Vec<ExtractRecord>,
}
