//! Analytic operation counts, for comparing against per-event budgets
//! without running the engine.

use serde::{Deserialize, Serialize};

use super::engine::OpCount;
use super::model::QuantizedModel;

/// Operations for one event with `degree` neighbors.
pub fn event_ops(model: &QuantizedModel, degree: usize) -> OpCount {
    let per_neighbor: usize = model.layers.iter().map(|l| l.row_len() * l.c_out).sum();
    OpCount {
        conv_macs: (degree * per_neighbor) as u64,
        baq_outputs: model.layers.iter().map(|l| l.c_out as u64).sum(),
        readout_compares: model.last_channels() as u64,
        fc_macs: (model.fc.c_in * model.fc.c_out) as u64,
    }
}

/// Distribution of per-event operation counts over a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpsSummary {
    pub events: usize,
    pub total: OpCount,
    pub mean_ops: f64,
    pub p50_ops: u64,
    pub p90_ops: u64,
    pub p99_ops: u64,
    pub max_ops: u64,
}

impl OpsSummary {
    /// Mean operations per event in units of 10^6.
    pub fn mflops_per_event(&self) -> f64 {
        self.mean_ops / 1e6
    }
}

/// Per-event counts for a sequence of neighbor degrees.
pub fn count_ops(model: &QuantizedModel, degrees: &[usize]) -> OpsSummary {
    let mut total = OpCount::default();
    let mut per_event: Vec<u64> = degrees
        .iter()
        .map(|&d| {
            let ops = event_ops(model, d);
            total += ops;
            ops.total_ops()
        })
        .collect();
    per_event.sort_unstable();
    let pct = |p: f64| -> u64 {
        if per_event.is_empty() {
            return 0;
        }
        let idx = ((p * per_event.len() as f64).ceil() as usize).clamp(1, per_event.len()) - 1;
        per_event[idx]
    };
    OpsSummary {
        events: degrees.len(),
        total,
        mean_ops: if degrees.is_empty() {
            0.0
        } else {
            total.total_ops() as f64 / degrees.len() as f64
        },
        p50_ops: pct(0.5),
        p90_ops: pct(0.9),
        p99_ops: pct(0.99),
        max_ops: per_event.last().copied().unwrap_or(0),
    }
}
