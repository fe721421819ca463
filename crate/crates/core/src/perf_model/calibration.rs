//! The calibration setup: architecture, search radii, representative
//! stimulus and the hardware profile fitted to it.
//!
//! The fitted profile is a calibration, not a prediction: its energy
//! constants were chosen so that the representative trace lands on the
//! target per-event energy, and its fetch/compute overlap setting so that
//! the latency lands near the target without any fitted latency constant.

use super::{EventTrace, HwConfig};
use crate::event_io::{gen_synthetic, EventStream, SyntheticKind, SyntheticParams};
use crate::gnn_engine::model::{random_quantized_model, Architecture, SearchConfig};
use crate::gnn_engine::{EventEngine, QuantizedModel, Schedule};
use crate::graph_builder::SearchParams;

/// Mean neighbor count the representative stream is tuned to.
pub const CALIBRATION_MEAN_DEGREE: f64 = 10.0;
pub const CALIBRATION_SEED: u64 = 7;

/// Fitted hardware profile, JSON with an `"hw"` section.
pub const CALIBRATED_PROFILE: &str = include_str!("../../configs/calibrated_hw.json");

pub fn calibrated_hw() -> HwConfig {
    HwConfig::from_json(CALIBRATED_PROFILE).expect("shipped profile parses")
}

/// Prism search with a 7×7 window, 4.25 ms temporal radius, at most 16
/// neighbors, 16-deep queues.
pub fn calibration_search() -> SearchConfig {
    SearchConfig {
        params: SearchParams::prism(3, 4_250, 16),
        queue_depth: 16,
    }
}

/// The default 4-layer architecture with the calibration search.
pub fn calibration_architecture() -> Architecture {
    Architecture {
        search: calibration_search(),
        ..Architecture::default()
    }
}

/// A 100 ms, 5000-event sample of a dot of radius 12 px crossing the
/// 120×100 sensor at (0.6, 0.3) px/ms.
pub fn calibration_stream(seed: u64) -> EventStream {
    gen_synthetic(
        SyntheticKind::MovingDot {
            velocity: (0.6, 0.3),
            radius: 12.0,
            start: None,
        },
        SyntheticParams {
            width: 120,
            height: 100,
            count: 5_000,
            span_us: 100_000,
        },
        seed,
    )
    .expect("calibration stimulus stays on the sensor")
}

/// Instrumented run of `model` over the calibration stream. Trace contents
/// depend only on the model's shape and search settings, not its weights.
pub fn representative_trace(model: &QuantizedModel) -> EventTrace {
    let stream = calibration_stream(CALIBRATION_SEED);
    let records = EventEngine::new(model)
        .and_then(|mut e| e.run_stream(&stream, Schedule::LayerParallel))
        .expect("calibration model runs");
    EventTrace::from_records(&records)
}

/// A model with the calibration architecture (random weights).
pub fn calibration_model() -> QuantizedModel {
    random_quantized_model(&calibration_architecture(), 0)
}
