//! The integer event-driven engine and everything it needs: fixed-point
//! arithmetic, kernels, model format, per-stream state and the quantizer.

use thiserror::Error;

use crate::graph_builder::GraphError;

pub mod engine;
pub mod fixed_point;
pub mod kernels;
pub mod model;
pub mod ops;
pub mod quantize;
pub mod state;

pub use engine::{EngineState, EventEngine, EventRecord, OpCount, Schedule};
pub use fixed_point::{requantize, Requant};
pub use kernels::{aggregate_max, baq, encode_input, message_matvec, EmptyIdentity, InputEncoding};
pub use model::{
    random_quantized_model, Architecture, DenseHead, GridSpec, LayerParams, QuantizedModel, SearchConfig,
    SensorSpec,
};
pub use state::{fc_forward, readout_update, FeatureStore, Prediction, ReadoutState, StoreError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("32-bit accumulator overflow in channel {channel}")]
    AccOverflow { channel: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("event at ({x}, {y}) falls outside the readout grid")]
    ReadoutOutOfBounds { x: u16, y: u16 },
    #[error("events must be processed in order: expected n={expected}, got n={got}")]
    OutOfOrder { expected: u32, got: u32 },
    #[error("calibration set produced no activations")]
    EmptyCalibration,
    #[error("batch-norm variance is not positive in channel {channel}")]
    DegenerateVariance { channel: usize },
    #[error("invalid model: {0}")]
    Model(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Store(#[from] StoreError),
}
