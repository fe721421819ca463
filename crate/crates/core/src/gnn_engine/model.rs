//! Quantized model description and its JSON config file.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fixed_point::Requant;
use super::kernels::{EmptyIdentity, InputEncoding};
use super::EngineError;
use crate::graph_builder::{SearchParams, DEFAULT_QUEUE_DEPTH};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Channel widths of the shipped architecture: polarity input, four
/// convolution layers, 16 final channels.
pub const DEFAULT_CHANNELS: [usize; 5] = [1, 48, 48, 32, 16];
pub const DEFAULT_PATCH: u16 = 16;

/// One simplified PointNet-style convolution layer. Weight rows hold the
/// `C_in` feature columns followed by the `|dx|` and `|dy|` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    #[serde(rename = "C_in")]
    pub c_in: usize,
    #[serde(rename = "C_out")]
    pub c_out: usize,
    /// `C_out × (C_in + 2)`, row-major.
    pub weights: Vec<i8>,
    /// Accumulator-domain bias.
    pub bias: Vec<i32>,
    /// Accumulator to output activation scale.
    pub requant: Requant,
    /// Raw pixel offset to input activation scale.
    pub pos_requant: Requant,
    /// Input activation scale, informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_in: Option<f64>,
}

impl LayerParams {
    pub fn row_len(&self) -> usize {
        self.c_in + 2
    }

    pub fn weight(&self, out: usize, col: usize) -> i8 {
        self.weights[out * self.row_len() + col]
    }

    fn validate(&self, index: usize) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Model(format!("layer {index}: {msg}")));
        if self.c_in == 0 || self.c_out == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.weights.len() != self.c_out * self.row_len() {
            return bad(format!(
                "expected {} weights, found {}",
                self.c_out * self.row_len(),
                self.weights.len()
            ));
        }
        if self.weights.contains(&i8::MIN) {
            return bad("weights must lie in [-127, 127]".into());
        }
        if self.bias.len() != self.c_out {
            return bad(format!("expected {} biases, found {}", self.c_out, self.bias.len()));
        }
        Ok(())
    }
}

/// Fully connected prediction head over the flattened readout grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseHead {
    #[serde(rename = "C_in")]
    pub c_in: usize,
    #[serde(rename = "C_out")]
    pub c_out: usize,
    /// `C_out × C_in`, row-major.
    pub weights: Vec<i8>,
    pub bias: Vec<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSpec {
    #[serde(rename = "W")]
    pub width: u16,
    #[serde(rename = "H")]
    pub height: u16,
}

/// Readout grid: `Gx × Gy` cells of `patch × patch` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub patch: u16,
    #[serde(rename = "Gx")]
    pub gx: u16,
    #[serde(rename = "Gy")]
    pub gy: u16,
}

impl GridSpec {
    pub fn for_sensor(sensor: SensorSpec, patch: u16) -> Self {
        Self {
            patch,
            gx: sensor.width.div_ceil(patch),
            gy: sensor.height.div_ceil(patch),
        }
    }

    pub fn cells(&self) -> usize {
        usize::from(self.gx) * usize::from(self.gy)
    }
}

/// Neighbor search parameters plus the per-pixel queue depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    #[serde(flatten)]
    pub params: SearchParams,
    #[serde(default = "default_queue_depth")]
    pub queue_depth: usize,
}

fn default_queue_depth() -> usize {
    DEFAULT_QUEUE_DEPTH
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            params: SearchParams::default(),
            queue_depth: DEFAULT_QUEUE_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub version: u32,
    pub sensor: SensorSpec,
    pub search: SearchConfig,
    #[serde(default)]
    pub input_encoding: InputEncoding,
    #[serde(default)]
    pub empty_aggregation: EmptyIdentity,
    pub layers: Vec<LayerParams>,
    pub fc: DenseHead,
    pub grid: GridSpec,
    #[serde(default)]
    pub classes: Vec<String>,
}

impl QuantizedModel {
    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let model: Self = serde_json::from_str(text).map_err(|e| EngineError::Model(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Width of the final convolution layer.
    pub fn last_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.c_out)
    }

    pub fn num_classes(&self) -> usize {
        self.fc.c_out
    }

    /// Feature widths stored per event: slot 0 holds the encoded input, slot
    /// `l` the output of layer `l`.
    pub fn slot_widths(&self) -> Vec<usize> {
        std::iter::once(1).chain(self.layers.iter().map(|l| l.c_out)).collect()
    }

    /// Number of weights and biases in the convolution layers and the head.
    pub fn parameter_count(&self) -> (usize, usize) {
        let conv = self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        (conv, self.fc.weights.len() + self.fc.bias.len())
    }

    /// Structural checks. Arithmetic ranges of the requantizers are not
    /// enforced here; see [`QuantizedModel::datapath_warnings`].
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(EngineError::Model(format!("unsupported model version {}", self.version)));
        }
        if self.sensor.width == 0 || self.sensor.height == 0 {
            return Err(EngineError::Model("sensor dimensions must be positive".into()));
        }
        self.search
            .params
            .validate()
            .map_err(|e| EngineError::Model(e.to_string()))?;
        if !self.search.params.shape.is_decoupled() {
            return Err(EngineError::Model(
                "the event-driven engine supports prism and cylinder search only".into(),
            ));
        }
        if self.search.queue_depth == 0 {
            return Err(EngineError::Model("queue_depth must be at least 1".into()));
        }
        if self.layers.is_empty() {
            return Err(EngineError::Model("model has no layers".into()));
        }
        if self.layers[0].c_in != 1 {
            return Err(EngineError::Model("layer 0 must take the single polarity channel".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i)?;
            if i > 0 && layer.c_in != self.layers[i - 1].c_out {
                return Err(EngineError::Model(format!(
                    "layer {i} expects {} input channels but layer {} produces {}",
                    layer.c_in,
                    i - 1,
                    self.layers[i - 1].c_out
                )));
            }
        }
        if self.grid.patch == 0 || self.grid != GridSpec::for_sensor(self.sensor, self.grid.patch) {
            return Err(EngineError::Model(format!(
                "grid {:?} does not tile a {}x{} sensor",
                self.grid, self.sensor.width, self.sensor.height
            )));
        }
        let flat = self.grid.cells() * self.last_channels();
        if self.fc.c_in != flat {
            return Err(EngineError::DimMismatch {
                expected: flat,
                got: self.fc.c_in,
            });
        }
        if self.fc.c_out == 0 || self.fc.weights.len() != self.fc.c_in * self.fc.c_out {
            return Err(EngineError::Model("fc weights do not match C_in x C_out".into()));
        }
        if self.fc.bias.len() != self.fc.c_out {
            return Err(EngineError::Model("fc bias length must equal C_out".into()));
        }
        if !self.classes.is_empty() && self.classes.len() != self.fc.c_out {
            return Err(EngineError::Model("class labels must match fc C_out".into()));
        }
        Ok(())
    }

    /// Requantizers outside the 31-bit multiplier / 62-bit shift range the
    /// datapath is exact for.
    pub fn datapath_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if !l.requant.in_datapath_range() {
                out.push(format!("layer {i}: requant {:?} exceeds the datapath range", l.requant));
            }
            if !l.pos_requant.in_datapath_range() {
                out.push(format!(
                    "layer {i}: pos_requant {:?} exceeds the datapath range",
                    l.pos_requant
                ));
            }
        }
        out
    }
}

/// Shape of a network, independent of its parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub sensor: SensorSpec,
    /// Input width (1) followed by each layer's output width.
    pub channels: Vec<usize>,
    pub classes: Vec<String>,
    pub search: SearchConfig,
    pub patch: u16,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            sensor: SensorSpec {
                width: 120,
                height: 100,
            },
            channels: DEFAULT_CHANNELS.to_vec(),
            classes: vec!["background".into(), "car".into()],
            search: SearchConfig::default(),
            patch: DEFAULT_PATCH,
        }
    }
}

/// A quantized model with seeded random parameters. Requantizers are sized
/// so activations stay spread over the INT8 range rather than saturating.
pub fn random_quantized_model(arch: &Architecture, seed: u64) -> QuantizedModel {
    assert!(arch.channels.len() >= 2 && arch.channels[0] == 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(arch.channels.len() - 1);
    for w in arch.channels.windows(2) {
        let (c_in, c_out) = (w[0], w[1]);
        let row = c_in + 2;
        let weights: Vec<i8> = (0..c_out * row).map(|_| rng.gen_range(-127..=127)).collect();
        let spread = (row as f64).sqrt() * 127.0 * 40.0;
        let bias: Vec<i32> = (0..c_out)
            .map(|_| rng.gen_range(-0.5..1.0) * spread)
            .map(|b: f64| b as i32)
            .collect();
        let requant = Requant::from_real(rng.gen_range(60.0..160.0) / spread).expect("positive scale");
        let pos_requant = Requant::from_real(rng.gen_range(4.0..24.0)).expect("positive scale");
        layers.push(LayerParams {
            c_in,
            c_out,
            weights,
            bias,
            requant,
            pos_requant,
            s_in: None,
        });
    }
    let grid = GridSpec::for_sensor(arch.sensor, arch.patch);
    let classes = arch.classes.len().max(1);
    let fc_in = grid.cells() * arch.channels[arch.channels.len() - 1];
    let fc = DenseHead {
        c_in: fc_in,
        c_out: classes,
        weights: (0..fc_in * classes).map(|_| rng.gen_range(-127..=127)).collect(),
        bias: (0..classes).map(|_| rng.gen_range(-20_000..=20_000)).collect(),
    };
    QuantizedModel {
        version: MODEL_FORMAT_VERSION,
        sensor: arch.sensor,
        search: arch.search,
        input_encoding: InputEncoding::default(),
        empty_aggregation: EmptyIdentity::Zero,
        layers,
        fc,
        grid,
        classes: arch.classes.clone(),
    }
}
