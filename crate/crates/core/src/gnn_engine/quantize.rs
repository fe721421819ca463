//! Floating-point models, batch-norm folding and INT8 post-training
//! quantization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fixed_point::{quantize_symmetric, round_half_even, Requant};
use super::kernels::{EmptyIdentity, InputEncoding};
use super::model::{
    Architecture, DenseHead, GridSpec, LayerParams, QuantizedModel, SearchConfig, SensorSpec, MODEL_FORMAT_VERSION,
};
use super::EngineError;
use crate::event_io::EventStream;
use crate::static_oracle::{forward_fp, FpConv, StaticGraph};

/// Real-valued polarity encoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpInputEncoding {
    #[serde(rename = "0")]
    pub off: f64,
    #[serde(rename = "1")]
    pub on: f64,
}

impl Default for FpInputEncoding {
    fn default() -> Self {
        Self { off: -1.0, on: 1.0 }
    }
}

impl FpInputEncoding {
    pub fn encode(&self, p: u8) -> f64 {
        if p == 0 {
            self.off
        } else {
            self.on
        }
    }
}

/// Batch normalization applied to a layer's linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    #[serde(default)]
    pub eps: f64,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            eps: 0.0,
        }
    }

    pub fn apply(&self, channel: usize, v: f64) -> f64 {
        (v - self.mean[channel]) * self.gamma[channel] / (self.var[channel] + self.eps).sqrt() + self.beta[channel]
    }
}

/// A dense layer `y = W x + b`, `W` row-major `C_out × C_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpDense {
    #[serde(rename = "C_in")]
    pub c_in: usize,
    #[serde(rename = "C_out")]
    pub c_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl FpDense {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.c_in)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn random(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize) -> Self {
        let bound = (3.0 / c_in as f64).sqrt();
        Self {
            c_in,
            c_out,
            weights: (0..c_in * c_out).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: (0..c_out).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        }
    }
}

/// A stack of dense layers with ReLU between them (not after the last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<FpDense>,
}

impl Mlp {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            v = layer.forward(&v);
            if i + 1 < self.layers.len() {
                v.iter_mut().for_each(|a| *a = a.max(0.0));
            }
        }
        v
    }

    pub fn in_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.c_in)
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.c_out)
    }
}

/// Networks for the full PointNet-style convolution: `h` maps
/// `(x_j, p_j - p_i)` to a message, `gamma` maps the aggregate to the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointNetMlps {
    pub h: Mlp,
    pub gamma: Mlp,
}

/// One real-valued convolution layer, same layout as [`LayerParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpLayer {
    #[serde(rename = "C_in")]
    pub c_in: usize,
    #[serde(rename = "C_out")]
    pub c_out: usize,
    /// `C_out × (C_in + 2)`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn: Option<BatchNorm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointnet: Option<PointNetMlps>,
}

impl FpLayer {
    pub fn row_len(&self) -> usize {
        self.c_in + 2
    }

    /// `W z + b` followed by batch norm when present.
    pub fn linear(&self, z: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .weights
            .chunks_exact(self.row_len())
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        if let Some(bn) = &self.bn {
            for (c, v) in out.iter_mut().enumerate() {
                *v = bn.apply(c, *v);
            }
        }
        out
    }
}

/// Real-valued counterpart of [`QuantizedModel`]. Batch norm, when present,
/// normalizes each message before aggregation, so it folds exactly into the
/// linear layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpModel {
    pub version: u32,
    pub sensor: SensorSpec,
    pub search: SearchConfig,
    #[serde(default)]
    pub input_encoding: FpInputEncoding,
    #[serde(default)]
    pub empty_aggregation: EmptyIdentity,
    pub layers: Vec<FpLayer>,
    pub fc: FpDense,
    pub grid: GridSpec,
    #[serde(default)]
    pub classes: Vec<String>,
}

impl FpModel {
    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let model: Self = serde_json::from_str(text).map_err(|e| EngineError::Model(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Model(msg));
        if self.version != MODEL_FORMAT_VERSION {
            return bad(format!("unsupported model version {}", self.version));
        }
        if self.layers.is_empty() || self.layers[0].c_in != 1 {
            return bad("first layer must take the single polarity channel".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.c_out * l.row_len() || l.bias.len() != l.c_out {
                return bad(format!("layer {i}: parameter shapes do not match C_in/C_out"));
            }
            if i > 0 && l.c_in != self.layers[i - 1].c_out {
                return bad(format!("layer {i}: input width does not match layer {}", i - 1));
            }
            if let Some(bn) = &l.bn {
                let c = l.c_out;
                if bn.gamma.len() != c || bn.beta.len() != c || bn.mean.len() != c || bn.var.len() != c {
                    return bad(format!("layer {i}: batch-norm vectors must have C_out entries"));
                }
            }
        }
        if self.grid != GridSpec::for_sensor(self.sensor, self.grid.patch) {
            return bad("grid does not tile the sensor".into());
        }
        let flat = self.grid.cells() * self.layers[self.layers.len() - 1].c_out;
        if self.fc.c_in != flat || self.fc.weights.len() != flat * self.fc.c_out || self.fc.bias.len() != self.fc.c_out {
            return Err(EngineError::DimMismatch {
                expected: flat,
                got: self.fc.c_in,
            });
        }
        Ok(())
    }

    /// The same model with every batch norm folded into its layer.
    pub fn folded(&self) -> Result<Self, EngineError> {
        let mut out = self.clone();
        for layer in &mut out.layers {
            *layer = fold_batchnorm(layer)?;
        }
        Ok(out)
    }

    pub fn is_folded(&self) -> bool {
        self.layers.iter().all(|l| l.bn.is_none())
    }
}

/// Folds a layer's batch norm into its weights and bias:
/// `W' = W·γ/√(σ²+ε)`, `b' = (b−μ)·γ/√(σ²+ε) + β`.
pub fn fold_batchnorm(layer: &FpLayer) -> Result<FpLayer, EngineError> {
    let Some(bn) = &layer.bn else {
        return Ok(layer.clone());
    };
    let mut out = layer.clone();
    out.bn = None;
    let row_len = layer.row_len();
    for c in 0..layer.c_out {
        let denom = bn.var[c] + bn.eps;
        if !(denom > 0.0) {
            return Err(EngineError::DegenerateVariance { channel: c });
        }
        let k = bn.gamma[c] / denom.sqrt();
        for w in &mut out.weights[c * row_len..(c + 1) * row_len] {
            *w *= k;
        }
        out.bias[c] = (layer.bias[c] - bn.mean[c]) * k + bn.beta[c];
    }
    Ok(out)
}

/// Per-tensor symmetric weight scale; 1 for an all-zero tensor.
pub fn weight_scale(weights: &[f64]) -> f64 {
    let max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max == 0.0 {
        1.0
    } else {
        max / 127.0
    }
}

fn requant_for(real: f64, what: &str) -> Result<Requant, EngineError> {
    let rq = Requant::from_real(real).ok_or_else(|| EngineError::Model(format!("{what} scale {real} not representable")))?;
    debug_assert!(((rq.as_f64() - real) / real).abs() <= 2f64.powi(-24));
    Ok(rq)
}

fn quantize_bias(b: f64, scale: f64) -> i32 {
    round_half_even(b / scale).clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32
}

/// Quantizes a folded FP model to INT8, taking activation scales from a
/// reference forward pass over `calib`.
///
/// Every activation scale is at least `window/127` so that the positional
/// inputs (raw pixel offsets up to the search window radius) fit the INT8
/// input range of the layer that consumes them.
pub fn quantize_model(model_fp: &FpModel, calib: &EventStream) -> Result<QuantizedModel, EngineError> {
    model_fp.validate()?;
    if !model_fp.is_folded() {
        return Err(EngineError::Model("batch norm must be folded before quantization".into()));
    }
    if calib.is_empty() {
        return Err(EngineError::EmptyCalibration);
    }
    let graph = StaticGraph::build(calib, &model_fp.search.params, model_fp.search.queue_depth)
        .map_err(|e| EngineError::Model(e.to_string()))?;
    let out = forward_fp(&graph, model_fp, FpConv::MaxAgg).map_err(|e| EngineError::Model(e.to_string()))?;

    let window = f64::from(model_fp.search.params.window_radius().max(1));
    let enc = &model_fp.input_encoding;
    let mut s_in = enc.off.abs().max(enc.on.abs()).max(window) / 127.0;
    let input_encoding = InputEncoding {
        off: quantize_symmetric(enc.off, s_in),
        on: quantize_symmetric(enc.on, s_in),
    };

    let mut layers = Vec::with_capacity(model_fp.layers.len());
    for (l, layer) in model_fp.layers.iter().enumerate() {
        let act_max = out.layers[l + 1].data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s_out = act_max.max(window) / 127.0;
        let s_w = weight_scale(&layer.weights);
        layers.push(LayerParams {
            c_in: layer.c_in,
            c_out: layer.c_out,
            weights: layer.weights.iter().map(|&w| quantize_symmetric(w, s_w)).collect(),
            bias: layer.bias.iter().map(|&b| quantize_bias(b, s_in * s_w)).collect(),
            requant: requant_for(s_in * s_w / s_out, "requant")?,
            pos_requant: requant_for(1.0 / s_in, "positional")?,
            s_in: Some(s_in),
        });
        s_in = s_out;
    }

    let s_fc = weight_scale(&model_fp.fc.weights);
    let fc = DenseHead {
        c_in: model_fp.fc.c_in,
        c_out: model_fp.fc.c_out,
        weights: model_fp.fc.weights.iter().map(|&w| quantize_symmetric(w, s_fc)).collect(),
        bias: model_fp.fc.bias.iter().map(|&b| quantize_bias(b, s_in * s_fc)).collect(),
    };
    let q = QuantizedModel {
        version: MODEL_FORMAT_VERSION,
        sensor: model_fp.sensor,
        search: model_fp.search,
        input_encoding,
        empty_aggregation: model_fp.empty_aggregation,
        layers,
        fc,
        grid: model_fp.grid,
        classes: model_fp.classes.clone(),
    };
    q.validate()?;
    Ok(q)
}

/// A seeded random FP model. With `with_bn`, every layer carries a random
/// batch norm with positive scale.
pub fn random_fp_model(arch: &Architecture, seed: u64, with_bn: bool) -> FpModel {
    assert!(arch.channels.len() >= 2 && arch.channels[0] == 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .channels
        .windows(2)
        .map(|w| {
            let (c_in, c_out) = (w[0], w[1]);
            let dense = FpDense::random(&mut rng, c_in + 2, c_out);
            let bn = with_bn.then(|| BatchNorm {
                gamma: (0..c_out).map(|_| rng.gen_range(0.5..2.0)).collect(),
                beta: (0..c_out).map(|_| rng.gen_range(-0.2..0.2)).collect(),
                mean: (0..c_out).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                var: (0..c_out).map(|_| rng.gen_range(0.5..2.0)).collect(),
                eps: 1e-5,
            });
            FpLayer {
                c_in,
                c_out,
                weights: dense.weights,
                bias: dense.bias.iter().map(|b| b + 0.1).collect(),
                bn,
                pointnet: None,
            }
        })
        .collect::<Vec<_>>();
    let grid = GridSpec::for_sensor(arch.sensor, arch.patch);
    let last = arch.channels[arch.channels.len() - 1];
    let classes = arch.classes.len().max(1);
    FpModel {
        version: MODEL_FORMAT_VERSION,
        sensor: arch.sensor,
        search: arch.search,
        input_encoding: FpInputEncoding::default(),
        empty_aggregation: EmptyIdentity::Zero,
        layers,
        fc: FpDense::random(&mut rng, grid.cells() * last, classes),
        grid,
        classes: arch.classes.clone(),
    }
}

/// Attaches random PointNet MLPs (one hidden layer of width `C_out`) to
/// every layer.
pub fn with_random_pointnet(mut model: FpModel, seed: u64) -> FpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut model.layers {
        let (c_in, c_out) = (layer.c_in, layer.c_out);
        layer.pointnet = Some(PointNetMlps {
            h: Mlp {
                layers: vec![FpDense::random(&mut rng, c_in + 2, c_out), FpDense::random(&mut rng, c_out, c_out)],
            },
            gamma: Mlp {
                layers: vec![FpDense::random(&mut rng, c_out, c_out), FpDense::random(&mut rng, c_out, c_out)],
            },
        });
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(weights: Vec<f64>, bias: Vec<f64>, bn: Option<BatchNorm>) -> FpLayer {
        FpLayer {
            c_in: 1,
            c_out: bias.len(),
            weights,
            bias,
            bn,
            pointnet: None,
        }
    }

    #[test]
    fn identity_fold() {
        let l = layer(vec![0.5, -1.0, 2.0], vec![0.25], Some(BatchNorm::identity(1)));
        let f = fold_batchnorm(&l).unwrap();
        assert_eq!(f.weights, l.weights);
        assert_eq!(f.bias, l.bias);
        assert!(f.bn.is_none());
    }

    #[test]
    fn fold_by_hand() {
        let bn = BatchNorm {
            gamma: vec![2.0],
            beta: vec![0.5],
            mean: vec![1.0],
            var: vec![3.0],
            eps: 1.0,
        };
        let l = layer(vec![0.5, -1.0, 2.0], vec![3.0], Some(bn));
        let f = fold_batchnorm(&l).unwrap();
        // 2 / sqrt(4) = 1
        assert_eq!(f.weights, vec![0.5, -1.0, 2.0]);
        assert_eq!(f.bias, vec![(3.0 - 1.0) + 0.5]);
    }

    #[test]
    fn degenerate_variance() {
        let mut bn = BatchNorm::identity(2);
        bn.var[1] = 0.0;
        let l = layer(vec![0.0; 6], vec![0.0; 2], Some(bn));
        assert!(matches!(fold_batchnorm(&l), Err(EngineError::DegenerateVariance { channel: 1 })));
    }

    #[test]
    fn weight_scales() {
        assert_eq!(weight_scale(&[0.0, 0.0]), 1.0);
        let s = weight_scale(&[12.7, -3.0]);
        assert!((s - 0.1).abs() < 1e-15);
        assert_eq!(quantize_symmetric(1.27, s), 13);
        assert_eq!(quantize_symmetric(0.0, weight_scale(&[0.0])), 0);
    }

    #[test]
    fn json_round_trip() {
        let arch = Architecture {
            channels: vec![1, 4, 2],
            ..Architecture::default()
        };
        let m = random_fp_model(&arch, 1, true);
        let back = FpModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(!m.is_folded());
        assert!(m.folded().unwrap().is_folded());
    }

    #[test]
    fn empty_calibration() {
        let arch = Architecture {
            channels: vec![1, 4, 2],
            ..Architecture::default()
        };
        let m = random_fp_model(&arch, 1, false);
        let empty = EventStream::new(arch.sensor.width, arch.sensor.height);
        assert!(matches!(quantize_model(&m, &empty), Err(EngineError::EmptyCalibration)));
        let bn = random_fp_model(&arch, 1, true);
        assert!(quantize_model(&bn, &empty).is_err());
    }
}
