//! Floating-point reference layers.

use super::{check_geometry, NodeFeatures, OracleError, StaticGraph};
use crate::gnn_engine::quantize::{FpLayer, FpModel};
use crate::gnn_engine::state::argmax;
use crate::gnn_engine::EmptyIdentity;

/// Layer equation for the FP path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpConv {
    /// `x_i = ReLU(b + max_{j∈N(i)} W·(x_j, |dx|, |dy|))`, self excluded.
    MaxAgg,
    /// `x_i = γ(max_{j∈N(i)∪{i}} h(x_j, p_j − p_i))` with the layer's MLPs.
    PointNet,
    /// `x_i = Σ_{j∈N(i)∪{i}} Θᵀx_j / √((d_j+1)(d_i+1))`, where `Θ` is the
    /// feature part of the layer weights and `d` the in-degree. No bias and
    /// no activation, exactly as the update rule is written.
    Gcn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpPrediction {
    pub logits: Vec<f64>,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpOutput {
    pub layers: Vec<NodeFeatures<f64>>,
    pub trace: Vec<FpPrediction>,
}

/// Layer-by-layer FP forward. Batch norms are folded first.
pub fn forward_fp(graph: &StaticGraph, model: &FpModel, conv: FpConv) -> Result<FpOutput, OracleError> {
    model
        .validate()
        .map_err(|e| OracleError::IncompatibleModel(e.to_string()))?;
    check_geometry(graph, model.sensor.width, model.sensor.height)?;
    let model = model
        .folded()
        .map_err(|e| OracleError::IncompatibleModel(e.to_string()))?;
    let n_nodes = graph.len();

    let mut input = NodeFeatures::new(1, n_nodes, 0.0);
    for (i, ev) in graph.nodes.iter().enumerate() {
        input.node_mut(i)[0] = model.input_encoding.encode(ev.p);
    }
    let mut layers = vec![input];
    for (l, layer) in model.layers.iter().enumerate() {
        let prev = layers.last().expect("input slot present");
        let out = match conv {
            FpConv::MaxAgg => max_agg_layer(graph, layer, prev, model.empty_aggregation),
            FpConv::PointNet => pointnet_layer(graph, layer, prev)
                .ok_or_else(|| OracleError::IncompatibleModel(format!("layer {l} has no PointNet MLPs")))?,
            FpConv::Gcn => gcn_layer(graph, layer, prev),
        };
        layers.push(out);
    }

    let last = layers.last().expect("at least one layer");
    let grid = model.grid;
    let channels = last.width;
    let mut cells = vec![0.0f64; grid.cells() * channels];
    let mut trace = Vec::with_capacity(n_nodes);
    for (i, ev) in graph.nodes.iter().enumerate() {
        let (gx, gy) = (usize::from(ev.x / grid.patch), usize::from(ev.y / grid.patch));
        let start = (gy * usize::from(grid.gx) + gx) * channels;
        for (cell, &f) in cells[start..start + channels].iter_mut().zip(last.node(i)) {
            *cell = cell.max(f);
        }
        let logits = model.fc.forward(&cells);
        let class = argmax(&logits);
        trace.push(FpPrediction { logits, class });
    }
    Ok(FpOutput { layers, trace })
}

/// Message vector `(x_j, |dx|, |dy|)`.
fn max_agg_input(x: &[f64], dx: i32, dy: i32) -> Vec<f64> {
    let mut z = x.to_vec();
    z.push(f64::from(dx.unsigned_abs()));
    z.push(f64::from(dy.unsigned_abs()));
    z
}

fn max_agg_layer(graph: &StaticGraph, layer: &FpLayer, prev: &NodeFeatures<f64>, empty: EmptyIdentity) -> NodeFeatures<f64> {
    let mut out = NodeFeatures::new(layer.c_out, graph.len(), 0.0);
    let row_len = layer.row_len();
    for i in 0..graph.len() {
        let adj = &graph.adjacency[i];
        let mut agg = vec![if adj.is_empty() { empty_value(empty) } else { f64::NEG_INFINITY }; layer.c_out];
        for nb in adj {
            let z = max_agg_input(prev.node(nb.n as usize), nb.dx, nb.dy);
            for (c, a) in agg.iter_mut().enumerate() {
                let m: f64 = layer.weights[c * row_len..(c + 1) * row_len].iter().zip(&z).map(|(w, v)| w * v).sum();
                *a = a.max(m);
            }
        }
        for ((o, a), b) in out.node_mut(i).iter_mut().zip(agg).zip(&layer.bias) {
            *o = (a + b).max(0.0);
        }
    }
    out
}

fn empty_value(empty: EmptyIdentity) -> f64 {
    match empty {
        EmptyIdentity::Zero => 0.0,
        EmptyIdentity::NegInfinity => f64::NEG_INFINITY,
    }
}

fn pointnet_layer(graph: &StaticGraph, layer: &FpLayer, prev: &NodeFeatures<f64>) -> Option<NodeFeatures<f64>> {
    let mlps = layer.pointnet.as_ref()?;
    let width = mlps.gamma.out_width();
    let mut out = NodeFeatures::new(width, graph.len(), 0.0);
    for i in 0..graph.len() {
        // the node itself, at relative position (0, 0)
        let mut z = prev.node(i).to_vec();
        z.extend([0.0, 0.0]);
        let mut agg = mlps.h.forward(&z);
        for nb in &graph.adjacency[i] {
            let mut z = prev.node(nb.n as usize).to_vec();
            z.extend([-f64::from(nb.dx), -f64::from(nb.dy)]);
            for (a, m) in agg.iter_mut().zip(mlps.h.forward(&z)) {
                *a = a.max(m);
            }
        }
        out.node_mut(i).copy_from_slice(&mlps.gamma.forward(&agg));
    }
    Some(out)
}

fn gcn_layer(graph: &StaticGraph, layer: &FpLayer, prev: &NodeFeatures<f64>) -> NodeFeatures<f64> {
    let mut out = NodeFeatures::new(layer.c_out, graph.len(), 0.0);
    let row_len = layer.row_len();
    let theta = |x: &[f64], c: usize| -> f64 {
        layer.weights[c * row_len..c * row_len + layer.c_in].iter().zip(x).map(|(w, v)| w * v).sum()
    };
    for i in 0..graph.len() {
        let d_i = graph.in_degree(i) as f64;
        let sources = graph.adjacency[i].iter().map(|nb| nb.n as usize).chain(std::iter::once(i));
        for j in sources {
            let norm = 1.0 / ((graph.in_degree(j) as f64 + 1.0) * (d_i + 1.0)).sqrt();
            let x = prev.node(j);
            for c in 0..layer.c_out {
                out.node_mut(i)[c] += norm * theta(x, c);
            }
        }
    }
    out
}
