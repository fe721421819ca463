//! Integer reference for the simplified convolution, written independently
//! of the engine kernels: wide accumulators and exact rational rounding.

use super::{check_geometry, NodeFeatures, OracleError, StaticGraph};
use crate::gnn_engine::{EmptyIdentity, Prediction, QuantizedModel, Requant};

/// `round_half_even(v · M / 2^shift)` computed exactly.
pub fn requantize_exact(v: i64, rq: Requant) -> i128 {
    let num = i128::from(v) * i128::from(rq.multiplier);
    if rq.shift >= 127 {
        return 0;
    }
    let d = 1i128 << rq.shift;
    let q = num.div_euclid(d);
    let twice_rem = 2 * num.rem_euclid(d);
    if twice_rem > d || (twice_rem == d && q.rem_euclid(2) == 1) {
        q + 1
    } else {
        q
    }
}

fn to_act(v: i128) -> i8 {
    v.clamp(0, 127) as i8
}

#[derive(Debug, Clone, PartialEq)]
pub struct Int8Output {
    /// Slot 0 is the encoded input, slot `l` the output of layer `l`.
    pub layers: Vec<NodeFeatures<i8>>,
    /// Prediction after each event.
    pub trace: Vec<Prediction>,
}

/// Layer-by-layer INT8 forward over the whole graph, then a per-event
/// readout/prediction replay.
pub fn forward_int8(graph: &StaticGraph, model: &QuantizedModel) -> Result<Int8Output, OracleError> {
    model
        .validate()
        .map_err(|e| OracleError::IncompatibleModel(e.to_string()))?;
    check_geometry(graph, model.sensor.width, model.sensor.height)?;
    let n_nodes = graph.len();

    let mut input = NodeFeatures::new(1, n_nodes, 0i8);
    for (i, ev) in graph.nodes.iter().enumerate() {
        input.node_mut(i)[0] = if ev.p == 0 {
            model.input_encoding.off
        } else {
            model.input_encoding.on
        };
    }
    let mut layers = vec![input];

    for layer in &model.layers {
        let prev = layers.last().expect("input slot present");
        let mut out = NodeFeatures::new(layer.c_out, n_nodes, 0i8);
        let mut acc = vec![0i64; layer.c_out];
        for i in 0..n_nodes {
            let adj = &graph.adjacency[i];
            if adj.is_empty() {
                let fill = match model.empty_aggregation {
                    EmptyIdentity::Zero => 0,
                    EmptyIdentity::NegInfinity => i64::from(i32::MIN),
                };
                acc.fill(fill);
            } else {
                acc.fill(i64::MIN);
            }
            for nb in adj {
                let x = prev.node(nb.n as usize);
                let px = to_act(requantize_exact(i64::from(nb.dx.unsigned_abs()), layer.pos_requant));
                let py = to_act(requantize_exact(i64::from(nb.dy.unsigned_abs()), layer.pos_requant));
                for (c, a) in acc.iter_mut().enumerate() {
                    let row = &layer.weights[c * (layer.c_in + 2)..(c + 1) * (layer.c_in + 2)];
                    let mut m: i64 = row[..layer.c_in]
                        .iter()
                        .zip(x)
                        .map(|(&w, &v)| i64::from(w) * i64::from(v))
                        .sum();
                    m += i64::from(row[layer.c_in]) * i64::from(px) + i64::from(row[layer.c_in + 1]) * i64::from(py);
                    if i32::try_from(m).is_err() {
                        return Err(OracleError::Overflow { n: i as u32, channel: c });
                    }
                    *a = (*a).max(m);
                }
            }
            for (c, o) in out.node_mut(i).iter_mut().enumerate() {
                let v = (acc[c] + i64::from(layer.bias[c])).max(0);
                *o = to_act(requantize_exact(v, layer.requant));
            }
        }
        layers.push(out);
    }

    let last = layers.last().expect("at least one layer");
    let grid = model.grid;
    let channels = last.width;
    let mut cells = vec![0i8; grid.cells() * channels];
    let mut trace = Vec::with_capacity(n_nodes);
    for (i, ev) in graph.nodes.iter().enumerate() {
        let (gx, gy) = (usize::from(ev.x / grid.patch), usize::from(ev.y / grid.patch));
        let start = (gy * usize::from(grid.gx) + gx) * channels;
        for (cell, &f) in cells[start..start + channels].iter_mut().zip(last.node(i)) {
            *cell = (*cell).max(f);
        }
        let mut logits = Vec::with_capacity(model.fc.c_out);
        for c in 0..model.fc.c_out {
            let row = &model.fc.weights[c * model.fc.c_in..(c + 1) * model.fc.c_in];
            let dot: i128 = row.iter().zip(&cells).map(|(&w, &v)| i128::from(w) * i128::from(v)).sum::<i128>()
                + i128::from(model.fc.bias[c]);
            logits.push(i32::try_from(dot).map_err(|_| OracleError::Overflow { n: i as u32, channel: c })?);
        }
        let mut class = 0;
        for (k, &l) in logits.iter().enumerate() {
            if l > logits[class] {
                class = k;
            }
        }
        trace.push(Prediction { logits, class });
    }
    Ok(Int8Output { layers, trace })
}
