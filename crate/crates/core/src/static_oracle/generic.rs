//! Generic message passing: `x_i' = γ(x_i, ⊕_{j∈N(i)} φ(x_i, x_j, e_ij))`.

use super::{NodeFeatures, StaticGraph};
use crate::graph_builder::Neighbor;

/// Permutation-invariant aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Sum,
    Mean,
    Max,
}

impl Aggregator {
    /// Reduces equally sized messages; zeros when there are none.
    pub fn reduce(self, messages: &[Vec<f64>], width: usize) -> Vec<f64> {
        if messages.is_empty() {
            return vec![0.0; width];
        }
        let mut out = match self {
            Aggregator::Max => vec![f64::NEG_INFINITY; width],
            Aggregator::Sum | Aggregator::Mean => vec![0.0; width],
        };
        for m in messages {
            for (o, &v) in out.iter_mut().zip(m) {
                *o = match self {
                    Aggregator::Max => o.max(v),
                    _ => *o + v,
                };
            }
        }
        if self == Aggregator::Mean {
            out.iter_mut().for_each(|o| *o /= messages.len() as f64);
        }
        out
    }
}

/// Message function `φ(x_i, x_j, edge)`; the edge carries the relative
/// position of `j` as seen from `i`.
pub type MessageFn<'a> = dyn Fn(&[f64], &[f64], &Neighbor) -> Vec<f64> + 'a;
/// Update function `γ(x_i, aggregate)`.
pub type UpdateFn<'a> = dyn Fn(&[f64], &[f64]) -> Vec<f64> + 'a;

pub struct GenericConvSpec<'a> {
    pub phi: Box<MessageFn<'a>>,
    pub aggregator: Aggregator,
    pub gamma: Box<UpdateFn<'a>>,
    /// Whether node `i` also sends a message to itself (zero offset).
    pub include_self: bool,
    pub message_width: usize,
    pub out_width: usize,
}

/// One layer of message passing over every node of `graph`.
pub fn message_passing_generic(graph: &StaticGraph, spec: &GenericConvSpec<'_>, features: &NodeFeatures<f64>) -> NodeFeatures<f64> {
    let mut out = NodeFeatures::new(spec.out_width, graph.len(), 0.0);
    let mut messages = Vec::new();
    for i in 0..graph.len() {
        let x_i = features.node(i);
        messages.clear();
        for nb in &graph.adjacency[i] {
            messages.push((spec.phi)(x_i, features.node(nb.n as usize), nb));
        }
        if spec.include_self {
            let ev = &graph.nodes[i];
            let me = Neighbor {
                n: ev.n,
                t: ev.t,
                p: ev.p,
                dx: 0,
                dy: 0,
                dt: 0,
            };
            messages.push((spec.phi)(x_i, x_i, &me));
        }
        let agg = spec.aggregator.reduce(&messages, spec.message_width);
        out.node_mut(i).copy_from_slice(&(spec.gamma)(x_i, &agg));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_io::Event;
    use crate::gnn_engine::model::{Architecture, SensorSpec};
    use crate::gnn_engine::quantize::random_fp_model;
    use crate::static_oracle::{forward_fp, FpConv};

    fn replicate<'a>(agg: Aggregator, include_self: bool) -> GenericConvSpec<'a> {
        GenericConvSpec {
            phi: Box::new(|_, x_j, _| x_j.to_vec()),
            aggregator: agg,
            gamma: Box::new(|_, a| a.to_vec()),
            include_self,
            message_width: 1,
            out_width: 1,
        }
    }

    #[test]
    fn directed_edges_block_messages() {
        // D(0) -> A(1); A, D -> B(2); A, B -> C(3). A is newer than D, so D
        // never receives A's message.
        let nodes = (0..4).map(|n| Event::new(n as u16, 0, n, 1, n)).collect();
        let g = StaticGraph::from_adjacency(4, 1, nodes, &[vec![], vec![0], vec![1, 0], vec![1, 2]]).unwrap();
        let x = NodeFeatures {
            width: 1,
            data: vec![2.0, 9.0, 4.0, 1.0],
        };
        let out = message_passing_generic(&g, &replicate(Aggregator::Max, false), &x);
        assert_eq!(out.data, vec![0.0, 2.0, 9.0, 9.0]);
        let sum = message_passing_generic(&g, &replicate(Aggregator::Sum, false), &x);
        assert_eq!(sum.data, vec![0.0, 2.0, 11.0, 13.0]);
        let mean = message_passing_generic(&g, &replicate(Aggregator::Mean, true), &x);
        assert_eq!(mean.data, vec![2.0, 5.5, 5.0, 14.0 / 3.0]);
    }

    #[test]
    fn empty_sum_passes_zero_to_update() {
        let g = StaticGraph::from_adjacency(1, 1, vec![Event::new(0, 0, 0, 1, 0)], &[vec![]]).unwrap();
        let spec = GenericConvSpec {
            phi: Box::new(|_, x_j, _| x_j.to_vec()),
            aggregator: Aggregator::Sum,
            gamma: Box::new(|x_i, a| vec![x_i[0] * 10.0 + a[0]]),
            include_self: false,
            message_width: 1,
            out_width: 1,
        };
        let x = NodeFeatures {
            width: 1,
            data: vec![3.0],
        };
        assert_eq!(message_passing_generic(&g, &spec, &x).data, vec![30.0]);
    }

    #[test]
    fn specializes_to_simplified_conv() {
        let arch = Architecture {
            sensor: SensorSpec { width: 8, height: 8 },
            channels: vec![1, 5],
            patch: 8,
            ..Architecture::default()
        };
        let m = random_fp_model(&arch, 3, false);
        let nodes: Vec<Event> = (0..6).map(|n| Event::new((n * 3 % 8) as u16, (n % 5) as u16, n * 10, (n % 2) as u8, n)).collect();
        let srcs: Vec<Vec<u32>> = (0..6u32).map(|i| (0..i).filter(|j| (i + j) % 3 != 0).collect()).collect();
        let g = StaticGraph::from_adjacency(8, 8, nodes, &srcs).unwrap();
        let reference = forward_fp(&g, &m, FpConv::MaxAgg).unwrap();

        let layer = &m.layers[0];
        let spec = GenericConvSpec {
            phi: Box::new(|_, x_j, e| {
                let z = [x_j[0], f64::from(e.dx.unsigned_abs()), f64::from(e.dy.unsigned_abs())];
                layer.weights.chunks_exact(3).map(|row| row.iter().zip(&z).map(|(w, v)| w * v).sum()).collect()
            }),
            aggregator: Aggregator::Max,
            gamma: Box::new(|_, a| a.iter().zip(&layer.bias).map(|(v, b)| (v + b).max(0.0)).collect()),
            include_self: false,
            message_width: 5,
            out_width: 5,
        };
        let out = message_passing_generic(&g, &spec, &reference.layers[0]);
        assert_eq!(out, reference.layers[1]);
    }
}
