//! Whole-graph reference forward passes.
//!
//! The stream is first materialized as a static directed graph (each
//! node's neighbor list exactly as the event queues would have produced
//! it), then every layer is evaluated over all nodes before the next one
//! starts. Readout and prediction are replayed per event afterwards to get a
//! prediction for every prefix of the stream.

use std::fmt::Display;

use thiserror::Error;

use crate::event_io::{Event, EventStream};
use crate::gnn_engine::quantize::FpModel;
use crate::gnn_engine::{Prediction, QuantizedModel};
use crate::graph_builder::{brute_force_neighbors, GraphError, Neighbor, NeighborSet, SearchParams};

mod fp;
pub mod generic;
mod int8;

pub use fp::{forward_fp, FpConv, FpOutput, FpPrediction};
pub use generic::{message_passing_generic, Aggregator, GenericConvSpec};
pub use int8::{forward_int8, requantize_exact, Int8Output};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("model is incompatible with this graph or convolution: {0}")]
    IncompatibleModel(String),
    #[error("edge {from} -> {to} does not point from the past to the present")]
    AcausalEdge { from: u32, to: u32 },
    #[error("accumulator for node {n}, channel {channel} exceeds 32 bits")]
    Overflow { n: u32, channel: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A fully materialized event graph. `adjacency[i]` holds the incoming
/// edges of node `i` in canonical scan order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticGraph {
    pub width: u16,
    pub height: u16,
    pub nodes: Vec<Event>,
    pub adjacency: Vec<NeighborSet>,
}

impl StaticGraph {
    /// Builds every neighborhood from the stream history directly, replaying
    /// queue eviction, scan order and `D_max`. Works for every search shape.
    pub fn build(stream: &EventStream, params: &SearchParams, queue_depth: usize) -> Result<Self, OracleError> {
        params.validate()?;
        if queue_depth == 0 {
            return Err(GraphError::InvalidDims {
                width: stream.width.into(),
                height: stream.height.into(),
                depth: 0,
            }
            .into());
        }
        let events = &stream.events;
        let adjacency = events
            .iter()
            .enumerate()
            .map(|(i, ev)| brute_force_neighbors(&events[..i], ev, params, queue_depth))
            .collect();
        Ok(Self {
            width: stream.width,
            height: stream.height,
            nodes: events.clone(),
            adjacency,
        })
    }

    /// A graph with explicit topology: `sources[i]` lists the nodes whose
    /// messages node `i` receives. Edges must point from lower to higher
    /// index.
    pub fn from_adjacency(width: u16, height: u16, nodes: Vec<Event>, sources: &[Vec<u32>]) -> Result<Self, OracleError> {
        if sources.len() != nodes.len() {
            return Err(OracleError::IncompatibleModel(format!(
                "{} adjacency lists for {} nodes",
                sources.len(),
                nodes.len()
            )));
        }
        let mut adjacency = Vec::with_capacity(nodes.len());
        for (i, srcs) in sources.iter().enumerate() {
            let ev = &nodes[i];
            let mut set = NeighborSet::with_capacity(srcs.len());
            for &j in srcs {
                if j as usize >= i || nodes[j as usize].t > ev.t {
                    return Err(OracleError::AcausalEdge { from: j, to: i as u32 });
                }
                let src = &nodes[j as usize];
                set.push(Neighbor {
                    n: src.n,
                    t: src.t,
                    p: src.p,
                    dx: i32::from(ev.x) - i32::from(src.x),
                    dy: i32::from(ev.y) - i32::from(src.y),
                    dt: ev.t - src.t,
                });
            }
            adjacency.push(set);
        }
        Ok(Self {
            width,
            height,
            nodes,
            adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(NeighborSet::len).sum()
    }

    /// Number of incoming edges of node `i`.
    pub fn in_degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }
}

/// Free-function form of [`StaticGraph::build`].
pub fn build_static_graph(stream: &EventStream, params: &SearchParams, queue_depth: usize) -> Result<StaticGraph, OracleError> {
    StaticGraph::build(stream, params, queue_depth)
}

/// Per-node features of one layer slot, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures<T> {
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Copy> NodeFeatures<T> {
    pub fn new(width: usize, nodes: usize, fill: T) -> Self {
        Self {
            width,
            data: vec![fill; width * nodes],
        }
    }

    pub fn node(&self, n: usize) -> &[T] {
        &self.data[n * self.width..(n + 1) * self.width]
    }

    pub fn node_mut(&mut self, n: usize) -> &mut [T] {
        &mut self.data[n * self.width..(n + 1) * self.width]
    }

    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Which layer equation to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvType {
    MaxInt8,
    MaxFp,
    PointNetFp,
    GcnFp,
}

pub enum OracleModel<'a> {
    Int8(&'a QuantizedModel),
    Fp(&'a FpModel),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StaticOutput {
    Int8(Int8Output),
    Fp(FpOutput),
}

/// Dispatches to [`forward_int8`] or [`forward_fp`].
pub fn forward_static(graph: &StaticGraph, model: OracleModel<'_>, conv: ConvType) -> Result<StaticOutput, OracleError> {
    match (model, conv) {
        (OracleModel::Int8(m), ConvType::MaxInt8) => forward_int8(graph, m).map(StaticOutput::Int8),
        (OracleModel::Fp(m), ConvType::MaxFp) => forward_fp(graph, m, FpConv::MaxAgg).map(StaticOutput::Fp),
        (OracleModel::Fp(m), ConvType::PointNetFp) => forward_fp(graph, m, FpConv::PointNet).map(StaticOutput::Fp),
        (OracleModel::Fp(m), ConvType::GcnFp) => forward_fp(graph, m, FpConv::Gcn).map(StaticOutput::Fp),
        (_, conv) => Err(OracleError::IncompatibleModel(format!(
            "{conv:?} needs a {} model",
            if conv == ConvType::MaxInt8 { "quantized" } else { "floating-point" }
        ))),
    }
}

/// One text line per event: `n class logit0 logit1 …`.
pub fn write_trace<L: Display>(trace: impl IntoIterator<Item = (usize, impl AsRef<[L]>)>) -> String {
    let mut out = String::new();
    for (n, (class, logits)) in trace.into_iter().enumerate() {
        out.push_str(&format!("{n} {class}"));
        for l in logits.as_ref() {
            out.push_str(&format!(" {l}"));
        }
        out.push('\n');
    }
    out
}

/// [`write_trace`] for integer predictions.
pub fn write_prediction_trace(trace: &[Prediction]) -> String {
    write_trace(trace.iter().map(|p| (p.class, &p.logits)))
}

fn check_geometry(graph: &StaticGraph, width: u16, height: u16) -> Result<(), OracleError> {
    if graph.width != width || graph.height != height {
        return Err(OracleError::IncompatibleModel(format!(
            "graph is {}x{} but the model expects {}x{}",
            graph.width, graph.height, width, height
        )));
    }
    Ok(())
}
