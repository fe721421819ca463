//! Event-driven graph neural network inference for event cameras.
//!
//! Each incoming event becomes a node of a directed dynamic graph whose
//! edges only point from past events to the new one. Because past features
//! never change, a new node needs only its 1-hop neighborhood, no edges are
//! ever stored, and every layer of the network can be evaluated at once.
//!
//! - [`event_io`]: stream formats and synthetic stimulus.
//! - [`graph_builder`]: per-pixel event queues and neighbor search.
//! - [`gnn_engine`]: the integer event-driven engine and the INT8 quantizer.
//! - [`static_oracle`]: whole-graph reference forward passes.
//! - [`perf_model`]: cycle and energy model of the accelerator datapath.

pub mod event_io;
pub mod gnn_engine;
pub mod graph_builder;
pub mod perf_model;
pub mod static_oracle;

pub use event_io::{Event, EventStream};
pub use graph_builder::{EventQueueGrid, Neighbor, NeighborSet, SearchParams, SearchShape};
