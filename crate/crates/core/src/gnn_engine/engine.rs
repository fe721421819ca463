//! The event-driven engine: one call per event, search then convolve then
//! read out then push.

use serde::{Deserialize, Serialize};

use super::kernels::{baq_scalar, encode_input, max_into, message_matvec_into, quantize_offset};
use super::model::QuantizedModel;
use super::state::{fc_forward, FeatureStore, Prediction, ReadoutState};
use super::EngineError;
use crate::event_io::{Event, EventStream};
use crate::graph_builder::{EventQueueGrid, NeighborSet, SearchStats};

/// Order in which the convolution layers of one event are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Each neighbor's stored features are fetched once and broadcast to all
    /// layers, which aggregate side by side.
    #[default]
    LayerParallel,
    /// Layers run one after another, each over the full neighbor list.
    LayerSequential,
}

/// Arithmetic performed, by datapath unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpCount {
    /// Message-generation multiply-accumulates.
    pub conv_macs: u64,
    /// Bias/ReLU/requantize operations, one per output channel per layer.
    pub baq_outputs: u64,
    /// Readout max comparisons.
    pub readout_compares: u64,
    /// Prediction-head multiply-accumulates.
    pub fc_macs: u64,
}

impl OpCount {
    /// Total operations, counting a MAC as two.
    pub fn total_ops(&self) -> u64 {
        2 * self.conv_macs + 2 * self.baq_outputs + self.readout_compares + 2 * self.fc_macs
    }

    pub fn macs(&self) -> u64 {
        self.conv_macs + self.fc_macs
    }
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, rhs: Self) {
        self.conv_macs += rhs.conv_macs;
        self.baq_outputs += rhs.baq_outputs;
        self.readout_compares += rhs.readout_compares;
        self.fc_macs += rhs.fc_macs;
    }
}

/// What happened while processing one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub n: u32,
    pub prediction: Prediction,
    pub neighbors: NeighborSet,
    pub search: SearchStats,
    /// Feature bytes fetched from the store for the neighbors.
    pub bytes_fetched: u64,
    /// Feature bytes written for the new event (all slots).
    pub bytes_written: u64,
    pub ops: OpCount,
}

impl EventRecord {
    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }
}

/// Queue grid, feature store and readout of one stream.
#[derive(Debug, Clone)]
pub struct EngineState {
    pub grid: EventQueueGrid,
    pub store: FeatureStore,
    pub readout: ReadoutState,
    processed: u32,
}

impl EngineState {
    pub fn new(model: &QuantizedModel) -> Result<Self, EngineError> {
        Ok(Self {
            grid: EventQueueGrid::new(model.sensor.width, model.sensor.height, model.search.queue_depth)?,
            store: FeatureStore::new(model.slot_widths()),
            readout: ReadoutState::new(model.grid, model.last_channels()),
            processed: 0,
        })
    }

    pub fn processed(&self) -> u32 {
        self.processed
    }
}

pub struct EventEngine<'m> {
    model: &'m QuantizedModel,
    state: EngineState,
    ops: OpCount,
    aggs: Vec<Vec<i32>>,
    msg: Vec<i32>,
    outputs: Vec<Vec<i8>>,
}

impl<'m> EventEngine<'m> {
    pub fn new(model: &'m QuantizedModel) -> Result<Self, EngineError> {
        model.validate()?;
        Ok(Self {
            model,
            state: EngineState::new(model)?,
            ops: OpCount::default(),
            aggs: model.layers.iter().map(|l| vec![0; l.c_out]).collect(),
            msg: Vec::new(),
            outputs: model.layers.iter().map(|l| vec![0; l.c_out]).collect(),
        })
    }

    pub fn model(&self) -> &QuantizedModel {
        self.model
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn into_state(self) -> EngineState {
        self.state
    }

    /// Operations performed since construction.
    pub fn ops(&self) -> OpCount {
        self.ops
    }

    /// Layer-parallel processing of the next event.
    pub fn process_event(&mut self, ev: &Event) -> Result<EventRecord, EngineError> {
        self.process(ev, Schedule::LayerParallel)
    }

    /// Layer-sequential processing of the next event.
    pub fn process_event_layer_sequential(&mut self, ev: &Event) -> Result<EventRecord, EngineError> {
        self.process(ev, Schedule::LayerSequential)
    }

    pub fn process(&mut self, ev: &Event, schedule: Schedule) -> Result<EventRecord, EngineError> {
        if ev.n != self.state.processed {
            return Err(EngineError::OutOfOrder {
                expected: self.state.processed,
                got: ev.n,
            });
        }
        let model = self.model;
        let (neighbors, search) = self
            .state
            .grid
            .search_neighbors_with_stats(ev, &model.search.params)?;

        let (read_before, written_before) = self.state.store.traffic();
        let conv_macs = match schedule {
            Schedule::LayerParallel => self.convolve_parallel(ev, &neighbors)?,
            Schedule::LayerSequential => self.convolve_sequential(ev, &neighbors)?,
        };

        let store = &mut self.state.store;
        store.write(ev.n, 0, &[encode_input(ev.p, &model.input_encoding)])?;
        for (l, out) in self.outputs.iter().enumerate() {
            store.write(ev.n, l + 1, out)?;
        }
        let (read_after, written_after) = store.traffic();

        let last = self.outputs.last().expect("validated model has layers");
        self.state.readout.update(ev.x, ev.y, last)?;
        let prediction = fc_forward(&self.state.readout, &model.fc)?;
        self.state.grid.push_event(ev)?;
        self.state.processed += 1;

        let ops = OpCount {
            conv_macs,
            baq_outputs: model.layers.iter().map(|l| l.c_out as u64).sum(),
            readout_compares: last.len() as u64,
            fc_macs: (model.fc.c_in * model.fc.c_out) as u64,
        };
        self.ops += ops;
        Ok(EventRecord {
            n: ev.n,
            prediction,
            neighbors,
            search,
            bytes_fetched: read_after - read_before,
            bytes_written: written_after - written_before,
            ops,
        })
    }

    /// Neighbor-outer loop: each neighbor's record is fetched once and every
    /// layer consumes its own slot of it. No layer reads another layer's
    /// output for the current event.
    fn convolve_parallel(&mut self, ev: &Event, neighbors: &NeighborSet) -> Result<u64, EngineError> {
        let model = self.model;
        let mut macs = 0u64;
        for (k, nb) in neighbors.iter().enumerate() {
            for (l, layer) in model.layers.iter().enumerate() {
                let x = self.state.store.read(nb.n, l)?;
                self.msg.resize(layer.c_out, 0);
                let qdx = quantize_offset(nb.dx, layer.pos_requant);
                let qdy = quantize_offset(nb.dy, layer.pos_requant);
                message_matvec_into(layer, x, qdx, qdy, &mut self.msg)?;
                macs += (layer.row_len() * layer.c_out) as u64;
                if k == 0 {
                    self.aggs[l].copy_from_slice(&self.msg);
                } else {
                    max_into(&mut self.aggs[l], &self.msg);
                }
            }
        }
        debug_assert!(neighbors.iter().all(|nb| nb.n < ev.n));
        self.finish_layers(neighbors.is_empty());
        Ok(macs)
    }

    /// Layer-outer loop, the textbook schedule.
    fn convolve_sequential(&mut self, _ev: &Event, neighbors: &NeighborSet) -> Result<u64, EngineError> {
        let model = self.model;
        let mut macs = 0u64;
        for (l, layer) in model.layers.iter().enumerate() {
            self.msg.resize(layer.c_out, 0);
            for (k, nb) in neighbors.iter().enumerate() {
                let x = self.state.store.read(nb.n, l)?;
                message_matvec_into(
                    layer,
                    x,
                    quantize_offset(nb.dx, layer.pos_requant),
                    quantize_offset(nb.dy, layer.pos_requant),
                    &mut self.msg,
                )?;
                macs += (layer.row_len() * layer.c_out) as u64;
                if k == 0 {
                    self.aggs[l].copy_from_slice(&self.msg);
                } else {
                    max_into(&mut self.aggs[l], &self.msg);
                }
            }
        }
        self.finish_layers(neighbors.is_empty());
        Ok(macs)
    }

    fn finish_layers(&mut self, isolated: bool) {
        let identity = self.model.empty_aggregation.value();
        for ((layer, agg), out) in self.model.layers.iter().zip(&mut self.aggs).zip(&mut self.outputs) {
            if isolated {
                agg.fill(identity);
            }
            for ((o, &a), &b) in out.iter_mut().zip(agg.iter()).zip(&layer.bias) {
                *o = baq_scalar(a, b, layer.requant);
            }
        }
    }

    /// Processes every event of `stream` in order.
    pub fn run_stream(&mut self, stream: &EventStream, schedule: Schedule) -> Result<Vec<EventRecord>, EngineError> {
        if stream.width != self.model.sensor.width || stream.height != self.model.sensor.height {
            return Err(EngineError::Model(format!(
                "stream geometry {}x{} does not match model sensor {}x{}",
                stream.width, stream.height, self.model.sensor.width, self.model.sensor.height
            )));
        }
        stream
            .events
            .iter()
            .map(|ev| self.process(ev, schedule))
            .collect()
    }
}
