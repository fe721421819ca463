//! Discrete-event replay of the per-event pipeline.
//!
//! Each unit (queue search, DMA, MatVec, BAQ, write-back DMA, readout/FC)
//! posts a completion at `now + duration`; completions drive the next
//! step. Events are processed back to back. The simulation never consults
//! the closed-form totals, only the per-operation durations.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{
    baq_total, neighbor_bursts, per_neighbor_compute, readout_fc_cycles, EventTrace, HwConfig, LatencyBreakdown,
    PerfError, PerfReport,
};
use crate::gnn_engine::QuantizedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Step {
    SearchDone,
    FetchDone(usize),
    ComputeDone(usize),
    BaqDone,
    WritebackDone,
    ReadoutDone,
}

struct Sim {
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64, Step)>>,
}

impl Sim {
    fn post(&mut self, delay: u64, step: Step) {
        self.seq += 1;
        self.queue.push(Reverse((self.now + delay, self.seq, step)));
    }

    fn next(&mut self) -> Option<Step> {
        let Reverse((t, _, step)) = self.queue.pop()?;
        debug_assert!(t >= self.now);
        self.now = t;
        Some(step)
    }
}

/// Simulates every event of `trace` and reports per-event stage busy times
/// and end-to-end latency.
pub fn simulate_cycles(trace: &EventTrace, model: &QuantizedModel, cfg: &HwConfig) -> Result<PerfReport, PerfError> {
    cfg.validate()?;
    trace.validate(model)?;
    let compute = per_neighbor_compute(model, cfg.schedule);
    let baq = baq_total(model, cfg.schedule, cfg.baq_cycles);
    let readout = readout_fc_cycles(model, cfg);

    let mut sim = Sim {
        now: 0,
        seq: 0,
        queue: BinaryHeap::new(),
    };
    let mut per_event = Vec::with_capacity(trace.len());
    for entry in &trace.entries {
        let start = sim.now;
        let bursts: Vec<u64> = neighbor_bursts(entry).map(|b| cfg.transfer_cycles(b)).collect();
        let mut b = LatencyBreakdown::default();
        let mut fetched = vec![false; bursts.len()];
        let mut computed = vec![false; bursts.len()];

        sim.post(u64::from(entry.entries_scanned) * cfg.cycles_per_queue_entry_scan, Step::SearchDone);
        let start_neighbor = |sim: &mut Sim, j: usize, b: &mut LatencyBreakdown| {
            b.feature_fetch += bursts[j];
            sim.post(bursts[j], Step::FetchDone(j));
            if cfg.overlap_fetch_compute {
                // MatVec consumes the burst as it streams in
                b.conv += compute;
                sim.post(compute, Step::ComputeDone(j));
            }
        };
        let after_neighbors = |sim: &mut Sim, j: usize, b: &mut LatencyBreakdown| {
            if j + 1 < bursts.len() {
                start_neighbor(sim, j + 1, b);
            } else {
                b.conv += baq;
                sim.post(baq, Step::BaqDone);
            }
        };

        while let Some(step) = sim.next() {
            match step {
                Step::SearchDone => {
                    b.graph_build = sim.now - start;
                    if bursts.is_empty() {
                        b.conv += baq;
                        sim.post(baq, Step::BaqDone);
                    } else {
                        start_neighbor(&mut sim, 0, &mut b);
                    }
                }
                Step::FetchDone(j) => {
                    fetched[j] = true;
                    if !cfg.overlap_fetch_compute {
                        b.conv += compute;
                        sim.post(compute, Step::ComputeDone(j));
                    } else if computed[j] {
                        after_neighbors(&mut sim, j, &mut b);
                    }
                }
                Step::ComputeDone(j) => {
                    computed[j] = true;
                    if fetched[j] {
                        after_neighbors(&mut sim, j, &mut b);
                    }
                }
                Step::BaqDone => {
                    let w = cfg.transfer_cycles(entry.bytes_written);
                    b.writeback = w;
                    sim.post(w, Step::WritebackDone);
                }
                Step::WritebackDone => {
                    b.readout_fc = readout;
                    sim.post(readout, Step::ReadoutDone);
                }
                Step::ReadoutDone => {
                    b.total = sim.now - start;
                }
            }
        }
        per_event.push(b);
    }
    Ok(PerfReport::from_events(model, cfg, per_event))
}
