//! Cycle and energy model of the accelerator datapath.
//!
//! Per event the pipeline runs: neighbor search over the event queues,
//! one DRAM burst per neighbor to fetch its stored features, message
//! generation and aggregation in the MatVec unit, BAQ, write-back of the new
//! features, and finally the readout update plus FC head on the reused
//! MatVec unit. [`estimate_event_latency`] gives the closed form;
//! [`simulate_cycles`] replays the same pipeline as a discrete-event
//! simulation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn_engine::ops::event_ops;
use crate::gnn_engine::{EventRecord, QuantizedModel, Schedule};

pub mod calibration;
mod des;

pub use des::simulate_cycles;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("energy constants missing from the hardware config: {0}")]
    MissingConstants(String),
    #[error("invalid hardware config: {0}")]
    InvalidConfig(String),
    #[error("trace entry {index} has degree {degree} above D_max {d_max}")]
    DegreeAboveMax { index: usize, degree: u32, d_max: usize },
}

/// Accelerator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HwConfig {
    pub clock_hz: f64,
    pub dram_bw_bits_per_s: f64,
    pub cycles_per_queue_entry_scan: u64,
    /// Cycles of one BAQ pass; all output channels of a layer are
    /// processed side by side.
    pub baq_cycles: u64,
    /// Fixed cycles added to the readout/FC stage.
    pub readout_overhead_cycles: u64,
    /// On-chip bytes per event-queue entry, for SRAM energy.
    pub queue_entry_bytes: u64,
    pub overlap_fetch_compute: bool,
    pub schedule: Schedule,
    /// Joules per 8-bit MAC.
    pub e_mac: Option<f64>,
    pub e_sram_byte: Option<f64>,
    pub e_dram_byte: Option<f64>,
}

impl Default for HwConfig {
    fn default() -> Self {
        Self {
            clock_hz: 200e6,
            dram_bw_bits_per_s: 3.2e9,
            cycles_per_queue_entry_scan: 1,
            baq_cycles: 1,
            readout_overhead_cycles: 0,
            queue_entry_bytes: 8,
            overlap_fetch_compute: true,
            schedule: Schedule::LayerParallel,
            e_mac: None,
            e_sram_byte: None,
            e_dram_byte: None,
        }
    }
}

#[derive(Deserialize)]
struct HwSection {
    hw: HwConfig,
}

impl HwConfig {
    pub fn validate(&self) -> Result<(), PerfError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.clock_hz) || !positive(self.dram_bw_bits_per_s) {
            return Err(PerfError::InvalidConfig("clock and bandwidth must be positive".into()));
        }
        for (name, e) in [("e_mac", self.e_mac), ("e_sram_byte", self.e_sram_byte), ("e_dram_byte", self.e_dram_byte)] {
            if let Some(e) = e {
                if !(e.is_finite() && e >= 0.0) {
                    return Err(PerfError::InvalidConfig(format!("{name} must be non-negative")));
                }
            }
        }
        Ok(())
    }

    /// Reads the `"hw"` section of a JSON config document.
    pub fn from_json(text: &str) -> Result<Self, PerfError> {
        let section: HwSection = serde_json::from_str(text).map_err(|e| PerfError::InvalidConfig(e.to_string()))?;
        section.hw.validate()?;
        Ok(section.hw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({ "hw": self })).expect("config serializes")
    }

    /// Cycles to move `bytes` over the DRAM link, rounded up.
    pub fn transfer_cycles(&self, bytes: u64) -> u64 {
        if bytes == 0 {
            return 0;
        }
        let (clock, bw) = (self.clock_hz, self.dram_bw_bits_per_s);
        if clock.fract() == 0.0 && bw.fract() == 0.0 && clock < 1e18 && bw < 1e18 {
            let num = u128::from(bytes) * 8 * clock as u128;
            let den = bw as u128;
            return num.div_ceil(den) as u64;
        }
        (bytes as f64 * 8.0 * clock / bw).ceil() as u64
    }

    pub fn cycles_to_ns(&self, cycles: f64) -> f64 {
        cycles * 1e9 / self.clock_hz
    }
}

/// Instrumentation of one processed event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceEntry {
    pub degree: u32,
    pub entries_scanned: u32,
    pub bytes_fetched: u64,
    pub bytes_written: u64,
}

impl From<&EventRecord> for TraceEntry {
    fn from(r: &EventRecord) -> Self {
        Self {
            degree: r.degree() as u32,
            entries_scanned: r.search.entries_scanned,
            bytes_fetched: r.bytes_fetched,
            bytes_written: r.bytes_written,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventTrace {
    pub entries: Vec<TraceEntry>,
}

impl EventTrace {
    pub fn from_records(records: &[EventRecord]) -> Self {
        Self {
            entries: records.iter().map(TraceEntry::from).collect(),
        }
    }

    /// Trace entries as the engine would record them for the given degrees
    /// and scan counts.
    pub fn synthetic(model: &QuantizedModel, degrees_and_scans: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let per_neighbor = per_neighbor_bytes(model);
        let written: u64 = model.slot_widths().iter().map(|&w| w as u64).sum();
        Self {
            entries: degrees_and_scans
                .into_iter()
                .map(|(degree, entries_scanned)| TraceEntry {
                    degree,
                    entries_scanned,
                    bytes_fetched: u64::from(degree) * per_neighbor,
                    bytes_written: written,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| f64::from(e.degree)).sum::<f64>() / self.entries.len() as f64
    }

    pub fn validate(&self, model: &QuantizedModel) -> Result<(), PerfError> {
        let d_max = model.search.params.d_max;
        for (index, e) in self.entries.iter().enumerate() {
            if e.degree as usize > d_max {
                return Err(PerfError::DegreeAboveMax {
                    index,
                    degree: e.degree,
                    d_max,
                });
            }
        }
        Ok(())
    }
}

/// Bytes fetched per neighbor: its stored input and every layer output but
/// the last.
pub fn per_neighbor_bytes(model: &QuantizedModel) -> u64 {
    let widths = model.slot_widths();
    widths[..widths.len() - 1].iter().map(|&w| w as u64).sum()
}

/// Per-neighbor MatVec cycles: each layer needs `C_in + 2` sequential
/// accumulations, parallel over output channels.
pub fn per_neighbor_compute(model: &QuantizedModel, schedule: Schedule) -> u64 {
    let terms = model.layers.iter().map(|l| l.row_len() as u64);
    match schedule {
        Schedule::LayerParallel => terms.max().unwrap_or(0),
        Schedule::LayerSequential => terms.sum(),
    }
}

/// BAQ cycles per event.
pub fn baq_total(model: &QuantizedModel, schedule: Schedule, baq_cycles: u64) -> u64 {
    match schedule {
        Schedule::LayerParallel => baq_cycles,
        Schedule::LayerSequential => model.layers.len() as u64 * baq_cycles,
    }
}

/// Convolution-stage cycles for one event with `deg` neighbors.
pub fn conv_latency(model: &QuantizedModel, deg: u64, schedule: Schedule, baq_cycles: u64) -> u64 {
    deg * per_neighbor_compute(model, schedule) + baq_total(model, schedule, baq_cycles)
}

pub fn readout_fc_cycles(model: &QuantizedModel, cfg: &HwConfig) -> u64 {
    (model.grid.cells() * model.last_channels()) as u64 + cfg.readout_overhead_cycles
}

/// Splits an event's fetched bytes into per-neighbor bursts.
pub(crate) fn neighbor_bursts(entry: &TraceEntry) -> impl Iterator<Item = u64> {
    let deg = u64::from(entry.degree);
    let (base, rem) = if deg == 0 {
        (0, 0)
    } else {
        (entry.bytes_fetched / deg, entry.bytes_fetched % deg)
    };
    (0..deg).map(move |j| base + u64::from(j < rem))
}

/// Per-stage cycles of one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub graph_build: u64,
    pub feature_fetch: u64,
    /// MatVec plus BAQ cycles.
    pub conv: u64,
    pub writeback: u64,
    pub readout_fc: u64,
    /// End-to-end cycles; equals the stage sum unless fetch and compute
    /// overlap.
    pub total: u64,
}

impl LatencyBreakdown {
    pub fn stage_sum(&self) -> u64 {
        self.graph_build + self.feature_fetch + self.conv + self.writeback + self.readout_fc
    }

    pub fn stages(&self) -> [(&'static str, u64); 5] {
        [
            ("graph_build", self.graph_build),
            ("feature_fetch", self.feature_fetch),
            ("conv", self.conv),
            ("writeback", self.writeback),
            ("readout_fc", self.readout_fc),
        ]
    }
}

/// Closed-form latency of one event.
pub fn estimate_event_latency(model: &QuantizedModel, entry: &TraceEntry, cfg: &HwConfig) -> LatencyBreakdown {
    let compute = per_neighbor_compute(model, cfg.schedule);
    let baq = baq_total(model, cfg.schedule, cfg.baq_cycles);
    let mut fetch_sum = 0;
    let mut overlapped = 0;
    for bytes in neighbor_bursts(entry) {
        let f = cfg.transfer_cycles(bytes);
        fetch_sum += f;
        overlapped += f.max(compute);
    }
    let b = LatencyBreakdown {
        graph_build: u64::from(entry.entries_scanned) * cfg.cycles_per_queue_entry_scan,
        feature_fetch: fetch_sum,
        conv: u64::from(entry.degree) * compute + baq,
        writeback: cfg.transfer_cycles(entry.bytes_written),
        readout_fc: readout_fc_cycles(model, cfg),
        total: 0,
    };
    let total = if cfg.overlap_fetch_compute {
        b.graph_build + overlapped + baq + b.writeback + b.readout_fc
    } else {
        b.stage_sum()
    };
    LatencyBreakdown { total, ..b }
}

/// Energy per stage of one event, in joules.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageEnergy {
    pub graph_build: f64,
    pub feature_fetch: f64,
    pub conv: f64,
    pub writeback: f64,
    pub readout_fc: f64,
}

impl StageEnergy {
    pub fn total(&self) -> f64 {
        self.graph_build + self.feature_fetch + self.conv + self.writeback + self.readout_fc
    }
}

/// Activity counts that energy is charged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Activity {
    pub macs: u64,
    pub sram_bytes: u64,
    pub dram_bytes: u64,
}

/// Activity per stage: queue reads and the new entry in SRAM for the
/// search; DRAM bursts for fetch and write-back; one weight byte per MAC
/// for conv and FC, plus the readout cell update and readout read.
pub fn event_activity(model: &QuantizedModel, entry: &TraceEntry, cfg: &HwConfig) -> [Activity; 5] {
    let ops = event_ops(model, entry.degree as usize);
    let last = model.last_channels() as u64;
    let flat = (model.grid.cells() * model.last_channels()) as u64;
    [
        Activity {
            sram_bytes: (u64::from(entry.entries_scanned) + 1) * cfg.queue_entry_bytes,
            ..Activity::default()
        },
        Activity {
            dram_bytes: entry.bytes_fetched,
            ..Activity::default()
        },
        Activity {
            macs: ops.conv_macs,
            sram_bytes: ops.conv_macs,
            ..Activity::default()
        },
        Activity {
            dram_bytes: entry.bytes_written,
            ..Activity::default()
        },
        Activity {
            macs: ops.fc_macs,
            sram_bytes: ops.fc_macs + 2 * last + flat,
            ..Activity::default()
        },
    ]
}

fn energy_constants(cfg: &HwConfig) -> Result<(f64, f64, f64), PerfError> {
    let missing: Vec<&str> = [("e_mac", cfg.e_mac), ("e_sram_byte", cfg.e_sram_byte), ("e_dram_byte", cfg.e_dram_byte)]
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| *n)
        .collect();
    match (cfg.e_mac, cfg.e_sram_byte, cfg.e_dram_byte) {
        (Some(a), Some(b), Some(c)) => Ok((a, b, c)),
        _ => Err(PerfError::MissingConstants(missing.join(", "))),
    }
}

/// `E = macs·e_mac + sram_bytes·e_sram_byte + dram_bytes·e_dram_byte`,
/// split by stage.
pub fn event_energy(model: &QuantizedModel, entry: &TraceEntry, cfg: &HwConfig) -> Result<StageEnergy, PerfError> {
    let (e_mac, e_sram, e_dram) = energy_constants(cfg)?;
    let e = |a: &Activity| a.macs as f64 * e_mac + a.sram_bytes as f64 * e_sram + a.dram_bytes as f64 * e_dram;
    let [g, f, c, w, r] = event_activity(model, entry, cfg);
    Ok(StageEnergy {
        graph_build: e(&g),
        feature_fetch: e(&f),
        conv: e(&c),
        writeback: e(&w),
        readout_fc: e(&r),
    })
}

/// Mean of one stage over a trace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageStats {
    pub cycles: f64,
    pub ns: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joules: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerStage {
    pub graph_build: StageStats,
    pub feature_fetch: StageStats,
    pub conv: StageStats,
    pub writeback: StageStats,
    pub readout_fc: StageStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub events: usize,
    pub cycles: u64,
    pub mean_cycles: f64,
    pub mean_us: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joules: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_nj: Option<f64>,
    /// One-time transfer of all parameters into on-chip memory; not part of
    /// the per-event figures.
    pub weight_load_cycles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub clock_hz: f64,
    pub overlap_fetch_compute: bool,
    pub schedule: Schedule,
    pub per_stage: PerStage,
    pub totals: Totals,
    /// Of per-event total cycles.
    pub percentiles: Percentiles,
    #[serde(skip)]
    pub per_event: Vec<LatencyBreakdown>,
    #[serde(skip)]
    pub per_event_energy: Option<Vec<StageEnergy>>,
}

impl PerfReport {
    /// Aggregates per-event breakdowns.
    pub fn from_events(model: &QuantizedModel, cfg: &HwConfig, per_event: Vec<LatencyBreakdown>) -> Self {
        let n = per_event.len();
        let mean = |f: fn(&LatencyBreakdown) -> u64| {
            if n == 0 {
                0.0
            } else {
                per_event.iter().map(f).sum::<u64>() as f64 / n as f64
            }
        };
        let stage = |cycles: f64| StageStats {
            cycles,
            ns: cfg.cycles_to_ns(cycles),
            joules: None,
        };
        let per_stage = PerStage {
            graph_build: stage(mean(|b| b.graph_build)),
            feature_fetch: stage(mean(|b| b.feature_fetch)),
            conv: stage(mean(|b| b.conv)),
            writeback: stage(mean(|b| b.writeback)),
            readout_fc: stage(mean(|b| b.readout_fc)),
        };
        let total: u64 = per_event.iter().map(|b| b.total).sum();
        let mean_cycles = mean(|b| b.total);
        let mut sorted: Vec<u64> = per_event.iter().map(|b| b.total).collect();
        sorted.sort_unstable();
        let pct = |p: f64| {
            if sorted.is_empty() {
                0
            } else {
                sorted[((p * n as f64).ceil() as usize).clamp(1, n) - 1]
            }
        };
        Self {
            clock_hz: cfg.clock_hz,
            overlap_fetch_compute: cfg.overlap_fetch_compute,
            schedule: cfg.schedule,
            per_stage,
            totals: Totals {
                events: n,
                cycles: total,
                mean_cycles,
                mean_us: cfg.cycles_to_ns(mean_cycles) / 1e3,
                joules: None,
                mean_nj: None,
                weight_load_cycles: weight_load_cycles(model, cfg),
            },
            percentiles: Percentiles {
                p50: pct(0.5),
                p90: pct(0.9),
                p99: pct(0.99),
                max: sorted.last().copied().unwrap_or(0),
            },
            per_event,
            per_event_energy: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per event.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,graph_build,feature_fetch,conv,writeback,readout_fc,total_cycles,energy_j\n");
        for (n, b) in self.per_event.iter().enumerate() {
            let energy = self
                .per_event_energy
                .as_ref()
                .map(|e| format!("{:e}", e[n].total()))
                .unwrap_or_default();
            out.push_str(&format!(
                "{n},{},{},{},{},{},{},{energy}\n",
                b.graph_build, b.feature_fetch, b.conv, b.writeback, b.readout_fc, b.total
            ));
        }
        out
    }
}

/// Bytes of every parameter (INT8 weights, 32-bit biases and requantizers)
/// moved over the DRAM link once.
pub fn weight_load_cycles(model: &QuantizedModel, cfg: &HwConfig) -> u64 {
    let conv: usize = model.layers.iter().map(|l| l.weights.len() + 4 * l.bias.len() + 16).sum();
    let fc = model.fc.weights.len() + 4 * model.fc.bias.len();
    cfg.transfer_cycles((conv + fc) as u64)
}

/// Closed-form report over a whole trace.
pub fn estimate_trace(model: &QuantizedModel, trace: &EventTrace, cfg: &HwConfig) -> Result<PerfReport, PerfError> {
    cfg.validate()?;
    trace.validate(model)?;
    let per_event = trace
        .entries
        .iter()
        .map(|e| estimate_event_latency(model, e, cfg))
        .collect();
    Ok(PerfReport::from_events(model, cfg, per_event))
}

/// Fills the energy fields of `report`.
pub fn estimate_energy(
    mut report: PerfReport,
    trace: &EventTrace,
    model: &QuantizedModel,
    cfg: &HwConfig,
) -> Result<PerfReport, PerfError> {
    let energies = trace
        .entries
        .iter()
        .map(|e| event_energy(model, e, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let n = energies.len().max(1) as f64;
    let mean = |f: fn(&StageEnergy) -> f64| energies.iter().map(f).sum::<f64>() / n;
    let s = &mut report.per_stage;
    s.graph_build.joules = Some(mean(|e| e.graph_build));
    s.feature_fetch.joules = Some(mean(|e| e.feature_fetch));
    s.conv.joules = Some(mean(|e| e.conv));
    s.writeback.joules = Some(mean(|e| e.writeback));
    s.readout_fc.joules = Some(mean(|e| e.readout_fc));
    let total: f64 = energies.iter().map(StageEnergy::total).sum();
    report.totals.joules = Some(total);
    report.totals.mean_nj = Some(if energies.is_empty() { 0.0 } else { total / n * 1e9 });
    report.per_event_energy = Some(energies);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn_engine::model::{random_quantized_model, Architecture};

    fn model(channels: Vec<usize>) -> QuantizedModel {
        random_quantized_model(
            &Architecture {
                channels,
                ..Architecture::default()
            },
            0,
        )
    }

    #[test]
    fn two_bytes_per_cycle_at_defaults() {
        let cfg = HwConfig::default();
        assert_eq!(cfg.transfer_cycles(2), 1);
        assert_eq!(cfg.transfer_cycles(200), 100);
        assert_eq!(cfg.transfer_cycles(129), 65);
        assert_eq!(cfg.transfer_cycles(0), 0);
    }

    #[test]
    fn conv_latency_forms() {
        let m = model(vec![1, 48, 48, 32, 16]);
        assert_eq!(conv_latency(&m, 0, Schedule::LayerParallel, 1), 1);
        assert_eq!(conv_latency(&m, 0, Schedule::LayerSequential, 1), 4);
        assert_eq!(conv_latency(&m, 10, Schedule::LayerParallel, 1), 501);
        assert_eq!(conv_latency(&m, 10, Schedule::LayerSequential, 1), 1374);
        // equal input widths: ratio of the MatVec terms is the layer count
        let eq = model(vec![1, 1, 1, 1, 1]);
        assert_eq!(
            conv_latency(&eq, 1, Schedule::LayerSequential, 0),
            4 * conv_latency(&eq, 1, Schedule::LayerParallel, 0)
        );
    }

    #[test]
    fn isolated_event_is_readout_bound() {
        let m = model(vec![1, 48, 48, 32, 16]);
        let cfg = HwConfig::default();
        let t = EventTrace::synthetic(&m, [(0, 0)]);
        let b = estimate_event_latency(&m, &t.entries[0], &cfg);
        assert_eq!(b.feature_fetch, 0);
        assert_eq!(b.conv, 1);
        assert_eq!(b.readout_fc, 896);
        assert_eq!(b.writeback, 73);
        assert_eq!(b.total, b.stage_sum());
    }

    #[test]
    fn overlap_takes_per_neighbor_max() {
        let m = model(vec![1, 48, 48, 32, 16]);
        let t = EventTrace::synthetic(&m, [(10, 40)]);
        let mut cfg = HwConfig::default();
        let b = estimate_event_latency(&m, &t.entries[0], &cfg);
        assert_eq!(b.feature_fetch, 650);
        assert_eq!(b.total, 40 + 650 + 1 + 73 + 896);
        cfg.overlap_fetch_compute = false;
        let b = estimate_event_latency(&m, &t.entries[0], &cfg);
        assert_eq!(b.total, 40 + 650 + 501 + 73 + 896);
    }

    #[test]
    fn energy_requires_constants_and_is_linear() {
        let m = model(vec![1, 8, 4]);
        let t = EventTrace::synthetic(&m, [(3, 12), (0, 5)]);
        let mut cfg = HwConfig::default();
        let report = estimate_trace(&m, &t, &cfg).unwrap();
        assert!(matches!(
            estimate_energy(report.clone(), &t, &m, &cfg),
            Err(PerfError::MissingConstants(_))
        ));
        cfg.e_mac = Some(0.0);
        cfg.e_sram_byte = Some(0.0);
        cfg.e_dram_byte = Some(0.0);
        let zero = estimate_energy(report.clone(), &t, &m, &cfg).unwrap();
        assert_eq!(zero.totals.joules, Some(0.0));

        cfg.e_mac = Some(1e-12);
        let one = event_energy(&m, &t.entries[0], &cfg).unwrap();
        cfg.e_mac = Some(2e-12);
        let two = event_energy(&m, &t.entries[0], &cfg).unwrap();
        assert_eq!(two.conv, 2.0 * one.conv);
        assert_eq!(two.total(), 2.0 * one.total());
    }

    #[test]
    fn report_json_and_csv() {
        let m = model(vec![1, 8, 4]);
        let t = EventTrace::synthetic(&m, [(3, 12), (0, 5), (1, 1)]);
        let r = estimate_trace(&m, &t, &HwConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(v["per_stage"]["conv"]["cycles"].as_f64().unwrap() > 0.0);
        assert_eq!(v["totals"]["events"], 3);
        assert_eq!(r.to_csv().lines().count(), 4);
    }

    #[test]
    fn config_json() {
        let cfg = HwConfig {
            e_mac: Some(1e-13),
            ..HwConfig::default()
        };
        assert_eq!(HwConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let partial = HwConfig::from_json(r#"{"hw": {"clock_hz": 1e8}, "other": 1}"#).unwrap();
        assert_eq!(partial.clock_hz, 1e8);
        assert_eq!(partial.dram_bw_bits_per_s, 3.2e9);
        assert!(HwConfig::from_json(r#"{"hw": {"clock_hz": 0}}"#).is_err());
        assert!(HwConfig::from_json(r#"{"clock_hz": 1}"#).is_err());
    }

    #[test]
    fn degree_above_d_max_is_rejected() {
        let m = model(vec![1, 2]);
        let t = EventTrace::synthetic(&m, [(17, 0)]);
        assert!(estimate_trace(&m, &t, &HwConfig::default()).is_err());
    }
}
