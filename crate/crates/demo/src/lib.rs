//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every call rebuilds what it needs from the seed; a 2000-event stream
//! replays in a few milliseconds, so nothing is cached across calls.

use evgnn_core::event_io::{gen_synthetic, SyntheticKind, SyntheticParams};
use evgnn_core::gnn_engine::{EventEngine, QuantizedModel, Schedule};
use evgnn_core::graph_builder::{brute_force_neighbors, SearchParams};
use evgnn_core::perf_model::calibration::{calibrated_hw, calibration_model, representative_trace};
use evgnn_core::perf_model::{estimate_energy, estimate_trace, EventTrace};
use evgnn_core::EventStream;
use serde_json::json;
use wasm_bindgen::prelude::*;

pub const WIDTH: u16 = 120;
pub const HEIGHT: u16 = 100;
pub const EVENTS: usize = 2_000;

fn demo_stream(seed: u64) -> EventStream {
    gen_synthetic(
        SyntheticKind::MovingDot {
            velocity: (0.6, 0.3),
            radius: 12.0,
            start: None,
        },
        SyntheticParams {
            width: WIDTH,
            height: HEIGHT,
            count: EVENTS,
            span_us: 40_000,
        },
        seed,
    )
    .expect("demo stimulus is valid")
}

fn error_json(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// Neighbors of event `index` under the given search window, plus recent
/// events for context. Returns JSON.
#[wasm_bindgen]
pub fn neighbor_window(seed: u32, index: u32, r_s: u32, r_t_us: u32, d_max: u32, cylinder: bool) -> String {
    let stream = demo_stream(u64::from(seed));
    let i = (index as usize).min(stream.len() - 1);
    let ev = stream.events[i];
    let params = if cylinder {
        SearchParams::cylinder(r_s, r_t_us, d_max.max(1) as usize)
    } else {
        SearchParams::prism(r_s, r_t_us, d_max.max(1) as usize)
    };
    let neighbors = brute_force_neighbors(&stream.events[..i], &ev, &params, 16);
    let recent: Vec<_> = stream.events[..i]
        .iter()
        .rev()
        .take_while(|h| ev.t - h.t <= r_t_us.max(1) * 4)
        .map(|h| json!([h.x, h.y, ev.t - h.t, h.p]))
        .collect();
    json!({
        "width": WIDTH,
        "height": HEIGHT,
        "event": { "n": ev.n, "x": ev.x, "y": ev.y, "t": ev.t, "p": ev.p },
        "neighbors": neighbors.iter().map(|nb| json!({ "n": nb.n, "dx": nb.dx, "dy": nb.dy, "dt": nb.dt })).collect::<Vec<_>>(),
        "recent": recent,
    })
    .to_string()
}

/// Per-stage latency and energy of the calibration model under modified
/// hardware settings. Returns JSON.
#[wasm_bindgen]
pub fn latency_breakdown(clock_mhz: f64, dram_gbps: f64, overlap: bool, sequential: bool) -> String {
    let model = calibration_model();
    let trace = representative_trace(&model);
    breakdown_json(&model, &trace, clock_mhz, dram_gbps, overlap, sequential)
}

pub fn breakdown_json(
    model: &QuantizedModel,
    trace: &EventTrace,
    clock_mhz: f64,
    dram_gbps: f64,
    overlap: bool,
    sequential: bool,
) -> String {
    let mut cfg = calibrated_hw();
    cfg.clock_hz = (clock_mhz * 1e6).round();
    cfg.dram_bw_bits_per_s = (dram_gbps * 1e9).round();
    cfg.overlap_fetch_compute = overlap;
    cfg.schedule = if sequential {
        Schedule::LayerSequential
    } else {
        Schedule::LayerParallel
    };
    let report = match estimate_trace(model, trace, &cfg).and_then(|r| estimate_energy(r, trace, model, &cfg)) {
        Ok(r) => r,
        Err(e) => return error_json(e),
    };
    let s = &report.per_stage;
    let stages: Vec<_> = [
        ("graph build", s.graph_build),
        ("feature fetch", s.feature_fetch),
        ("conv", s.conv),
        ("write-back", s.writeback),
        ("readout + FC", s.readout_fc),
    ]
    .iter()
    .map(|(name, st)| json!({ "name": name, "cycles": st.cycles, "ns": st.ns, "nj": st.joules.unwrap_or(0.0) * 1e9 }))
    .collect();
    json!({
        "stages": stages,
        "mean_us": report.totals.mean_us,
        "mean_nj": report.totals.mean_nj,
        "mean_degree": trace.mean_degree(),
    })
    .to_string()
}

/// Readout grid after the first `events` events: per-cell maximum over
/// channels, row-major, plus the current prediction. Returns JSON.
#[wasm_bindgen]
pub fn readout_heatmap(seed: u32, events: u32) -> String {
    let stream = demo_stream(u64::from(seed));
    let model = calibration_model();
    let mut engine = match EventEngine::new(&model) {
        Ok(e) => e,
        Err(e) => return error_json(e),
    };
    let mut last = None;
    for ev in stream.events.iter().take(events as usize) {
        match engine.process(ev, Schedule::LayerParallel) {
            Ok(r) => last = Some(r.prediction),
            Err(e) => return error_json(e),
        }
    }
    let readout = &engine.state().readout;
    let grid = readout.grid();
    let mut cells = Vec::with_capacity(grid.cells());
    for gy in 0..grid.gy {
        for gx in 0..grid.gx {
            cells.push(readout.cell(gx, gy).iter().copied().max().unwrap_or(0));
        }
    }
    json!({
        "gx": grid.gx,
        "gy": grid.gy,
        "cells": cells,
        "processed": engine.state().processed(),
        "class": last.as_ref().map(|p| p.class),
        "logits": last.map(|p| p.logits),
    })
    .to_string()
}
