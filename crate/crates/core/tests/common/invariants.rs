//! Structural invariants as reusable property checks.

use evgnn_core::gnn_engine::fixed_point::{requantize, Requant};
use evgnn_core::gnn_engine::kernels::{aggregate_max, baq, EmptyIdentity};
use evgnn_core::gnn_engine::model::LayerParams;
use evgnn_core::gnn_engine::quantize::random_fp_model;
use evgnn_core::gnn_engine::{EventEngine, Schedule};
use evgnn_core::graph_builder::{brute_force_neighbors, SearchParams};
use evgnn_core::static_oracle::{
    forward_fp, forward_int8, message_passing_generic, requantize_exact, Aggregator, FpConv, GenericConvSpec,
    StaticGraph,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestError, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scenario;

pub fn config(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

fn layer_with(requant: Requant, bias: Vec<i32>) -> LayerParams {
    LayerParams {
        c_in: 1,
        c_out: bias.len(),
        weights: vec![0; 3 * bias.len()],
        bias,
        requant,
        pos_requant: Requant::IDENTITY,
        s_in: None,
    }
}

pub fn requant_one_ulp(v: i64, m: u32, s: u32) -> Result<(), TestCaseError> {
    let rq = Requant::new(m, s);
    let exact = requantize_exact(v, rq);
    prop_assert!((i128::from(requantize(v, rq)) - exact).abs() <= 1, "v={v} M={m} shift={s}");
    Ok(())
}

pub fn max_commutes_with_baq(msgs: &[Vec<i32>], bias: Vec<i32>, m: u32, s: u32) -> Result<(), TestCaseError> {
    let width = bias.len();
    let layer = layer_with(Requant::new(m, s), bias);
    let lhs = baq(&aggregate_max(msgs, width, EmptyIdentity::Zero).unwrap(), &layer);
    let mut rhs = vec![i8::MIN; width];
    for msg in msgs {
        for (r, v) in rhs.iter_mut().zip(baq(msg, &layer)) {
            *r = (*r).max(v);
        }
    }
    prop_assert_eq!(lhs, rhs);
    Ok(())
}

/// Write-once store, monotone readout and the post-ReLU feature range.
pub fn engine_state(seed: u64, events: usize) -> Result<(), TestCaseError> {
    let sc = scenario(seed, events);
    let model = &sc.model;
    let mut engine = EventEngine::new(model).unwrap();
    let mut snapshots = Vec::new();
    let mut prev_readout = engine.state().readout.flat().to_vec();
    for ev in &sc.stream.events {
        engine.process_event(ev).unwrap();
        let state = engine.state();
        let now = state.readout.flat();
        prop_assert!(now.iter().zip(&prev_readout).all(|(a, b)| a >= b), "readout decreased at n={}", ev.n);
        prev_readout = now.to_vec();
        let slots: Vec<Vec<i8>> = (0..=model.layers.len())
            .map(|l| state.store.peek(ev.n, l).unwrap().to_vec())
            .collect();
        prop_assert!(slots[1..].iter().flatten().all(|&v| (0..=127).contains(&v)));
        snapshots.push(slots);
    }
    let store = &engine.state().store;
    for (n, slots) in snapshots.iter().enumerate() {
        for (l, s) in slots.iter().enumerate() {
            prop_assert_eq!(store.peek(n as u32, l).unwrap(), s.as_slice());
        }
    }
    if let Some(first) = snapshots.first() {
        let mut store = store.clone();
        prop_assert!(store.write(0, 1, &first[1]).is_err());
    }
    Ok(())
}

pub fn schedules_identical(seed: u64, events: usize) -> Result<(), TestCaseError> {
    let sc = scenario(seed, events);
    let a = EventEngine::new(&sc.model).unwrap().run_stream(&sc.stream, Schedule::LayerParallel).unwrap();
    let b = EventEngine::new(&sc.model).unwrap().run_stream(&sc.stream, Schedule::LayerSequential).unwrap();
    prop_assert_eq!(a, b);
    Ok(())
}

fn shuffled(graph: &StaticGraph, seed: u64) -> StaticGraph {
    let mut out = graph.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for adj in &mut out.adjacency {
        let mut v = adj.clone().into_vec();
        v.shuffle(&mut rng);
        *adj = v.into();
    }
    out
}

/// Shuffling neighbor lists changes neither the INT8 nor the FP forward
/// pass, nor generic sum/mean/max message passing (up to float rounding
/// for sum and mean).
pub fn permutation_invariance(seed: u64, shuffle_seed: u64, events: usize) -> Result<(), TestCaseError> {
    let sc = scenario(seed, events);
    let p = sc.model.search;
    let graph = StaticGraph::build(&sc.stream, &p.params, p.queue_depth).unwrap();
    let other = shuffled(&graph, shuffle_seed);
    prop_assert_eq!(forward_int8(&graph, &sc.model).unwrap(), forward_int8(&other, &sc.model).unwrap());

    let channels: Vec<usize> = std::iter::once(1).chain(sc.model.layers.iter().map(|l| l.c_out)).collect();
    let arch = evgnn_core::gnn_engine::Architecture {
        sensor: sc.model.sensor,
        channels,
        classes: sc.model.classes.clone(),
        search: sc.model.search,
        patch: sc.model.grid.patch,
    };
    let fp = random_fp_model(&arch, seed, false);
    let a = forward_fp(&graph, &fp, FpConv::MaxAgg).unwrap();
    let b = forward_fp(&other, &fp, FpConv::MaxAgg).unwrap();
    prop_assert_eq!(a.layers, b.layers);

    let x = forward_fp(&graph, &fp, FpConv::MaxAgg).unwrap().layers[1].clone();
    for agg in [Aggregator::Sum, Aggregator::Mean, Aggregator::Max] {
        let spec = GenericConvSpec {
            phi: Box::new(|x_i: &[f64], x_j: &[f64], e: &evgnn_core::Neighbor| {
                x_j.iter().zip(x_i).map(|(a, b)| a - 0.5 * b + f64::from(e.dx)).collect()
            }),
            aggregator: agg,
            gamma: Box::new(|x_i: &[f64], a: &[f64]| x_i.iter().zip(a).map(|(u, v)| u + v).collect()),
            include_self: true,
            message_width: x.width,
            out_width: x.width,
        };
        let u = message_passing_generic(&graph, &spec, &x);
        let v = message_passing_generic(&other, &spec, &x);
        for (p, q) in u.data.iter().zip(&v.data) {
            prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()), "{agg:?}: {p} vs {q}");
        }
    }
    Ok(())
}

/// Changing one node's input never changes features of earlier nodes.
pub fn directedness(seed: u64, pick: usize, events: usize) -> Result<(), TestCaseError> {
    let sc = scenario(seed, events);
    let p = sc.model.search;
    let graph = StaticGraph::build(&sc.stream, &p.params, p.queue_depth).unwrap();
    let pick = pick % graph.len().max(1);
    let base = forward_int8(&graph, &sc.model).unwrap();
    let mut altered = graph.clone();
    altered.nodes[pick].p ^= 1;
    let changed = forward_int8(&altered, &sc.model).unwrap();
    for l in 0..base.layers.len() {
        for n in 0..pick {
            prop_assert_eq!(base.layers[l].node(n), changed.layers[l].node(n));
        }
    }
    Ok(())
}

/// Growing either radius never loses a neighbor (no `D_max` truncation).
pub fn radius_monotone(seed: u64, r_s: u32, r_t: u32, grow_s: u32, grow_t: u32, events: usize) -> Result<(), TestCaseError> {
    let sc = scenario(seed, events);
    let evs = &sc.stream.events;
    for small in [SearchParams::prism(r_s, r_t, 100_000), SearchParams::cylinder(r_s, r_t, 100_000)] {
        let big = SearchParams {
            r_s: r_s + grow_s,
            r_t: r_t + grow_t,
            ..small
        };
        for (i, ev) in evs.iter().enumerate().step_by(5) {
            let a = brute_force_neighbors(&evs[..i], ev, &small, 8);
            let b = brute_force_neighbors(&evs[..i], ev, &big, 8);
            prop_assert!(a.iter().all(|nb| b.iter().any(|x| x.n == nb.n)));
        }
    }
    Ok(())
}

/// Runs every invariant under a fixed-seed runner; returns the name of
/// the first failing one with its message.
fn named<T: std::fmt::Debug>(name: &str, result: Result<(), TestError<T>>) -> Result<(), String> {
    result.map_err(|e| format!("{name}: {e}"))
}

/// Runs every invariant under fixed-seed runners. Returns the number of
/// invariants checked, or the first failure.
pub fn run_suite(scale: u32) -> Result<usize, String> {
    let mut r = TestRunner::new(config(2_000 * scale, 11));
    named(
        "requant",
        r.run(&(any::<i32>(), (1u32 << 30)..(1u32 << 31), 0u32..=62), |(v, m, s)| {
            requant_one_ulp(i64::from(v), m, s)
        }),
    )?;
    let mut r = TestRunner::new(config(500 * scale, 12));
    let msgs = proptest::collection::vec(proptest::collection::vec(-200_000i32..200_000, 6), 1..10);
    named(
        "max/requant commutation",
        r.run(
            &(msgs, proptest::collection::vec(-9_000i32..9_000, 6), (1u32 << 30)..(1u32 << 31), 28u32..46),
            |(m, b, mm, s)| max_commutes_with_baq(&m, b, mm, s),
        ),
    )?;
    let mut r = TestRunner::new(config(10 * scale, 13));
    named("write-once / readout / range", r.run(&(0u64..1_000_000), |s| engine_state(s, 1_500)))?;
    let mut r = TestRunner::new(config(10 * scale, 14));
    named("parallel == sequential", r.run(&(0u64..1_000_000), |s| schedules_identical(s, 1_500)))?;
    let mut r = TestRunner::new(config(10 * scale, 15));
    named(
        "aggregator permutation invariance",
        r.run(&(0u64..1_000_000, any::<u64>()), |(s, t)| permutation_invariance(s, t, 1_000)),
    )?;
    let mut r = TestRunner::new(config(10 * scale, 16));
    named("directedness", r.run(&(0u64..1_000_000, any::<usize>()), |(s, p)| directedness(s, p, 1_000)))?;
    let mut r = TestRunner::new(config(10 * scale, 17));
    named(
        "radius monotonicity",
        r.run(&(0u64..1_000_000, 0u32..4, 0u32..10_000, 0u32..3, 0u32..6_000), |(s, a, b, c, d)| {
            radius_monotone(s, a, b, c, d, 600)
        }),
    )?;
    Ok(7)
}
