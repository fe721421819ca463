#![allow(dead_code)]

pub mod invariants;

use evgnn_core::event_io::{gen_synthetic, EventStream, SyntheticKind, SyntheticParams};
use evgnn_core::gnn_engine::model::{random_quantized_model, Architecture, SearchConfig, SensorSpec};
use evgnn_core::gnn_engine::QuantizedModel;
use evgnn_core::graph_builder::SearchParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One randomized equivalence scenario: stream, search and model shape.
pub struct Scenario {
    pub stream: EventStream,
    pub model: QuantizedModel,
}

pub fn scenario(seed: u64, events: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.gen_range(24..=80u16);
    let height = rng.gen_range(20..=64u16);
    let span_us = rng.gen_range(50_000..=400_000u32);
    let params = SyntheticParams {
        width,
        height,
        count: events,
        span_us,
    };
    let kind = if seed % 2 == 0 {
        SyntheticKind::UniformRandom
    } else {
        let radius = rng.gen_range(3.0..8.0f64);
        let room_x = (f64::from(width) - 2.0 * radius - 2.0).max(0.0);
        let room_y = (f64::from(height) - 2.0 * radius - 2.0).max(0.0);
        let ms = f64::from(span_us) / 1000.0;
        SyntheticKind::MovingDot {
            velocity: (rng.gen_range(-1.0..=1.0) * room_x / ms, rng.gen_range(-1.0..=1.0) * room_y / ms),
            radius,
            start: None,
        }
    };
    let stream = gen_synthetic(kind, params, seed ^ 0x5eed).expect("valid synthetic params");

    let r_s = rng.gen_range(1..=4u32);
    let r_t = rng.gen_range(500..=20_000u32);
    let d_max = rng.gen_range(1..=24usize);
    let search = SearchConfig {
        params: if rng.gen_bool(0.5) {
            SearchParams::prism(r_s, r_t, d_max)
        } else {
            SearchParams::cylinder(r_s, r_t, d_max)
        },
        queue_depth: rng.gen_range(1..=16),
    };
    let layers = rng.gen_range(1..=4usize);
    let mut channels = vec![1];
    channels.extend((0..layers).map(|_| rng.gen_range(1..=24usize)));
    let arch = Architecture {
        sensor: SensorSpec { width, height },
        channels,
        classes: (0..rng.gen_range(1..=4)).map(|c| format!("c{c}")).collect(),
        search,
        patch: rng.gen_range(4..=16),
    };
    let model = random_quantized_model(&arch, seed.wrapping_mul(31));
    Scenario { stream, model }
}
