use evgnn_demo::{latency_breakdown, neighbor_window, readout_heatmap, EVENTS};
use serde_json::Value;

fn parse(s: String) -> Value {
    let v: Value = serde_json::from_str(&s).unwrap();
    assert!(v.get("error").is_none(), "{v}");
    v
}

#[test]
fn neighbors_respect_the_window() {
    let v = parse(neighbor_window(7, 1500, 3, 4250, 16, false));
    let nbs = v["neighbors"].as_array().unwrap();
    assert!(!nbs.is_empty() && nbs.len() <= 16);
    for nb in nbs {
        let (dx, dy, dt) = (nb["dx"].as_i64().unwrap(), nb["dy"].as_i64().unwrap(), nb["dt"].as_u64().unwrap());
        assert!(dx.abs() + dy.abs() <= 3 && dt <= 4250);
    }
    // the disk contains the diamond
    let cyl = parse(neighbor_window(7, 1500, 3, 4250, 1000, true));
    let dia = parse(neighbor_window(7, 1500, 3, 4250, 1000, false));
    assert!(cyl["neighbors"].as_array().unwrap().len() >= dia["neighbors"].as_array().unwrap().len());
}

#[test]
fn index_is_clamped_to_the_stream() {
    let v = parse(neighbor_window(1, u32::MAX, 2, 1000, 4, true));
    assert_eq!(v["event"]["n"], EVENTS as u64 - 1);
}

#[test]
fn breakdown_stages_sum_to_the_no_overlap_total() {
    let v = parse(latency_breakdown(200.0, 3.2, false, false));
    let sum: f64 = v["stages"].as_array().unwrap().iter().map(|s| s["ns"].as_f64().unwrap()).sum();
    let total = v["mean_us"].as_f64().unwrap() * 1e3;
    assert!((sum - total).abs() < 1e-6 * total);
    assert!((total / 10_700.0 - 1.0).abs() < 0.15);

    let seq = parse(latency_breakdown(200.0, 3.2, false, true));
    let conv = |v: &Value| v["stages"][2]["cycles"].as_f64().unwrap();
    assert!(conv(&seq) / conv(&v) > 2.0);
}

#[test]
fn heatmap_grows_with_events() {
    let empty = parse(readout_heatmap(3, 0));
    assert!(empty["cells"].as_array().unwrap().iter().all(|c| c == 0));
    assert!(empty["class"].is_null());
    let full = parse(readout_heatmap(3, 2000));
    assert_eq!(full["processed"], 2000);
    assert_eq!(full["cells"].as_array().unwrap().len(), 8 * 7);
    let mid = parse(readout_heatmap(3, 500));
    for (a, b) in mid["cells"].as_array().unwrap().iter().zip(full["cells"].as_array().unwrap()) {
        assert!(a.as_i64() <= b.as_i64());
    }
}
