use std::fmt::Write as _;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use evgnn_core::event_io::{gen_synthetic, SyntheticKind, SyntheticParams};
use evgnn_core::gnn_engine::model::{random_quantized_model, Architecture, SensorSpec};
use evgnn_core::gnn_engine::quantize::{quantize_model, random_fp_model};
use evgnn_core::gnn_engine::{EventEngine, EventRecord, Prediction, QuantizedModel, Schedule};
use evgnn_core::perf_model::calibration::calibration_architecture;
use evgnn_core::perf_model::{estimate_energy, estimate_trace, simulate_cycles, EventTrace};
use evgnn_core::static_oracle::{forward_fp, forward_int8, write_prediction_trace, FpConv, StaticGraph};

use crate::io;
use crate::{BenchArgs, GenArgs, GenKind, InferArgs, InitModelArgs, QuantizeArgs, VerifyArgs};

fn label(model: &QuantizedModel, class: usize) -> String {
    match model.classes.get(class) {
        Some(name) => format!("{class} ({name})"),
        None => class.to_string(),
    }
}

fn schedule(sequential: bool) -> Schedule {
    if sequential {
        Schedule::LayerSequential
    } else {
        Schedule::LayerParallel
    }
}

fn run(model: &QuantizedModel, stream: &evgnn_core::EventStream, schedule: Schedule) -> Result<(Vec<EventRecord>, f64)> {
    let mut engine = EventEngine::new(model)?;
    let start = Instant::now();
    let records = engine.run_stream(stream, schedule)?;
    Ok((records, start.elapsed().as_secs_f64()))
}

fn summary(model: &QuantizedModel, records: &[EventRecord], secs: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "events: {}", records.len());
    match records.last() {
        None => {
            let _ = writeln!(out, "no events");
        }
        Some(last) => {
            let _ = writeln!(
                out,
                "final prediction: {} logits {:?}",
                label(model, last.prediction.class),
                last.prediction.logits
            );
            let _ = writeln!(out, "throughput: {:.0} events/s", records.len() as f64 / secs.max(1e-9));
        }
    }
    out
}

pub fn infer(args: &InferArgs) -> Result<ExitCode> {
    io::ensure_jobs(args.jobs)?;
    let model = io::read_model(&args.model, &args.search)?;
    let outputs = io::parallel_map(&args.streams, args.jobs, |i, path| -> Result<String> {
        let stream = io::read_stream(path, args.format, model.sensor)?;
        let (records, secs) = run(&model, &stream, schedule(args.sequential))?;
        let mut out = summary(&model, &records, secs);
        if let Some(trace_out) = &args.trace_out {
            let dest = io::output_path(trace_out, &args.streams, i, "trace")?;
            let preds: Vec<Prediction> = records.into_iter().map(|r| r.prediction).collect();
            io::write(&dest, write_prediction_trace(&preds))?;
            let _ = writeln!(out, "trace: {}", dest.display());
        }
        Ok(out)
    });
    for (path, out) in args.streams.iter().zip(outputs) {
        let out = out?;
        if args.streams.len() > 1 {
            println!("== {}", path.display());
        }
        print!("{out}");
    }
    Ok(ExitCode::SUCCESS)
}

/// Outcome of comparing the three evaluation paths on one stream.
enum Comparison {
    Identical { events: usize, layers: usize },
    Diverged(String),
}

fn compare_paths(model: &QuantizedModel, stream: &evgnn_core::EventStream) -> Result<Comparison> {
    let mut par = EventEngine::new(model)?;
    let mut seq = EventEngine::new(model)?;
    let a = par.run_stream(stream, Schedule::LayerParallel).context("layer-parallel run")?;
    let b = seq.run_stream(stream, Schedule::LayerSequential).context("layer-sequential run")?;
    let graph = StaticGraph::build(stream, &model.search.params, model.search.queue_depth)?;
    let oracle = forward_int8(&graph, model).context("static run")?;

    let (ps, ss) = (&par.state().store, &seq.state().store);
    for n in 0..graph.len() {
        for (l, feats) in oracle.layers.iter().enumerate() {
            let (x, y, z) = (ps.peek(n as u32, l)?, ss.peek(n as u32, l)?, feats.node(n));
            if let Some(c) = (0..z.len()).find(|&c| x[c] != z[c] || y[c] != z[c]) {
                return Ok(Comparison::Diverged(format!(
                    "first divergence at n={n}, l={l}, channel={c}: layer-parallel={} layer-sequential={} static={}",
                    x[c], y[c], z[c]
                )));
            }
        }
    }
    for (n, ((ra, rb), po)) in a.iter().zip(&b).zip(&oracle.trace).enumerate() {
        if ra.prediction != *po || rb.prediction != *po {
            return Ok(Comparison::Diverged(format!(
                "first prediction divergence at n={n}: layer-parallel {:?} layer-sequential {:?} static {:?}",
                ra.prediction.logits, rb.prediction.logits, po.logits
            )));
        }
        if ra.neighbors != rb.neighbors {
            return Ok(Comparison::Diverged(format!("neighbor sets differ between schedules at n={n}")));
        }
    }
    Ok(Comparison::Identical {
        events: graph.len(),
        layers: model.num_layers(),
    })
}

pub fn verify(args: &VerifyArgs) -> Result<ExitCode> {
    io::ensure_jobs(args.jobs)?;
    let model = io::read_model(&args.model, &args.search)?;
    let results = io::parallel_map(&args.streams, args.jobs, |_, path| {
        let stream = io::read_stream(path, args.format, model.sensor)?;
        compare_paths(&model, &stream)
    });
    let mut diverged = false;
    for (path, result) in args.streams.iter().zip(results) {
        match result? {
            Comparison::Identical { events, layers } => println!(
                "{}: ok, {events} events x {layers} layers identical across layer-parallel, layer-sequential and static",
                path.display()
            ),
            Comparison::Diverged(msg) => {
                diverged = true;
                println!("{}: {msg}", path.display());
            }
        }
    }
    Ok(if diverged { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

pub fn bench(args: &BenchArgs) -> Result<ExitCode> {
    let model = io::read_model(&args.model, &args.search)?;
    let mut cfg = io::read_hw(args.hw.as_deref(), &args.model)?;
    if args.sequential {
        cfg.schedule = Schedule::LayerSequential;
    }
    let stream = io::read_stream(&args.stream, args.format, model.sensor)?;
    let (records, secs) = run(&model, &stream, cfg.schedule)?;
    print!("{}", summary(&model, &records, secs));
    let trace = EventTrace::from_records(&records);

    let mut report = estimate_trace(&model, &trace, &cfg)?;
    let simulated = simulate_cycles(&trace, &model, &cfg)?;
    if simulated.totals.cycles != report.totals.cycles {
        bail!(
            "closed-form total {} cycles disagrees with simulated {}",
            report.totals.cycles,
            simulated.totals.cycles
        );
    }
    let has_energy = cfg.e_mac.is_some() && cfg.e_sram_byte.is_some() && cfg.e_dram_byte.is_some();
    if has_energy {
        report = estimate_energy(report, &trace, &model, &cfg)?;
    }

    println!(
        "schedule: {:?}, fetch/compute overlap: {}, clock {:.0} MHz",
        cfg.schedule,
        cfg.overlap_fetch_compute,
        cfg.clock_hz / 1e6
    );
    println!("mean degree: {:.2}", trace.mean_degree());
    println!("{:<14}{:>12}{:>12}{:>12}", "stage", "cycles", "ns", "nJ");
    let s = &report.per_stage;
    for (name, st) in [
        ("graph_build", s.graph_build),
        ("feature_fetch", s.feature_fetch),
        ("conv", s.conv),
        ("writeback", s.writeback),
        ("readout_fc", s.readout_fc),
    ] {
        let nj = st.joules.map(|j| format!("{:.2}", j * 1e9)).unwrap_or_else(|| "-".into());
        println!("{name:<14}{:>12.1}{:>12.1}{nj:>12}", st.cycles, st.ns);
    }
    let t = &report.totals;
    let nj = t.mean_nj.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
    println!("{:<14}{:>12.1}{:>12.1}{nj:>12}", "total", t.mean_cycles, t.mean_us * 1e3);
    println!(
        "per event: {:.3} us, {} nJ; cycles p50 {} p90 {} p99 {} max {}",
        t.mean_us, nj, report.percentiles.p50, report.percentiles.p90, report.percentiles.p99, report.percentiles.max
    );
    println!("weight load (once): {} cycles", t.weight_load_cycles);
    println!("discrete-event cross-check: ok ({} cycles)", simulated.totals.cycles);

    if let Some(path) = &args.trace_out {
        let mut csv = String::from("n,degree,entries_scanned,bytes_fetched,bytes_written\n");
        for (n, e) in trace.entries.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{n},{},{},{},{}",
                e.degree, e.entries_scanned, e.bytes_fetched, e.bytes_written
            );
        }
        io::write(path, csv)?;
        println!("trace: {}", path.display());
    }
    if let Some(path) = &args.report_out {
        let body = if path.extension().is_some_and(|e| e == "csv") {
            report.to_csv()
        } else {
            report.to_json()
        };
        io::write(path, body)?;
        println!("report: {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn gen(args: &GenArgs) -> Result<ExitCode> {
    let kind = match args.kind {
        GenKind::Uniform => SyntheticKind::UniformRandom,
        GenKind::MovingDot => SyntheticKind::MovingDot {
            velocity: (args.vx, args.vy),
            radius: args.radius,
            start: None,
        },
    };
    let params = SyntheticParams {
        width: args.width,
        height: args.height,
        count: args.count,
        span_us: args.span_us,
    };
    let stream = gen_synthetic(kind, params, args.seed)?;
    io::write_stream(&args.out, args.format, &stream)?;
    println!(
        "wrote {} events ({}x{}) to {}",
        stream.len(),
        args.width,
        args.height,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn quantize(args: &QuantizeArgs) -> Result<ExitCode> {
    let fp = io::read_fp_model(&args.fp_model)?.folded()?;
    let calib = io::read_stream(&args.calib, args.format, fp.sensor)?;
    let model = quantize_model(&fp, &calib)?;
    for w in model.datapath_warnings() {
        log::warn!("{w}");
    }
    io::write(&args.out, model.to_json())?;
    println!("wrote quantized model to {}", args.out.display());

    if !calib.is_empty() {
        let graph = StaticGraph::build(&calib, &fp.search.params, fp.search.queue_depth)?;
        let reference = forward_fp(&graph, &fp, FpConv::MaxAgg)?;
        let (records, _) = run(&model, &calib, Schedule::LayerParallel)?;
        let agree = reference
            .trace
            .iter()
            .zip(&records)
            .filter(|(f, r)| f.class == r.prediction.class)
            .count();
        println!(
            "argmax agreement with the floating-point model on the calibration stream: {:.2}% ({agree}/{})",
            100.0 * agree as f64 / records.len() as f64,
            records.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

pub fn init_model(args: &InitModelArgs) -> Result<ExitCode> {
    let mut arch = if args.calibration {
        calibration_architecture()
    } else {
        Architecture::default()
    };
    arch.sensor = SensorSpec {
        width: args.width.unwrap_or(arch.sensor.width),
        height: args.height.unwrap_or(arch.sensor.height),
    };
    if let Some(widths) = &args.channels {
        if widths.is_empty() || widths.contains(&0) {
            bail!("--channels needs at least one positive width");
        }
        arch.channels = std::iter::once(1).chain(widths.iter().copied()).collect();
    }
    if let Some(patch) = args.patch {
        arch.patch = patch;
    }
    if let Some(classes) = &args.classes {
        arch.classes = classes.clone();
    }
    args.search.apply(&mut arch.search);

    let json = if args.fp {
        let model = random_fp_model(&arch, args.seed, args.bn);
        model.validate()?;
        model.to_json()
    } else {
        let model = random_quantized_model(&arch, args.seed);
        model.validate()?;
        model.to_json()
    };
    io::write(&args.out, json)?;
    println!("wrote {} model to {}", if args.fp { "floating-point" } else { "quantized" }, args.out.display());
    Ok(ExitCode::SUCCESS)
}
