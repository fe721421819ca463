use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use evgnn_core::event_io::{parse_binary_stream, parse_text_stream, write_binary_stream, write_text_stream, EventStream};
use evgnn_core::gnn_engine::model::SensorSpec;
use evgnn_core::gnn_engine::quantize::FpModel;
use evgnn_core::gnn_engine::QuantizedModel;
use evgnn_core::perf_model::HwConfig;

use crate::{SearchOverrides, StreamFormat};

pub fn format_of(path: &Path, explicit: Option<StreamFormat>) -> StreamFormat {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => StreamFormat::Bin,
        _ => StreamFormat::Text,
    })
}

pub fn read_stream(path: &Path, format: Option<StreamFormat>, sensor: SensorSpec) -> Result<EventStream> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let stream = match format_of(path, format) {
        StreamFormat::Text => parse_text_stream(&bytes, sensor.width, sensor.height),
        StreamFormat::Bin => parse_binary_stream(&bytes, sensor.width, sensor.height),
    };
    stream.with_context(|| format!("parsing {}", path.display()))
}

pub fn write_stream(path: &Path, format: Option<StreamFormat>, stream: &EventStream) -> Result<()> {
    let bytes = match format_of(path, format) {
        StreamFormat::Text => write_text_stream(stream).into_bytes(),
        StreamFormat::Bin => write_binary_stream(stream),
    };
    write(path, bytes)
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn read_model(path: &Path, search: &SearchOverrides) -> Result<QuantizedModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut model = QuantizedModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))?;
    search.apply(&mut model.search);
    model.validate().context("search overrides")?;
    for w in model.datapath_warnings() {
        log::warn!("{w}");
    }
    Ok(model)
}

pub fn read_fp_model(path: &Path) -> Result<FpModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    FpModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

/// `--hw` file, else an `"hw"` section of the model file, else defaults.
pub fn read_hw(hw: Option<&Path>, model_path: &Path) -> Result<HwConfig> {
    if let Some(path) = hw {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return HwConfig::from_json(&text).with_context(|| format!("loading hw config {}", path.display()));
    }
    let text = fs::read_to_string(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).context("model file is not JSON")?;
    if doc.get("hw").is_some() {
        log::info!("using the hw section of {}", model_path.display());
        return HwConfig::from_json(&text).context("hw section of the model file");
    }
    Ok(HwConfig::default())
}

/// Where to write the output for input `index` of `inputs`: `out` itself
/// for a single input, `out/<file name>.<ext>` otherwise.
pub fn output_path(out: &Path, inputs: &[PathBuf], index: usize, ext: &str) -> Result<PathBuf> {
    if inputs.len() == 1 {
        return Ok(out.to_path_buf());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let name = inputs[index]
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("stream{index}"));
    Ok(out.join(format!("{name}.{ext}")))
}

/// Applies `f` to every item on up to `jobs` threads; results keep input
/// order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

pub fn ensure_jobs(jobs: usize) -> Result<()> {
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    Ok(())
}
