//! Experiment driver behind the `csrnet` binary: training runs, epoch and
//! inference timing, scaling sweeps and size reports.

mod config;

pub use config::{
    build_model, default_lr, DatasetSpec, ExperimentConfig, DEFAULT_GAMMA, DEFAULT_LAYERS, DEFAULT_MILESTONES, MOMENTUM,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{model_size_report, save_model, ArchiveInfo, SizeReport};
use crate::error::{Error, Result};
use crate::nn::SoftmaxCrossEntropy;
use crate::sparsity::{chain_dims, density_report, er_densities, Seed, SparsityPlan, Stream};
use crate::tensor::parallel::{current_threads, with_threads};
use crate::tensor::DenseMatrix;
use crate::train::{sgd_train_with, Backend, EpochMetrics, TrainConfig};
use crate::VERSION;

/// Runs `f` on a pool of `threads` workers, or on the ambient pool.
pub fn in_pool<R, F>(threads: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> Result<R> + Send,
{
    match threads {
        Some(n) => with_threads(n, f)?,
        None => f(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub best_test_acc: Option<f64>,
    pub final_train_acc: Option<f64>,
    pub total_train_seconds: f64,
    pub param_count: usize,
    pub nnz_count: usize,
    pub archive_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// The configuration with the learning rate filled in.
    pub config: ExperimentConfig,
    pub layer_densities: Vec<f64>,
    pub layer_nnz: Vec<usize>,
    pub seed: Seed,
    pub backend: Backend,
    pub threads: usize,
    pub version: String,
    pub epochs: Vec<EpochMetrics>,
    pub summary: RunSummary,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes one JSON document per line.
pub fn write_jsonl<S: Serialize>(path: &Path, records: &[S]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).expect("value serializes");
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_epochs_csv(path: &Path, epochs: &[EpochMetrics]) -> Result<()> {
    let mut w = create(path)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut body = String::from("epoch,lr,train_loss,train_acc,test_acc,epoch_seconds\n");
    for e in epochs {
        body.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch,
            e.lr,
            e.train_loss,
            opt(e.train_acc),
            opt(e.test_acc),
            e.seconds
        ));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// `run.jsonl` → `run.summary.json`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.json"))
}

/// Trains one model. With `config.out` set, per-epoch records go there as
/// JSON-lines and the full report next to it (see [`summary_path`]).
pub fn cmd_train(config: &ExperimentConfig, csv: Option<&Path>) -> Result<RunReport> {
    config.validate()?;
    let mut config = config.clone();
    config.lr = Some(config.resolved_lr());
    in_pool(config.threads, || {
        let (mut model, plan) = build_model(&config)?;
        let outputs = *config.layers.last().expect("validated");
        let data = config.dataset.load(config.layers[0], outputs, config.seed)?;
        let schedule = config.schedule()?;
        let mut jsonl = match &config.out {
            Some(p) => Some((p.clone(), create(p)?)),
            None => None,
        };
        let mut write_err = None;
        let epochs = sgd_train_with(
            &mut model,
            &data,
            &SoftmaxCrossEntropy,
            &schedule,
            &config.train_config(),
            |m| {
                if let Some((path, w)) = jsonl.as_mut() {
                    let line = serde_json::to_string(m).expect("record serializes");
                    if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                        write_err.get_or_insert(Error::io(path.clone(), e));
                    }
                }
            },
        )?;
        if let Some(e) = write_err {
            return Err(e);
        }
        let density = density_report(&model)?;
        let summary = RunSummary {
            best_test_acc: epochs.iter().filter_map(|e| e.test_acc).reduce(f64::max),
            final_train_acc: epochs.last().and_then(|e| e.train_acc),
            total_train_seconds: epochs.iter().map(|e| e.seconds).sum(),
            param_count: density.parameter_count,
            nnz_count: density.weight_count,
            archive_bytes: model_size_report(&model)?.total_bytes,
        };
        let report = RunReport {
            layer_densities: plan.layer_densities.clone(),
            layer_nnz: plan.layer_nnz.clone(),
            seed: config.seed,
            backend: config.backend,
            threads: current_threads(),
            version: VERSION.into(),
            epochs,
            summary,
            config: config.clone(),
        };
        if let Some(out) = &config.out {
            write_json(&summary_path(out), &report)?;
        }
        if let Some(csv) = csv {
            write_epochs_csv(csv, &report.epochs)?;
        }
        Ok(report)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sweep {
    /// The base layer sizes at every requested density.
    Densities,
    /// `depth` hidden layers of `width` units for every listed depth.
    Depth { depths: Vec<usize>, width: usize },
    /// `depth` hidden layers for every listed width.
    Width { widths: Vec<usize>, depth: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchEpochConfig {
    pub base: ExperimentConfig,
    pub backends: Vec<Backend>,
    pub densities: Vec<f64>,
    pub sweep: Sweep,
    /// Epochs timed per point.
    pub epochs: usize,
    /// Points whose estimated footprint exceeds this are skipped as "oom".
    /// `None` uses the available system memory when it can be read.
    pub memory_limit: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchStatus {
    Ok,
    Oom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochBenchRecord {
    pub backend: Backend,
    pub density: f64,
    pub layers: Vec<usize>,
    pub status: BenchStatus,
    pub estimated_bytes: u64,
    pub epoch_seconds: Vec<f64>,
    pub mean_seconds: Option<f64>,
    pub median_seconds: Option<f64>,
    pub threads: usize,
    pub seed: Seed,
    pub version: String,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Rough training footprint: weights with gradient and velocity, indices or
/// masks, and a few batch-sized activation buffers per layer.
pub fn estimate_training_bytes(plan: &SparsityPlan, backend: Backend, batch: usize) -> u64 {
    let mut total = 0u64;
    for (i, &(n_in, n_out)) in plan.layer_dims.iter().enumerate() {
        let full = (n_in * n_out) as u64;
        total += if plan.is_saturated(i) {
            12 * full
        } else {
            match backend {
                Backend::Sparse => 16 * plan.layer_nnz[i] as u64 + 4 * (n_out as u64 + 1),
                Backend::Masked => 16 * full,
            }
        };
        total += 4 * 4 * (batch * (n_in + n_out)) as u64;
    }
    total
}

/// `MemAvailable` from `/proc/meminfo`, in bytes.
pub fn available_memory() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn sweep_shapes(base: &[usize], sweep: &Sweep) -> Vec<Vec<usize>> {
    let (input, output) = (base[0], *base.last().expect("validated"));
    let stack = |depth: usize, width: usize| {
        let mut s = vec![input];
        s.extend(std::iter::repeat_n(width, depth));
        s.push(output);
        s
    };
    match sweep {
        Sweep::Densities => vec![base.to_vec()],
        Sweep::Depth { depths, width } => depths.iter().map(|&d| stack(d, *width)).collect(),
        Sweep::Width { widths, depth } => widths.iter().map(|&w| stack(*depth, w)).collect(),
    }
}

/// Times `epochs` training epochs for every (shape, density, backend) point.
/// All points train on the same data. `on_record` sees each record as soon
/// as it is measured.
pub fn cmd_bench_epoch(
    config: &BenchEpochConfig,
    mut on_record: impl FnMut(&EpochBenchRecord) + Send,
) -> Result<Vec<EpochBenchRecord>> {
    config.base.validate()?;
    if config.backends.is_empty() || config.densities.is_empty() {
        return Err(Error::config("benchmark needs at least one backend and one density"));
    }
    if config.epochs == 0 {
        return Err(Error::config("benchmark needs at least one epoch"));
    }
    let shapes = sweep_shapes(&config.base.layers, &config.sweep);
    if shapes.iter().any(|s| s.contains(&0)) {
        return Err(Error::config("sweep layer sizes must be positive"));
    }
    let limit = config.memory_limit.or_else(available_memory);
    let base = &config.base;
    in_pool(base.threads, || {
        let outputs = *base.layers.last().expect("validated");
        let data = base.dataset.load(base.layers[0], outputs, base.seed)?;
        let mut records = Vec::new();
        for layers in &shapes {
            for &density in &config.densities {
                for &backend in &config.backends {
                    let point = ExperimentConfig {
                        layers: layers.clone(),
                        density,
                        backend,
                        epochs: config.epochs,
                        ..base.clone()
                    };
                    point.validate()?;
                    let plan = er_densities(&chain_dims(layers), density)?;
                    let estimated_bytes = estimate_training_bytes(&plan, backend, base.batch_size);
                    let mut record = EpochBenchRecord {
                        backend,
                        density,
                        layers: layers.clone(),
                        status: BenchStatus::Oom,
                        estimated_bytes,
                        epoch_seconds: Vec::new(),
                        mean_seconds: None,
                        median_seconds: None,
                        threads: current_threads(),
                        seed: base.seed,
                        version: VERSION.into(),
                    };
                    if limit.is_none_or(|l| estimated_bytes <= l) {
                        let (mut model, _) = build_model(&point)?;
                        let train = TrainConfig {
                            evaluate: false,
                            augment: false,
                            ..point.train_config()
                        };
                        let history = sgd_train_with(
                            &mut model,
                            &data,
                            &SoftmaxCrossEntropy,
                            &point.schedule()?,
                            &train,
                            |_| {},
                        )?;
                        let secs: Vec<f64> = history.iter().map(|e| e.seconds).collect();
                        record.status = BenchStatus::Ok;
                        record.mean_seconds = Some(secs.iter().sum::<f64>() / secs.len() as f64);
                        record.median_seconds = median(&secs);
                        record.epoch_seconds = secs;
                    }
                    on_record(&record);
                    records.push(record);
                }
            }
        }
        Ok(records)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub backend: Backend,
    pub density: f64,
    pub layers: Vec<usize>,
    pub warmup: usize,
    pub repeats: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub min_ms: f64,
    /// Output of the last timed call, for cross-run comparison.
    pub output: Vec<f32>,
    pub threads: usize,
    pub seed: Seed,
    pub version: String,
}

pub const INFERENCE_WARMUP: usize = 10;
pub const MIN_INFERENCE_REPEATS: usize = 100;

/// Latency of a single-example forward pass on a freshly built model.
pub fn cmd_bench_inference(config: &ExperimentConfig, repeats: usize) -> Result<InferenceReport> {
    config.validate()?;
    if repeats < MIN_INFERENCE_REPEATS {
        return Err(Error::config(format!(
            "inference benchmark needs at least {MIN_INFERENCE_REPEATS} repeats"
        )));
    }
    in_pool(config.threads, || {
        let (mut model, _) = build_model(config)?;
        let n_in = config.layers[0];
        let mut rng = config.seed.stream(Stream::Data, 1);
        let x = DenseMatrix::from_fn(n_in, 1, |_, _| rng.random_range(-1.0f32..1.0));
        for _ in 0..INFERENCE_WARMUP {
            model.predict(&x)?;
        }
        let mut times = Vec::with_capacity(repeats);
        let mut y = DenseMatrix::zeros(0, 0);
        for _ in 0..repeats {
            let t = Instant::now();
            y = model.predict(&x)?;
            times.push(t.elapsed().as_secs_f64() * 1e3);
        }
        Ok(InferenceReport {
            backend: config.backend,
            density: config.density,
            layers: config.layers.clone(),
            warmup: INFERENCE_WARMUP,
            repeats,
            mean_ms: times.iter().sum::<f64>() / repeats as f64,
            median_ms: median(&times).expect("repeats > 0"),
            min_ms: times.iter().copied().fold(f64::INFINITY, f64::min),
            output: y.into_vec(),
            threads: current_threads(),
            seed: config.seed,
            version: VERSION.into(),
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeCommandReport {
    pub layers: Vec<usize>,
    pub density: f64,
    pub backend: Backend,
    pub layer_densities: Vec<f64>,
    pub layer_nnz: Vec<usize>,
    pub parameter_count: usize,
    pub predicted: SizeReport,
    pub archive: ArchiveInfo,
    pub version: String,
}

/// Builds the model, predicts its archive size and writes the archive to
/// `config.out` (a scratch directory when unset, removed afterwards).
pub fn cmd_size(config: &ExperimentConfig) -> Result<SizeCommandReport> {
    let (model, plan) = build_model(config)?;
    let predicted = model_size_report(&model)?;
    let (dir, scratch) = match &config.out {
        Some(d) => (d.clone(), false),
        None => (
            std::env::temp_dir().join(format!("csrnet-size-{}-{}", std::process::id(), config.seed.0)),
            true,
        ),
    };
    let archive = save_model(&model, &dir);
    if scratch {
        let _ = std::fs::remove_dir_all(&dir);
    }
    let archive = archive?;
    Ok(SizeCommandReport {
        layers: config.layers.clone(),
        density: config.density,
        backend: config.backend,
        layer_densities: plan.layer_densities,
        layer_nnz: plan.layer_nnz,
        parameter_count: density_report(&model)?.parameter_count,
        predicted,
        archive,
        version: VERSION.into(),
    })
}
