//! File-level workflows behind the command-line tool.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::ArrayView2;

use crate::checkpoint;
use crate::config::{InputKind, RunConfig};
use crate::error::{Error, Result};
use crate::metrics::{format_value, MetricRecord};
use crate::network::MlpParams;
use crate::ntk::{self, grid_csv};
use crate::parallel::Parallelism;
use crate::sampler::Strategy;
use crate::signal::{self, ShapeMeta, SignalDataset};
use crate::trainer::{self, threshold_metric, RunSettings, TrainLog, TrainObserver};

pub const COMPARISON_HEADER: &str = "# nint comparison v1";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";

pub fn load_dataset(config: &RunConfig) -> Result<SignalDataset<f64>> {
    match config.input.kind {
        InputKind::Image => signal::load_image(&config.input.path, config.input.grayscale),
        InputKind::Audio => signal::load_audio(&config.input.path),
    }
}

/// Network settings with input/output widths taken from the dataset.
pub fn settings_for(config: &RunConfig, dataset: &SignalDataset<f64>) -> RunSettings {
    let mut settings = config.settings.clone();
    settings.network.in_dim = dataset.in_dim();
    settings.network.out_dim = dataset.out_dim();
    settings
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// File extension for reconstructions of a dataset, if it has one.
fn snapshot_extension(shape: &ShapeMeta) -> Option<&'static str> {
    match shape {
        ShapeMeta::Image { channels: 1, .. } => Some("pgm"),
        ShapeMeta::Image { .. } => Some("ppm"),
        ShapeMeta::Audio { .. } => Some("wav"),
        ShapeMeta::Synthetic { .. } => None,
    }
}

struct SnapshotWriter<'a> {
    dir: &'a Path,
    dataset: &'a SignalDataset<f64>,
}

impl TrainObserver<f64> for SnapshotWriter<'_> {
    fn snapshot(&mut self, iteration: usize, predictions: ArrayView2<'_, f64>) -> Result<()> {
        let Some(ext) = snapshot_extension(self.dataset.shape()) else {
            return Ok(());
        };
        let raw = self.dataset.denormalize(predictions)?;
        signal::write_raw(&self.dir.join(format!("snapshot_{iteration:06}.{ext}")), &raw)
    }
}

fn write_log(dir: &Path, log: &TrainLog) -> Result<()> {
    write_file(&dir.join("metrics.csv"), &log.metrics_csv())?;
    write_file(&dir.join("thresholds.csv"), &log.thresholds_csv())?;
    write_file(&dir.join("timing.csv"), &log.timing_csv())
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub final_metrics: MetricRecord<f64>,
    pub log: TrainLog,
    pub wall_seconds: f64,
    pub output_dir: PathBuf,
}

impl FitSummary {
    /// One-line report of the final quality and runtime.
    pub fn line(&self) -> String {
        let m = &self.final_metrics;
        let mut s = format!("final psnr={} mse={}", format_value(m.psnr), format_value(m.mse));
        if let Some(v) = m.ssim {
            let _ = write!(s, " ssim={}", format_value(v));
        }
        if let Some(v) = m.si_snr {
            let _ = write!(s, " si_snr={}", format_value(v));
        }
        let _ = write!(s, " wall={:.3}s", self.wall_seconds);
        s
    }
}

fn run_cell(
    config: &RunConfig,
    dataset: &SignalDataset<f64>,
    settings: &RunSettings,
    initial: MlpParams<f64>,
    dir: &Path,
    par: &Parallelism,
) -> Result<FitSummary> {
    create_dir(dir)?;
    let effective = RunConfig {
        settings: settings.clone(),
        output_dir: dir.to_path_buf(),
        ..config.clone()
    };
    write_file(&dir.join("config.toml"), &effective.to_toml())?;
    let clock = Instant::now();
    let mut snapshots = SnapshotWriter { dir, dataset };
    let (params, log) = trainer::train_from(dataset, settings, initial, par, &mut snapshots)?;
    let wall_seconds = clock.elapsed().as_secs_f64();
    write_log(dir, &log)?;
    checkpoint::save(&dir.join(CHECKPOINT_FILE), &settings.network, &params)?;
    let final_metrics = trainer::evaluate(&params, &settings.network, dataset, par)?;
    Ok(FitSummary {
        final_metrics,
        log,
        wall_seconds,
        output_dir: dir.to_path_buf(),
    })
}

/// Trains once and writes `config.toml`, `metrics.csv`, `thresholds.csv`,
/// `timing.csv`, snapshots and the final checkpoint to the output directory.
pub fn fit(config: &RunConfig, par: &Parallelism) -> Result<FitSummary> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let settings = settings_for(config, &dataset);
    let initial = MlpParams::init(&settings.network)?;
    run_cell(config, &dataset, &settings, initial, &config.output_dir, par)
}

#[derive(Debug, Clone)]
pub struct CompareCell {
    pub strategy: Strategy,
    pub seed: u64,
    pub theta0_digest: String,
    pub log: TrainLog,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub cells: Vec<CompareCell>,
    pub csv: String,
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    // an infinite upper middle means most runs never crossed
    if values.len() % 2 == 1 || values[mid].is_infinite() {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn comparison_csv(cells: &[CompareCell], strategies: &[Strategy], metric: &str, thresholds: &[f64]) -> String {
    let mut out = format!("{COMPARISON_HEADER}\nstrategy,seed,theta0_sha256,metric,target,iteration,wall_ms\n");
    let crossing = |cell: &CompareCell, target: f64| {
        cell.log
            .crossing(target)
            .map_or((f64::INFINITY, f64::INFINITY), |c| (c.iteration as f64, c.wall_ms))
    };
    for cell in cells {
        for &target in thresholds {
            let (iteration, wall) = crossing(cell, target);
            let _ = writeln!(
                out,
                "{},{},{},{metric},{},{},{}",
                cell.strategy,
                cell.seed,
                cell.theta0_digest,
                format_value(target),
                format_value(iteration),
                format_value(wall)
            );
        }
    }
    for &strategy in strategies {
        for &target in thresholds {
            let (iterations, walls): (Vec<f64>, Vec<f64>) = cells
                .iter()
                .filter(|c| c.strategy == strategy)
                .map(|c| crossing(c, target))
                .unzip();
            let _ = writeln!(
                out,
                "{strategy},median,,{metric},{},{},{}",
                format_value(target),
                format_value(median(iterations)),
                format_value(median(walls))
            );
        }
    }
    out
}

/// Runs every (strategy, seed) cell from one shared initialization per seed
/// and writes `comparison.csv` plus a full fit output per cell under
/// `<out>/<strategy>/seed_<seed>/`.
pub fn compare(
    config: &RunConfig,
    strategies: &[Strategy],
    seeds: &[u64],
    par: &Parallelism,
) -> Result<CompareSummary> {
    if strategies.len() < 2 {
        return Err(Error::Config("need at least two strategies".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    config.validate()?;
    let dataset = load_dataset(config)?;
    let mut cells = Vec::with_capacity(strategies.len() * seeds.len());
    for &seed in seeds {
        let mut seeded = config.clone();
        seeded.set_seed(seed);
        let base = settings_for(&seeded, &dataset);
        let initial = MlpParams::init(&base.network)?;
        let digest = checkpoint::theta_digest(&initial);
        for &strategy in strategies {
            let mut settings = base.clone();
            settings.sampler.strategy = strategy;
            let dir = config.output_dir.join(strategy.name()).join(format!("seed_{seed}"));
            let summary = run_cell(&seeded, &dataset, &settings, initial.clone(), &dir, par)?;
            cells.push(CompareCell {
                strategy,
                seed,
                theta0_digest: digest.clone(),
                log: summary.log,
                wall_seconds: summary.wall_seconds,
            });
        }
    }
    let csv = comparison_csv(
        &cells,
        strategies,
        threshold_metric(dataset.modality()),
        &config.settings.train.thresholds,
    );
    create_dir(&config.output_dir)?;
    write_file(&config.output_dir.join("comparison.csv"), &csv)?;
    Ok(CompareSummary { cells, csv })
}

/// Rectangle of pixels `rows x cols` with its top-left corner at `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl std::str::FromStr for Region {
    type Err = Error;

    /// `row,col,rows,cols`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("region `{s}` is not row,col,rows,cols")))?;
        match parts[..] {
            [row, col, rows, cols] if rows > 0 && cols > 0 => Ok(Region { row, col, rows, cols }),
            _ => Err(Error::Config(format!(
                "region `{s}` is not row,col,rows,cols with a nonempty size"
            ))),
        }
    }
}

impl Region {
    /// Dataset row indices covered by the region, in row-major order.
    pub fn indices(&self, height: usize, width: usize) -> Result<Vec<usize>> {
        if self.row + self.rows > height || self.col + self.cols > width {
            return Err(Error::Config(format!(
                "region {}x{} at ({}, {}) lies outside the {height}x{width} image",
                self.rows, self.cols, self.row, self.col
            )));
        }
        Ok((self.row..self.row + self.rows)
            .flat_map(|r| (self.col..self.col + self.cols).map(move |c| r * width + c))
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct DumpSummary {
    pub kernel: ntk::NtkMatrix<f64>,
    pub self_leverage: Vec<f64>,
}

/// Writes `ntk.csv`, `ntk.bin` and `leverage.csv` for an image region.
pub fn dump_ntk(checkpoint_path: &Path, input: &Path, region: Region, out_dir: &Path) -> Result<DumpSummary> {
    let (network, params) = checkpoint::load(checkpoint_path)?;
    let dataset = signal::load_image::<f64>(input, network.out_dim == 1)?;
    if dataset.in_dim() != network.in_dim || dataset.out_dim() != network.out_dim {
        return Err(Error::Config(format!(
            "checkpoint maps {} -> {} but the image gives {} -> {}",
            network.in_dim,
            network.out_dim,
            dataset.in_dim(),
            dataset.out_dim()
        )));
    }
    let ShapeMeta::Image { height, width, .. } = *dataset.shape() else {
        unreachable!("load_image yields image datasets");
    };
    let indices = region.indices(height, width)?;
    let kernel = ntk::ntk_patch(&params, &network, dataset.coords(), &indices)?;
    let self_leverage = kernel.self_leverage();
    create_dir(out_dir)?;
    kernel.write_csv(&out_dir.join("ntk.csv"))?;
    kernel.write_binary(&out_dir.join("ntk.bin"))?;
    write_file(&out_dir.join("leverage.csv"), &grid_csv(&self_leverage, region.cols))?;
    Ok(DumpSummary { kernel, self_leverage })
}
