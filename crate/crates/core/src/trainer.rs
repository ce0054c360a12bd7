//! The fitting loop: full forward pass, output gradient, batch selection,
//! batch gradient step, periodic evaluation.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::metrics::{self, format_value, MetricRecord, SSIM_WINDOW};
use crate::network::{self, MlpParams, NetworkConfig};
use crate::ntk;
use crate::parallel::Parallelism;
use crate::sampler::{self, SamplerConfig, SelectionState};
use crate::scalar::Scalar;
use crate::signal::{Modality, ShapeMeta, SignalDataset};

pub const METRICS_HEADER: &str = "# nint metrics v1";
pub const THRESHOLDS_HEADER: &str = "# nint thresholds v1";
pub const TIMING_HEADER: &str = "# nint timing v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub optimizer: OptimizerKind,
    pub eval_every: usize,
    /// 0 disables snapshots.
    pub snapshot_every: usize,
    /// Targets in dB for the modality's threshold metric.
    pub thresholds: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            iterations: 1000,
            optimizer: OptimizerKind::adam(),
            eval_every: 10,
            snapshot_every: 0,
            thresholds: vec![25.0, 30.0, 35.0],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!(
                "train.learning_rate must be a nonnegative number, got {}",
                self.learning_rate
            ));
        }
        if self.iterations == 0 {
            return fail("train.iterations must be at least 1".into());
        }
        if self.eval_every == 0 {
            return fail("train.eval_every must be at least 1".into());
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps.is_nan() || eps <= 0.0 {
                return fail("train.adam parameters need beta1, beta2 in [0, 1) and eps > 0".into());
            }
        }
        if self.thresholds.iter().any(|t| t.is_nan()) {
            return fail("train.thresholds must be numbers".into());
        }
        Ok(())
    }
}

/// Optimizer state for a parameter vector of fixed length.
#[derive(Debug, Clone)]
pub enum OptimizerState<T> {
    Sgd,
    Adam {
        beta1: T,
        beta2: T,
        eps: T,
        first: Vec<T>,
        second: Vec<T>,
        step: i32,
    },
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam { beta1, beta2, eps } => OptimizerState::Adam {
                beta1: T::lit(beta1),
                beta2: T::lit(beta2),
                eps: T::lit(eps),
                first: vec![T::zero(); len],
                second: vec![T::zero(); len],
                step: 0,
            },
        }
    }

    /// Applies one update with an already batch-averaged gradient.
    pub fn step(&mut self, theta: &mut [T], grad: &[T], learning_rate: T) -> Result<()> {
        if grad.len() != theta.len() {
            return Err(Error::shape(theta.len(), grad.len()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("parameter gradient"));
        }
        match self {
            OptimizerState::Sgd => {
                for (p, &g) in theta.iter_mut().zip(grad) {
                    *p -= learning_rate * g;
                }
            }
            OptimizerState::Adam {
                beta1,
                beta2,
                eps,
                first,
                second,
                step,
            } => {
                if first.len() != theta.len() {
                    return Err(Error::shape(first.len(), theta.len()));
                }
                *step += 1;
                let (b1, b2) = (*beta1, *beta2);
                let correct1 = T::one() - b1.powi(*step);
                let correct2 = T::one() - b2.powi(*step);
                for (((p, &g), m), v) in theta.iter_mut().zip(grad).zip(first.iter_mut()).zip(second.iter_mut()) {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let m_hat = *m / correct1;
                    let v_hat = *v / correct2;
                    *p -= learning_rate * m_hat / (v_hat.sqrt() + *eps);
                }
            }
        }
        Ok(())
    }
}

/// Name of the metric that thresholds refer to for a modality.
pub fn threshold_metric(modality: Modality) -> &'static str {
    match modality {
        Modality::Audio => "si_snr",
        Modality::Image | Modality::Synthetic => "psnr",
    }
}

fn threshold_value<T: Scalar>(modality: Modality, record: &MetricRecord<T>) -> Option<T> {
    match modality {
        Modality::Audio => record.si_snr,
        Modality::Image | Modality::Synthetic => Some(record.psnr),
    }
}

/// Metrics of `predictions` against the dataset targets. Image predictions
/// are clamped to the valid intensity range first.
pub fn score_predictions<T: Scalar>(
    dataset: &SignalDataset<T>,
    predictions: ArrayView2<'_, T>,
) -> Result<MetricRecord<T>> {
    let target = dataset.attrs();
    match *dataset.shape() {
        ShapeMeta::Image { height, width, .. } => {
            let clamped = predictions.mapv(|v| v.max(T::zero()).min(T::one()));
            let mse = metrics::mse(clamped.view(), target)?;
            let ssim = if height >= SSIM_WINDOW && width >= SSIM_WINDOW {
                Some(metrics::ssim_channels(clamped.view(), target, height, width)?)
            } else {
                None
            };
            Ok(MetricRecord {
                mse,
                psnr: metrics::psnr_from_mse(mse),
                ssim,
                si_snr: None,
            })
        }
        ShapeMeta::Audio { .. } => {
            let mse = metrics::mse(predictions, target)?;
            let si_snr = match metrics::si_snr_columns(predictions, target) {
                Ok(v) => Some(v),
                Err(Error::ConstantTarget | Error::Shape { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(MetricRecord {
                mse,
                psnr: metrics::psnr_from_mse(mse),
                ssim: None,
                si_snr,
            })
        }
        ShapeMeta::Synthetic { .. } => {
            let mse = metrics::mse(predictions, target)?;
            Ok(MetricRecord {
                mse,
                psnr: metrics::psnr_from_mse(mse),
                ssim: None,
                si_snr: None,
            })
        }
    }
}

/// Forward pass over the whole dataset followed by [`score_predictions`].
pub fn evaluate<T: Scalar>(
    params: &MlpParams<T>,
    config: &NetworkConfig,
    dataset: &SignalDataset<T>,
    par: &Parallelism,
) -> Result<MetricRecord<T>> {
    let predictions = network::predict(params, config, dataset.coords(), par)?;
    score_predictions(dataset, predictions.view())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Number of updates applied before this evaluation.
    pub iteration: usize,
    pub wall_ms: f64,
    pub metrics: MetricRecord<f64>,
    pub batch_size: usize,
    pub r_ntk: f64,
    pub r_err: f64,
    pub score_recomputes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCrossing {
    pub metric: &'static str,
    pub target: f64,
    pub iteration: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EvalRecord>,
    pub crossings: Vec<ThresholdCrossing>,
}

impl TrainLog {
    /// First evaluated iteration whose threshold metric reaches `target`.
    pub fn first_reaching(&self, modality: Modality, target: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| threshold_value(modality, &r.metrics).is_some_and(|v| v >= target))
            .map(|r| r.iteration)
    }

    pub fn crossing(&self, target: f64) -> Option<&ThresholdCrossing> {
        self.crossings.iter().find(|c| c.target == target)
    }

    /// Deterministic per-evaluation columns; wall-clock lives in [`Self::timing_csv`].
    pub fn metrics_csv(&self) -> String {
        let mut out =
            format!("{METRICS_HEADER}\niteration,psnr,ssim,si_snr,mse,batch_size,r_ntk,r_err,n_score_recomputes\n");
        let opt = |v: Option<f64>| v.map(format_value).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.iteration,
                format_value(r.metrics.psnr),
                opt(r.metrics.ssim),
                opt(r.metrics.si_snr),
                format_value(r.metrics.mse),
                r.batch_size,
                format_value(r.r_ntk),
                format_value(r.r_err),
                r.score_recomputes
            );
        }
        out
    }

    pub fn thresholds_csv(&self) -> String {
        let mut out = format!("{THRESHOLDS_HEADER}\nmetric,target,iteration,wall_ms\n");
        for c in &self.crossings {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c.metric,
                format_value(c.target),
                c.iteration,
                format_value(c.wall_ms)
            );
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = format!("{TIMING_HEADER}\niteration,wall_ms\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{}", r.iteration, format_value(r.wall_ms));
        }
        out
    }
}

/// Receives full-dataset predictions on snapshot iterations.
pub trait TrainObserver<T> {
    fn snapshot(&mut self, iteration: usize, predictions: ArrayView2<'_, T>) -> Result<()>;
}

impl<T> TrainObserver<T> for () {
    fn snapshot(&mut self, _: usize, _: ArrayView2<'_, T>) -> Result<()> {
        Ok(())
    }
}

/// Everything a run needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub network: NetworkConfig,
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
}

/// Fits a freshly initialized network.
pub fn train<T: Scalar>(
    dataset: &SignalDataset<T>,
    settings: &RunSettings,
    par: &Parallelism,
) -> Result<(MlpParams<T>, TrainLog)> {
    let initial = MlpParams::init(&settings.network)?;
    train_from(dataset, settings, initial, par, &mut ())
}

fn diverged<T: Scalar>(iteration: usize, params: &MlpParams<T>) -> Error {
    Error::Diverged {
        iteration,
        theta_norm: params.norm().to_f64_lossy(),
    }
}

/// Fits starting from `params`, reporting snapshots to `observer`.
pub fn train_from<T: Scalar>(
    dataset: &SignalDataset<T>,
    settings: &RunSettings,
    mut params: MlpParams<T>,
    par: &Parallelism,
    observer: &mut dyn TrainObserver<T>,
) -> Result<(MlpParams<T>, TrainLog)> {
    let RunSettings {
        network: net,
        sampler: sampler_config,
        train: config,
    } = settings;
    net.validate()?;
    config.validate()?;
    let len = dataset.len();
    sampler_config.validate(len)?;
    if dataset.in_dim() != net.in_dim || dataset.out_dim() != net.out_dim {
        return Err(Error::shape(
            format!("dataset {}->{}", net.in_dim, net.out_dim),
            format!("{}->{}", dataset.in_dim(), dataset.out_dim()),
        ));
    }

    let modality = dataset.modality();
    let metric_name = threshold_metric(modality);
    let coords = dataset.coords();
    let attrs = dataset.attrs();
    let learning_rate = T::lit(config.learning_rate);
    let mut optimizer = OptimizerState::new(config.optimizer, params.len());
    let mut selection = SelectionState::<T>::new();
    let mut log = TrainLog::default();
    let mut pending: Vec<f64> = config.thresholds.clone();
    let clock = Instant::now();

    for t in 0..config.iterations {
        let outputs = network::predict(&params, net, coords, par)?;
        let g = network::loss_grad_output(outputs.view(), attrs)?;
        if !network::loss(outputs.view(), attrs)?.is_finite() {
            return Err(diverged(t, &params));
        }

        let batch = sampler::batch_size_at(sampler_config, t, config.iterations, len);
        let chosen = selection.select(sampler_config, t, g.view(), batch, || {
            ntk::nint_scores_factorized(&params, net, coords, g.view(), par)
        })?;

        if t % config.eval_every == 0 {
            let record = score_predictions(dataset, outputs.view())?.to_f64();
            let wall_ms = clock.elapsed().as_secs_f64() * 1e3;
            if let Some(value) = threshold_value(modality, &record) {
                pending.retain(|&target| {
                    if value >= target {
                        log.crossings.push(ThresholdCrossing {
                            metric: metric_name,
                            target,
                            iteration: t,
                            wall_ms,
                        });
                        false
                    } else {
                        true
                    }
                });
            }
            let (r_ntk, r_err) = sampler::logged_ratios(sampler_config, t);
            log.records.push(EvalRecord {
                iteration: t,
                wall_ms,
                metrics: record,
                batch_size: chosen.len(),
                r_ntk,
                r_err,
                score_recomputes: selection.score_calls(),
            });
        }
        if config.snapshot_every > 0 && t % config.snapshot_every == 0 {
            observer.snapshot(t, outputs.view())?;
        }

        let grad = if chosen.len() == len {
            network::param_grad(&params, net, coords, attrs, par)?
        } else {
            let x: Array2<T> = coords.select(Axis(0), &chosen);
            let y: Array2<T> = attrs.select(Axis(0), &chosen);
            network::param_grad(&params, net, x.view(), y.view(), par)?
        };
        if optimizer.step(params.theta_mut(), &grad, learning_rate).is_err() {
            return Err(diverged(t, &params));
        }
    }
    if params.theta().iter().any(|p| !p.is_finite()) {
        return Err(diverged(config.iterations, &params));
    }
    Ok((params, log))
}
