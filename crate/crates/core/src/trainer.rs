//! Training runs: seeded minibatch epochs, per-epoch validation in SSP and
//! MSE, divergence flagging and the per-update spectral probe.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{self, HuberConfig, LossKind, Metric};
use crate::model::{self, ModelConfig, Network, OptState, OptimizerSpec, Params};
use crate::rng::substream;
use crate::spectral::{self, Field};

/// Validation predictions are evaluated in chunks of this many samples.
const EVAL_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    /// Position of the probed sample in the validation set.
    pub sample: usize,
    /// Epochs during which every update is probed.
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub loss: LossKind,
    #[serde(default = "default_huber_delta")]
    pub huber_delta: f64,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub split_id: u64,
    /// Seeds weight initialization and minibatch order.
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
}

fn default_huber_delta() -> f64 {
    1.0
}

impl RunSpec {
    pub fn metric(&self) -> Result<Metric> {
        Ok(Metric::from_kind(self.loss, HuberConfig::new(self.huber_delta)?))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        self.metric()?;
        if self.batch_size == 0 {
            return Err(Error::config("run.batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Spectra of one validation sample's prediction after every update.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeTrace {
    pub sample: usize,
    /// Magnitude integral of the ground truth spectrum.
    pub truth_integral: f64,
    pub truth_spectrum: Vec<f64>,
    /// Entry 0 is the untrained model, entry `u` follows update `u`.
    pub integrals: Vec<f64>,
    pub spectra: Vec<Vec<f64>>,
    pub updates_per_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct TrainRecord {
    pub spec: RunSpec,
    pub split_fingerprint: String,
    pub train_loss: Vec<f64>,
    pub val_ssp: Vec<f64>,
    pub val_mse: Vec<f64>,
    /// Epoch (1-based) in which a non-finite loss or activation appeared.
    pub diverged: Option<usize>,
    pub wall_time: Duration,
    pub params: Params,
    pub probe: Option<ProbeTrace>,
}

impl TrainRecord {
    pub fn epochs_completed(&self) -> usize {
        self.val_ssp.len()
    }

    pub fn curve(&self, metric: ValidationMetric) -> &[f64] {
        match metric {
            ValidationMetric::Ssp => &self.val_ssp,
            ValidationMetric::Mse => &self.val_mse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationMetric {
    #[serde(rename = "SSP")]
    Ssp,
    #[serde(rename = "MSE")]
    Mse,
}

impl ValidationMetric {
    pub const ALL: [ValidationMetric; 2] = [ValidationMetric::Ssp, ValidationMetric::Mse];

    pub fn name(self) -> &'static str {
        match self {
            ValidationMetric::Ssp => "SSP",
            ValidationMetric::Mse => "MSE",
        }
    }
}

/// First epoch (1-based) whose value is below `threshold`.
pub fn epochs_to_threshold(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|&v| v < threshold).map(|i| i + 1)
}

/// Minimum over the last `tail` epochs.
pub fn final_score(curve: &[f64], tail: usize) -> Result<f64> {
    if tail == 0 || tail > curve.len() {
        return Err(Error::InvalidArgument(format!(
            "tail {tail} outside 1..={} epochs",
            curve.len()
        )));
    }
    Ok(curve[curve.len() - tail..].iter().copied().fold(f64::INFINITY, f64::min))
}

struct Context<'a> {
    data: &'a Dataset,
    net: Network,
    metric: Metric,
}

impl Context<'_> {
    fn inputs(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .flat_map(|&i| self.data.input(i).iter().map(|&v| v as f64))
            .collect()
    }

    fn targets(&self, idx: &[usize]) -> Result<Vec<Field>> {
        idx.iter().map(|&i| self.data.target_field(i)).collect()
    }

    fn fields(&self, values: &[f64]) -> Result<Vec<Field>> {
        values
            .chunks_exact(self.data.grid_size())
            .map(|c| Field::new(c.to_vec(), self.data.dims().to_vec(), self.data.extent().to_vec()))
            .collect()
    }

    /// One optimizer step on a minibatch; returns the batch loss.
    fn step(&self, params: &mut Params, opt: &mut OptState, grads: &mut Params, idx: &[usize]) -> Result<f64> {
        let (y, cache) = self.net.forward(params, &self.inputs(idx), idx.len())?;
        let preds = self.fields(&y)?;
        let eval = metrics::batch_loss(&self.metric, &preds, &self.targets(idx)?)?;
        if !eval.value.is_finite() || !eval.grad.iter().all(|g| g.is_finite()) {
            return Err(Error::Diverged { epoch: 0 });
        }
        grads.fill(0.0);
        self.net.backward_into(params, &cache, &eval.grad, grads)?;
        model::optimizer_step(params, grads, opt)?;
        if !params.is_finite() {
            return Err(Error::Diverged { epoch: 0 });
        }
        Ok(eval.value)
    }

    fn predict(&self, params: &Params, idx: &[usize]) -> Result<Vec<Field>> {
        let y = self.net.predict(params, &self.inputs(idx), idx.len())?;
        self.fields(&y)
    }

    /// Mean per-sample SSP and MSE over `idx`.
    fn validate(&self, params: &Params, idx: &[usize]) -> Result<(f64, f64)> {
        let mut ssp = 0.0;
        let mut mse = 0.0;
        for chunk in idx.chunks(EVAL_CHUNK) {
            let preds = self.predict(params, chunk)?;
            for (p, t) in preds.iter().zip(self.targets(chunk)?) {
                ssp += metrics::ssp_value(p, &t)?;
                mse += metrics::mse(p, &t)?.value;
            }
        }
        let n = idx.len() as f64;
        Ok((ssp / n, mse / n))
    }
}

fn magnitude_spectrum(f: &Field) -> Result<(Vec<f64>, f64)> {
    let s = spectral::forward(f)?;
    Ok((s.magnitudes(), s.magnitude_integral()))
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Diverged { .. } | Error::NonFiniteActivation { .. })
}

/// Trains a freshly initialized model on `plan.train` and validates on
/// `plan.validation` after every epoch. Divergence stops the run and is
/// reported through [`TrainRecord::diverged`], not as an error.
pub fn train(data: &Dataset, plan: &SplitPlan, spec: &RunSpec) -> Result<TrainRecord> {
    spec.validate()?;
    let started = Instant::now();
    let net = Network::new(&spec.model)?;
    if spec.model.positions() != data.grid_size() || spec.model.dims != data.dims().len() {
        return Err(Error::ShapeMismatch {
            left: vec![spec.model.n; spec.model.dims],
            right: data.dims().to_vec(),
        });
    }
    if plan.train.iter().chain(&plan.validation).any(|&i| i >= data.len()) {
        return Err(Error::InvalidArgument("split plan indexes beyond the dataset".into()));
    }
    if plan.validation.is_empty() || plan.train.is_empty() {
        return Err(Error::InvalidArgument("split plan has an empty side".into()));
    }
    let ctx = Context {
        data,
        net,
        metric: spec.metric()?,
    };
    let mut params = ctx.net.init(spec.seed);
    let mut grads = params.zeros_like();
    let mut opt = OptState::new(spec.optimizer, &params);
    let updates_per_epoch = plan.train.len().div_ceil(spec.batch_size);

    let mut probe = match &spec.probe {
        Some(p) => {
            let &i = plan.validation.get(p.sample).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "probe sample {} outside {} validation samples",
                    p.sample,
                    plan.validation.len()
                ))
            })?;
            let (truth_spectrum, truth_integral) = magnitude_spectrum(&data.target_field(i)?)?;
            let (s0, i0) = magnitude_spectrum(&ctx.predict(&params, &[i])?[0])?;
            Some((
                i,
                p.epochs,
                ProbeTrace {
                    sample: p.sample,
                    truth_integral,
                    truth_spectrum,
                    integrals: vec![i0],
                    spectra: vec![s0],
                    updates_per_epoch,
                },
            ))
        }
        None => None,
    };

    let mut record = TrainRecord {
        spec: spec.clone(),
        split_fingerprint: plan.fingerprint(),
        train_loss: Vec::new(),
        val_ssp: Vec::new(),
        val_mse: Vec::new(),
        diverged: None,
        wall_time: Duration::ZERO,
        params: params.clone(),
        probe: None,
    };

    let mut order = plan.train.clone();
    'epochs: for epoch in 1..=spec.epochs {
        order.copy_from_slice(&plan.train);
        order.shuffle(&mut substream(spec.seed, "shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        for batch in order.chunks(spec.batch_size) {
            match ctx.step(&mut params, &mut opt, &mut grads, batch) {
                Ok(v) => loss_sum += v * batch.len() as f64,
                Err(e) if is_divergence(&e) => {
                    record.diverged = Some(epoch);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            if let Some((i, horizon, trace)) = probe.as_mut() {
                if epoch <= *horizon {
                    let (s, v) = magnitude_spectrum(&ctx.predict(&params, &[*i])?[0])?;
                    trace.spectra.push(s);
                    trace.integrals.push(v);
                }
            }
        }
        let (ssp, mse) = match ctx.validate(&params, &plan.validation) {
            Ok(v) if v.0.is_finite() && v.1.is_finite() => v,
            Ok(_) => {
                record.diverged = Some(epoch);
                break;
            }
            Err(e) if is_divergence(&e) => {
                record.diverged = Some(epoch);
                break;
            }
            Err(e) => return Err(e),
        };
        record.train_loss.push(loss_sum / plan.train.len() as f64);
        record.val_ssp.push(ssp);
        record.val_mse.push(mse);
    }
    record.params = params;
    record.probe = probe.map(|p| p.2);
    record.wall_time = started.elapsed();
    Ok(record)
}

/// Run manifest written next to the curves; it carries no wall-clock data
/// so reruns produce identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub generator_version: String,
    pub spec: RunSpec,
    pub split_fingerprint: String,
    pub epochs_completed: usize,
    pub diverged: Option<usize>,
    pub checkpoint: String,
    pub probe: Option<ProbeManifest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeManifest {
    pub sample: usize,
    pub updates_per_epoch: usize,
    pub truth_integral: f64,
    pub records: usize,
    /// Magnitudes per record, `f32`, truth first.
    pub spectra_file: String,
    pub bins: usize,
}

pub fn curves_csv(record: &TrainRecord) -> String {
    let mut out = io::csv_row(["epoch", "train_loss", "val_ssp", "val_mse"]);
    for e in 0..record.epochs_completed() {
        out += &io::csv_row([
            (e + 1).to_string(),
            record.train_loss[e].to_string(),
            record.val_ssp[e].to_string(),
            record.val_mse[e].to_string(),
        ]);
    }
    out
}

pub fn probe_csv(trace: &ProbeTrace) -> String {
    let mut out = io::csv_row(["update_index", "spectral_integral"]);
    for (u, v) in trace.integrals.iter().enumerate() {
        out += &io::csv_row([u.to_string(), v.to_string()]);
    }
    out
}

/// Writes `run.csv`, `run.json`, the final checkpoint and, when probed,
/// `probe.csv` and `probe_spectra.bin` into `dir`.
pub fn write_record(dir: &Path, record: &TrainRecord) -> Result<()> {
    io::write_atomic(&dir.join("run.csv"), curves_csv(record).as_bytes())?;
    model::save_checkpoint(
        &dir.join("params.bin"),
        &record.spec.model,
        &record.params,
        record.spec.seed,
        record.epochs_completed(),
    )?;
    let probe = match &record.probe {
        Some(t) => {
            io::write_atomic(&dir.join("probe.csv"), probe_csv(t).as_bytes())?;
            let values = t
                .truth_spectrum
                .iter()
                .chain(t.spectra.iter().flatten())
                .map(|&v| v as f32);
            io::write_atomic(&dir.join("probe_spectra.bin"), &io::encode_f32(values))?;
            Some(ProbeManifest {
                sample: t.sample,
                updates_per_epoch: t.updates_per_epoch,
                truth_integral: t.truth_integral,
                records: t.spectra.len(),
                spectra_file: "probe_spectra.bin".into(),
                bins: t.truth_spectrum.len(),
            })
        }
        None => None,
    };
    io::write_json(
        &dir.join("run.json"),
        &RunManifest {
            format_version: io::FORMAT_VERSION,
            generator_version: io::generator_version(),
            spec: record.spec.clone(),
            split_fingerprint: record.split_fingerprint.clone(),
            epochs_completed: record.epochs_completed(),
            diverged: record.diverged,
            checkpoint: "params.bin".into(),
            probe,
        },
    )
}

/// Curves of a run written by [`write_record`].
#[derive(Clone, Debug, PartialEq)]
pub struct StoredRun {
    pub manifest: RunManifest,
    pub train_loss: Vec<f64>,
    pub val_ssp: Vec<f64>,
    pub val_mse: Vec<f64>,
}

impl StoredRun {
    pub fn curve(&self, metric: ValidationMetric) -> &[f64] {
        match metric {
            ValidationMetric::Ssp => &self.val_ssp,
            ValidationMetric::Mse => &self.val_mse,
        }
    }
}

pub fn read_record(dir: &Path) -> Result<StoredRun> {
    let manifest: RunManifest = io::read_json(&dir.join("run.json"))?;
    let path = dir.join("run.csv");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut run = StoredRun {
        manifest,
        train_loss: Vec::new(),
        val_ssp: Vec::new(),
        val_mse: Vec::new(),
    };
    for (line_no, line) in text.lines().enumerate().skip(1) {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::config(path.display().to_string(), format!("line {}: {e}", line_no + 1)))?;
        if cells.len() != 4 {
            return Err(Error::config(
                path.display().to_string(),
                format!("line {}: expected 4 columns", line_no + 1),
            ));
        }
        run.train_loss.push(cells[1]);
        run.val_ssp.push(cells[2]);
        run.val_mse.push(cells[3]);
    }
    Ok(run)
}
