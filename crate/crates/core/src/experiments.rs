//! Experiment drivers behind the command line: case configs, dataset
//! generation, loss comparisons, metric sweeps, loss hyperplanes, run
//! statistics and the spectral probe.
//!
//! Output layout under `--out`:
//!
//! ```text
//! config.json                  resolved config
//! dataset.bin / dataset.json   windowed pairs
//! trajectories/sim_NNN.*       raw simulations
//! runs/<loss>/run_NN/          curves, checkpoint, manifest
//! summary.json / summary.csv   comparison statistics
//! probe/<loss>/, probe/summary.json
//! metric_sweep.csv
//! hyperplane.csv / hyperplane.json
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{self, LossKind};
use crate::model::{self, ModelConfig, Network, OptimizerSpec, Params};
use crate::rng::derive_seed;
use crate::sim_ks::{ks_simulate, KsConfig};
use crate::sim_waves::{wave_simulate, WaveConfig};
use crate::spectral::Field;
use crate::trainer::{self, ProbeSpec, ProbeTrace, RunSpec, StoredRun, TrainRecord, ValidationMetric};
use crate::trajectory::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Ks1d,
    Ks2d,
    Waves,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::Ks1d, Case::Ks2d, Case::Waves];

    pub fn name(self) -> &'static str {
        match self {
            Case::Ks1d => "ks1d",
            Case::Ks2d => "ks2d",
            Case::Waves => "waves",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Case::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("case", format!("unknown case `{s}` (ks1d, ks2d, waves)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: Case,
    /// Master seed; simulation and run seeds are derived from it.
    pub seed: u64,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub hyperplane: HyperplaneConfig,
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub simulations: usize,
    /// Frames between consecutive states of a window.
    pub shift: usize,
    /// Rescale pairs to zero mean and unit variance before training.
    pub standardize: bool,
    /// Generator for the KS cases; its seed is replaced per simulation.
    pub ks: KsConfig,
    /// Generator for the wave case; its seed is replaced per simulation.
    pub waves: WaveConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub losses: Vec<LossKind>,
    /// Runs per loss; run `r` uses split `r` and a seed derived from `r`.
    pub runs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub huber_delta: f64,
    pub optimizer: OptimizerSpec,
    pub model: ModelConfig,
    /// Validation SSP level for epochs-to-threshold.
    pub threshold_ssp: f64,
    /// Validation MSE level for epochs-to-threshold.
    pub threshold_mse: f64,
    /// Epochs over which the final score is taken; `max(10%, 5)` if unset.
    pub tail: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub losses: Vec<LossKind>,
    /// Position of the probed sample in the validation set of split 0.
    pub sample: usize,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperplaneConfig {
    /// Loss whose run-0 checkpoint is loaded when none is given.
    pub loss: LossKind,
    /// Flat indices into `head.weight`.
    pub weights: [usize; 2],
    /// Half-width of the grid around the trained values.
    pub span: f64,
    /// Grid points per axis; odd so the trained values lie on the grid.
    pub points: usize,
    /// Position of the sample in the validation set of split 0.
    pub sample: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub points: usize,
    /// Signal duration (s).
    pub duration: f64,
    /// Grid points per swept parameter.
    pub steps: usize,
    pub amplitude: [f64; 2],
    pub phase: [f64; 2],
    pub omega: [f64; 2],
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            points: 512,
            duration: 20.0,
            steps: 81,
            amplitude: [-1.0, 3.0],
            phase: [0.0, 2.0 * std::f64::consts::PI],
            omega: [10.0, 20.0],
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for `case`.
    pub fn defaults(case: Case) -> Self {
        let dims = if case == Case::Ks2d { 2 } else { 1 };
        let ks = KsConfig {
            nu: if case == Case::Ks1d { 0.25 } else { 1.0 },
            ..KsConfig::desk(dims)
        };
        let waves = WaveConfig::desk();
        let n = match case {
            Case::Waves => waves.n,
            _ => ks.observed_n(),
        };
        let (simulations, shift, runs, epochs) = match case {
            Case::Ks1d => (20, 1, 5, 100),
            Case::Ks2d => (4, 1, 3, 20),
            Case::Waves => (20, 13, 5, 100),
        };
        ExperimentConfig {
            case,
            seed: 0,
            data: DataConfig {
                simulations,
                shift,
                standardize: false,
                ks,
                waves,
            },
            train: TrainConfig {
                losses: vec![LossKind::Ssp, LossKind::Mae, LossKind::Mse],
                runs,
                epochs,
                batch_size: 32,
                train_fraction: 0.8,
                huber_delta: 1.0,
                optimizer: OptimizerSpec::default(),
                model: ModelConfig::desk(dims, n),
                threshold_ssp: match case {
                    Case::Ks1d => 0.02,
                    Case::Ks2d => 0.01,
                    Case::Waves => 0.03,
                },
                threshold_mse: 0.01,
                tail: None,
            },
            probe: ProbeConfig {
                losses: vec![LossKind::Ssp, LossKind::Mse, LossKind::Mae],
                sample: 0,
                epochs: 2,
            },
            hyperplane: HyperplaneConfig {
                loss: LossKind::Mse,
                weights: [0, 1],
                span: 1.0,
                points: 41,
                sample: 0,
            },
            sweep: SweepConfig::default(),
        }
    }

    /// Stored grid points per axis.
    pub fn grid_n(&self) -> usize {
        match self.case {
            Case::Waves => self.data.waves.n,
            _ => self.data.ks.observed_n(),
        }
    }

    pub fn dims(&self) -> usize {
        match self.case {
            Case::Waves => 1,
            _ => self.data.ks.dims,
        }
    }

    pub fn tail(&self) -> usize {
        self.train.tail.unwrap_or_else(|| default_tail(self.train.epochs))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(field, msg));
        match self.case {
            Case::Waves => self.data.waves.validate()?,
            Case::Ks1d | Case::Ks2d => {
                self.data.ks.validate()?;
                let want = if self.case == Case::Ks2d { 2 } else { 1 };
                if self.data.ks.dims != want {
                    return bad("data.ks.dims", format!("case {} needs {want}", self.case));
                }
            }
        }
        if self.data.simulations == 0 {
            return bad("data.simulations", "must be >= 1".into());
        }
        if self.data.shift == 0 {
            return bad("data.shift", "must be >= 1".into());
        }
        let t = &self.train;
        t.model.validate()?;
        t.optimizer.validate()?;
        metrics::HuberConfig::new(t.huber_delta).map_err(|e| Error::config("train.huber_delta", e.to_string()))?;
        if t.model.dims != self.dims() || t.model.n != self.grid_n() {
            return bad(
                "train.model",
                format!(
                    "model grid {}^{} does not match data grid {}^{}",
                    t.model.n,
                    t.model.dims,
                    self.grid_n(),
                    self.dims()
                ),
            );
        }
        if t.losses.is_empty() {
            return bad("train.losses", "needs at least one loss".into());
        }
        if t.runs == 0 || t.epochs == 0 || t.batch_size == 0 {
            return bad("train", "runs, epochs and batch_size must be >= 1".into());
        }
        if !(t.train_fraction > 0.0 && t.train_fraction < 1.0) {
            return bad("train.train_fraction", format!("{} outside (0, 1)", t.train_fraction));
        }
        if t.tail.is_some_and(|k| k == 0 || k > t.epochs) {
            return bad("train.tail", format!("must lie in 1..={}", t.epochs));
        }
        if self.probe.epochs == 0 {
            return bad("probe.epochs", "must be >= 1".into());
        }
        let h = &self.hyperplane;
        if h.points % 2 == 0 {
            return bad("hyperplane.points", format!("{} must be odd", h.points));
        }
        if !(h.span > 0.0 && h.span.is_finite()) {
            return bad("hyperplane.span", "must be positive".into());
        }
        if h.weights[0] == h.weights[1] || h.weights.iter().any(|&w| w >= t.model.base_filters) {
            return bad(
                "hyperplane.weights",
                format!("need two distinct indices below {}", t.model.base_filters),
            );
        }
        let s = &self.sweep;
        if s.points < 2 || s.steps < 2 || !(s.duration > 0.0) {
            return bad("sweep", "points and steps must be >= 2, duration > 0".into());
        }
        Ok(())
    }
}

pub fn default_tail(epochs: usize) -> usize {
    epochs.div_ceil(10).max(5).min(epochs)
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    use serde_json::Value;
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            // a tagged section with a new `kind` replaces the old one whole
            let retag = o.get("kind").is_some() && o.get("kind") != b.get("kind");
            if retag {
                b.clear();
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses a TOML (or, with `json`, JSON) config and merges it over the
/// defaults of its case. `case` overrides the file's `case` key.
pub fn parse_config(text: &str, json: bool, case: Option<Case>) -> Result<ExperimentConfig> {
    let user: serde_json::Value = if json {
        serde_json::from_str(text).map_err(|e| Error::config("<json>", e.to_string()))?
    } else {
        let t: toml::Table = toml::from_str(text).map_err(|e| Error::config("<toml>", e.to_string()))?;
        serde_json::to_value(t)?
    };
    let file_case = match user.get("case") {
        Some(v) => Some(
            v.as_str()
                .ok_or_else(|| Error::config("case", "must be a string"))?
                .parse::<Case>()?,
        ),
        None => None,
    };
    let case = match (case, file_case) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::config("case", format!("--case {a} conflicts with `{b}` in the config")))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => Case::Ks1d,
    };
    let mut merged = serde_json::to_value(ExperimentConfig::defaults(case))?;
    merge(&mut merged, user);
    merged["case"] = serde_json::to_value(case)?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(merged).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a config file, or the case defaults when `path` is `None`.
pub fn load_config(path: Option<&Path>, case: Option<Case>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let json = p.extension().is_some_and(|e| e == "json");
            parse_config(&text, json, case)
        }
        None => parse_config("", false, case),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Simulation `i` of the configured case.
pub fn simulate(cfg: &ExperimentConfig, i: usize) -> Result<Trajectory> {
    let seed = derive_seed(cfg.seed, "simulation", i as u64);
    match cfg.case {
        Case::Waves => {
            let w = WaveConfig {
                seed,
                ..cfg.data.waves.clone()
            };
            wave_simulate(&w)?.crop(w.n)
        }
        _ => ks_simulate(&KsConfig {
            seed,
            ..cfg.data.ks.clone()
        }),
    }
}

pub fn simulate_all(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<Trajectory>> {
    pool(jobs)?.install(|| {
        (0..cfg.data.simulations)
            .into_par_iter()
            .map(|i| simulate(cfg, i))
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub dataset: PathBuf,
    pub pairs: usize,
    pub frames_per_simulation: Vec<usize>,
    pub payload_sha256: String,
}

/// Simulates the case, windows it and writes trajectories, the dataset and
/// the resolved config under `out`.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<GenerateReport> {
    cfg.validate()?;
    let trajectories = simulate_all(cfg, jobs)?;
    let tdir = out.join("trajectories");
    for (i, t) in trajectories.iter().enumerate() {
        t.save(&tdir.join(format!("sim_{i:03}.bin")))?;
    }
    let data = Dataset::from_trajectories(&trajectories, cfg.data.shift)?;
    let path = out.join("dataset.bin");
    data.save(&path)?;
    io::write_json(&out.join("config.json"), cfg)?;
    Ok(GenerateReport {
        dataset: path,
        pairs: data.len(),
        frames_per_simulation: trajectories.iter().map(Trajectory::len).collect(),
        payload_sha256: data.manifest().payload_sha256,
    })
}

/// Loads `out/dataset.bin`, generating it first if absent, and applies the
/// configured standardization.
pub fn prepare_dataset(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Dataset> {
    let path = out.join("dataset.bin");
    if !path.exists() {
        cmd_generate(cfg, out, jobs)?;
    }
    let mut data = Dataset::load(&path)?;
    if data.shift() != cfg.data.shift || data.dims() != vec![cfg.grid_n(); cfg.dims()].as_slice() {
        return Err(Error::config(
            "data",
            format!("{} was generated with a different grid or shift", path.display()),
        ));
    }
    if cfg.data.standardize {
        let s = data.statistics();
        data.standardize(s);
    }
    Ok(data)
}

pub fn split_plan(cfg: &ExperimentConfig, population: usize, run: usize) -> Result<SplitPlan> {
    dataset::split(population, cfg.seed, run as u64, cfg.train.train_fraction)
}

pub fn run_spec(cfg: &ExperimentConfig, loss: LossKind, run: usize) -> RunSpec {
    RunSpec {
        loss,
        huber_delta: cfg.train.huber_delta,
        optimizer: cfg.train.optimizer,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        split_id: run as u64,
        seed: derive_seed(cfg.seed, "run", run as u64),
        model: cfg.train.model.clone(),
        probe: None,
    }
}

pub fn run_dir(out: &Path, loss: LossKind, run: usize) -> PathBuf {
    out.join("runs").join(loss.name()).join(format!("run_{run:02}"))
}

/// Descriptive statistics; `std` is the sample standard deviation and the
/// quartiles interpolate linearly between order statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub iqr: f64,
}

/// Quantile `q` of ascending `sorted`, interpolating at position `q·(n−1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mean = s.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
    Some(Summary {
        n,
        mean,
        std,
        min: s[0],
        q1,
        median: quantile(&s, 0.5),
        q3,
        max: s[n - 1],
        iqr: q3 - q1,
    })
}

/// Curves of one run, from memory or from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCurves {
    pub loss: LossKind,
    pub split_id: u64,
    pub seed: u64,
    pub epochs: usize,
    pub split_fingerprint: String,
    pub val_ssp: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub diverged: Option<usize>,
}

impl From<&TrainRecord> for RunCurves {
    fn from(r: &TrainRecord) -> Self {
        RunCurves {
            loss: r.spec.loss,
            split_id: r.spec.split_id,
            seed: r.spec.seed,
            epochs: r.spec.epochs,
            split_fingerprint: r.split_fingerprint.clone(),
            val_ssp: r.val_ssp.clone(),
            val_mse: r.val_mse.clone(),
            diverged: r.diverged,
        }
    }
}

impl From<&StoredRun> for RunCurves {
    fn from(r: &StoredRun) -> Self {
        RunCurves {
            loss: r.manifest.spec.loss,
            split_id: r.manifest.spec.split_id,
            seed: r.manifest.spec.seed,
            epochs: r.manifest.spec.epochs,
            split_fingerprint: r.manifest.split_fingerprint.clone(),
            val_ssp: r.val_ssp.clone(),
            val_mse: r.val_mse.clone(),
            diverged: r.manifest.diverged,
        }
    }
}

impl RunCurves {
    pub fn curve(&self, metric: ValidationMetric) -> &[f64] {
        match metric {
            ValidationMetric::Ssp => &self.val_ssp,
            ValidationMetric::Mse => &self.val_mse,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub metric: ValidationMetric,
    pub threshold: f64,
    pub reached: usize,
    /// Runs that never reach the threshold count as `epochs + 1`.
    pub epochs: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub loss: LossKind,
    pub runs: usize,
    pub diverged: usize,
    pub final_ssp: Option<Summary>,
    pub final_mse: Option<Summary>,
    pub to_threshold: Vec<ThresholdSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub tail: usize,
    pub losses: Vec<LossSummary>,
}

impl ComparisonSummary {
    pub fn get(&self, loss: LossKind) -> Option<&LossSummary> {
        self.losses.iter().find(|l| l.loss == loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = io::csv_row([
            "loss", "runs", "diverged", "metric", "statistic", "n", "mean", "std", "min", "q1", "median", "q3",
            "max", "iqr",
        ]);
        let mut row = |l: &LossSummary, metric: &str, stat: &str, s: &Option<Summary>| {
            let mut cells = vec![
                l.loss.name().to_string(),
                l.runs.to_string(),
                l.diverged.to_string(),
                metric.to_string(),
                stat.to_string(),
            ];
            match s {
                Some(s) => cells.extend(
                    [s.n as f64, s.mean, s.std, s.min, s.q1, s.median, s.q3, s.max, s.iqr]
                        .iter()
                        .enumerate()
                        .map(|(i, v)| if i == 0 { s.n.to_string() } else { v.to_string() }),
                ),
                None => cells.extend(std::iter::repeat_n(String::new(), 9)),
            }
            out += &io::csv_row(cells);
        };
        for l in &self.losses {
            row(l, "SSP", "final", &l.final_ssp);
            row(l, "MSE", "final", &l.final_mse);
            for t in &l.to_threshold {
                row(l, t.metric.name(), &format!("epochs_below_{}", t.threshold), &t.epochs);
            }
        }
        out
    }
}

/// Final scores (minimum over the last `tail` epochs) and epochs to the
/// thresholds, per loss in [`LossKind`] order. Diverged runs are
/// counted but excluded from the statistics.
pub fn summarize_runs(runs: &[RunCurves], tail: usize, threshold_ssp: f64, threshold_mse: f64) -> Result<ComparisonSummary> {
    let mut order: Vec<LossKind> = runs.iter().map(|r| r.loss).collect();
    order.sort();
    order.dedup();
    let mut losses = Vec::new();
    for loss in order {
        let all: Vec<&RunCurves> = runs.iter().filter(|r| r.loss == loss).collect();
        let ok: Vec<&RunCurves> = all.iter().copied().filter(|r| r.diverged.is_none()).collect();
        let finals = |m: ValidationMetric| -> Result<Option<Summary>> {
            let v = ok
                .iter()
                .map(|r| trainer::final_score(r.curve(m), tail.min(r.curve(m).len())))
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(&v))
        };
        let to_threshold = [(ValidationMetric::Ssp, threshold_ssp), (ValidationMetric::Mse, threshold_mse)]
            .into_iter()
            .map(|(m, thr)| {
                let hits: Vec<Option<usize>> = ok.iter().map(|r| trainer::epochs_to_threshold(r.curve(m), thr)).collect();
                let values: Vec<f64> = hits
                    .iter()
                    .zip(&ok)
                    .map(|(h, r)| h.unwrap_or(r.epochs + 1) as f64)
                    .collect();
                ThresholdSummary {
                    metric: m,
                    threshold: thr,
                    reached: hits.iter().filter(|h| h.is_some()).count(),
                    epochs: summarize(&values),
                }
            })
            .collect();
        losses.push(LossSummary {
            loss,
            runs: all.len(),
            diverged: all.len() - ok.len(),
            final_ssp: finals(ValidationMetric::Ssp)?,
            final_mse: finals(ValidationMetric::Mse)?,
            to_threshold,
        });
    }
    Ok(ComparisonSummary { tail, losses })
}

pub struct CompareReport {
    pub summary: ComparisonSummary,
    pub records: Vec<TrainRecord>,
}

impl CompareReport {
    pub fn diverged(&self) -> usize {
        self.records.iter().filter(|r| r.diverged.is_some()).count()
    }
}

/// Trains every configured loss on the same splits and writes per-run
/// outputs plus `summary.json` and `summary.csv`.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<CompareReport> {
    cfg.validate()?;
    let data = prepare_dataset(cfg, out, jobs)?;
    let plans = (0..cfg.train.runs)
        .map(|r| split_plan(cfg, data.len(), r))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(LossKind, usize)> = cfg
        .train
        .losses
        .iter()
        .flat_map(|&l| (0..cfg.train.runs).map(move |r| (l, r)))
        .collect();
    let records: Vec<TrainRecord> = pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(loss, r)| {
                let record = trainer::train(&data, &plans[r], &run_spec(cfg, loss, r))?;
                trainer::write_record(&run_dir(out, loss, r), &record)?;
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let curves: Vec<RunCurves> = records.iter().map(RunCurves::from).collect();
    let summary = summarize_runs(&curves, cfg.tail(), cfg.train.threshold_ssp, cfg.train.threshold_mse)?;
    io::write_json(&out.join("config.json"), cfg)?;
    io::write_json(&out.join("summary.json"), &summary)?;
    io::write_atomic(&out.join("summary.csv"), summary.to_csv().as_bytes())?;
    Ok(CompareReport { summary, records })
}

/// Finds run directories (those holding `run.json`) under `paths`.
pub fn find_runs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    fn walk(p: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
        if p.join("run.json").is_file() {
            found.push(p.to_path_buf());
            return Ok(());
        }
        if p.is_dir() {
            let mut entries = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(p, e)))
                .collect::<Result<Vec<_>>>()?;
            entries.sort();
            for e in entries {
                walk(&e, found)?;
            }
        }
        Ok(())
    }
    let mut found = Vec::new();
    for p in paths {
        walk(p, &mut found)?;
    }
    Ok(found)
}

/// Recomputes the comparison statistics from run directories on disk.
pub fn cmd_stats(paths: &[PathBuf], tail: Option<usize>, threshold_ssp: f64, threshold_mse: f64) -> Result<ComparisonSummary> {
    let dirs = find_runs(paths)?;
    if dirs.is_empty() {
        return Err(Error::InvalidArgument("no run directories found".into()));
    }
    let mut runs = dirs
        .iter()
        .map(|d| trainer::read_record(d).map(|s| RunCurves::from(&s)))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| (r.loss, r.split_id));
    let epochs = runs.iter().map(|r| r.epochs).max().unwrap_or(1);
    summarize_runs(&runs, tail.unwrap_or_else(|| default_tail(epochs)), threshold_ssp, threshold_mse)
}

/// `A·0.5·sin(0.5t + φ)·(0.5·cos((2 + 3t)·t) + 0.5·cos(ωt))`.
pub fn sweep_signal(t: f64, amplitude: f64, phase: f64, omega: f64) -> f64 {
    amplitude * 0.5 * (0.5 * t + phase).sin() * (0.5 * ((2.0 + 3.0 * t) * t).cos() + 0.5 * (omega * t).cos())
}

pub const SWEEP_BASELINE: (f64, f64, f64) = (1.0, std::f64::consts::PI, 15.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub mse: f64,
    pub mae: f64,
    pub ssp: f64,
}

/// Scores variants of the baseline signal against it, varying amplitude,
/// phase and frequency one at a time.
pub fn metric_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let (a0, p0, w0) = SWEEP_BASELINE;
    let signal = |a: f64, p: f64, w: f64| Field::sample_line(cfg.points, cfg.duration, |t| sweep_signal(t, a, p, w));
    let base = signal(a0, p0, w0)?;
    let grid = |r: [f64; 2]| -> Vec<f64> {
        (0..cfg.steps)
            .map(|k| r[0] + (r[1] - r[0]) * k as f64 / (cfg.steps - 1) as f64)
            .collect()
    };
    let mut rows = Vec::new();
    for (name, range) in [("amplitude", cfg.amplitude), ("phase", cfg.phase), ("omega", cfg.omega)] {
        for v in grid(range) {
            let f = match name {
                "amplitude" => signal(v, p0, w0)?,
                "phase" => signal(a0, v, w0)?,
                _ => signal(a0, p0, v)?,
            };
            rows.push(SweepRow {
                parameter: name.into(),
                value: v,
                mse: metrics::mse(&f, &base)?.value,
                mae: metrics::mae(&f, &base)?.value,
                ssp: metrics::ssp_value(&f, &base)?,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_metric_sweep(cfg: &SweepConfig, out: &Path) -> Result<Vec<SweepRow>> {
    let rows = metric_sweep(cfg)?;
    let mut csv = io::csv_row(["parameter", "value", "MSE", "MAE", "SSP"]);
    for r in &rows {
        csv += &io::csv_row([
            r.parameter.clone(),
            r.value.to_string(),
            r.mse.to_string(),
            r.mae.to_string(),
            r.ssp.to_string(),
        ]);
    }
    io::write_atomic(&out.join("metric_sweep.csv"), csv.as_bytes())?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneGrid {
    pub weights: [usize; 2],
    /// Trained values of the two weights.
    pub center: [f64; 2],
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Row-major, `axis1` outer.
    pub ssp: Vec<f64>,
    pub mse: Vec<f64>,
    pub mae: Vec<f64>,
}

impl HyperplaneGrid {
    pub fn at(&self, i: usize, j: usize) -> (f64, f64, f64) {
        let k = i * self.axis2.len() + j;
        (self.ssp[k], self.mse[k], self.mae[k])
    }
}

/// Evaluates SSP, MSE and MAE of one sample while two entries of
/// `head.weight` move over a square grid centred on their current values.
pub fn loss_hyperplane(
    net: &Network,
    params: &Params,
    input: &[f64],
    target: &Field,
    weights: [usize; 2],
    span: f64,
    points: usize,
) -> Result<HyperplaneGrid> {
    let head = params
        .get("head.weight")
        .ok_or_else(|| Error::InvalidArgument("checkpoint has no head.weight".into()))?;
    if weights.iter().any(|&w| w >= head.data.len()) {
        return Err(Error::InvalidArgument(format!(
            "weights {weights:?} outside head.weight of {} entries",
            head.data.len()
        )));
    }
    let center = [head.data[weights[0]], head.data[weights[1]]];
    if points == 0 {
        return Err(Error::InvalidArgument("hyperplane grid needs at least one point".into()));
    }
    let axis = |c: f64| -> Vec<f64> {
        if points == 1 {
            return vec![c];
        }
        (0..points)
            .map(|k| c + span * (2.0 * k as f64 / (points - 1) as f64 - 1.0))
            .collect()
    };
    let (axis1, axis2) = (axis(center[0]), axis(center[1]));
    let mut p = params.clone();
    let mut grid = HyperplaneGrid {
        weights,
        center,
        axis1: axis1.clone(),
        axis2: axis2.clone(),
        ssp: Vec::with_capacity(points * points),
        mse: Vec::with_capacity(points * points),
        mae: Vec::with_capacity(points * points),
    };
    for &a in &axis1 {
        for &b in &axis2 {
            let w = p.get_mut("head.weight").expect("checked above");
            w.data[weights[0]] = a;
            w.data[weights[1]] = b;
            let y = net.predict(&p, input, 1)?;
            let pred = Field::new(y, target.dims().to_vec(), target.extent().to_vec())?;
            grid.ssp.push(metrics::ssp_value(&pred, target)?);
            grid.mse.push(metrics::mse(&pred, target)?.value);
            grid.mae.push(metrics::mae(&pred, target)?.value);
        }
    }
    Ok(grid)
}

/// Loss hyperplane of a trained checkpoint on validation sample
/// `cfg.hyperplane.sample` of split 0. Writes `hyperplane.csv` and
/// `hyperplane.json`.
pub fn cmd_hyperplane(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>, jobs: usize) -> Result<HyperplaneGrid> {
    cfg.validate()?;
    let h = &cfg.hyperplane;
    let ckpt = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir(out, h.loss, 0).join("params.bin"));
    let (manifest, params) = model::load_checkpoint(&ckpt)?;
    let net = Network::new(&manifest.config)?;
    let data = prepare_dataset(cfg, out, jobs)?;
    let plan = split_plan(cfg, data.len(), 0)?;
    let &i = plan.validation.get(h.sample).ok_or_else(|| {
        Error::config(
            "hyperplane.sample",
            format!("outside {} validation samples", plan.validation.len()),
        )
    })?;
    let input: Vec<f64> = data.input(i).iter().map(|&v| v as f64).collect();
    let grid = loss_hyperplane(&net, &params, &input, &data.target_field(i)?, h.weights, h.span, h.points)?;
    let mut csv = io::csv_row(["theta1", "theta2", "SSP", "MSE", "MAE"]);
    for (a, &t1) in grid.axis1.iter().enumerate() {
        for (b, &t2) in grid.axis2.iter().enumerate() {
            let (s, m, e) = grid.at(a, b);
            csv += &io::csv_row([t1, t2, s, m, e].map(|v| v.to_string()));
        }
    }
    io::write_atomic(&out.join("hyperplane.csv"), csv.as_bytes())?;
    io::write_json(
        &out.join("hyperplane.json"),
        &serde_json::json!({
            "checkpoint": ckpt,
            "sample": i,
            "weights": grid.weights,
            "center": grid.center,
            "span": h.span,
            "points": h.points,
        }),
    )?;
    Ok(grid)
}

/// Shape of a probe trace relative to the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSignature {
    pub loss: LossKind,
    pub truth_integral: f64,
    pub updates: usize,
    pub updates_per_epoch: usize,
    /// `(integral − truth)/truth` of the untrained model.
    pub initial_gap: f64,
    /// Largest relative gap over all updates.
    pub max_gap: f64,
    /// Relative gap after the last probed update.
    pub final_gap: f64,
    /// First update whose integral exceeds the truth.
    pub first_overshoot: Option<usize>,
}

impl ProbeSignature {
    pub fn from_trace(loss: LossKind, t: &ProbeTrace) -> Self {
        let gap = |v: f64| (v - t.truth_integral) / t.truth_integral;
        let gaps: Vec<f64> = t.integrals.iter().map(|&v| gap(v)).collect();
        ProbeSignature {
            loss,
            truth_integral: t.truth_integral,
            updates: gaps.len() - 1,
            updates_per_epoch: t.updates_per_epoch,
            initial_gap: gaps[0],
            max_gap: gaps[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max),
            final_gap: gaps[gaps.len() - 1],
            first_overshoot: gaps.iter().skip(1).position(|&g| g > 0.0).map(|u| u + 1),
        }
    }

    /// Rises above the truth and ends closer to it than at the peak.
    pub fn overshoots_then_converges(&self) -> bool {
        self.first_overshoot.is_some() && self.final_gap.abs() < self.max_gap
    }

    /// Stays below the truth for every probed update.
    pub fn stays_below(&self) -> bool {
        self.first_overshoot.is_none()
    }
}

pub struct ProbeReport {
    pub signatures: Vec<ProbeSignature>,
    pub records: Vec<TrainRecord>,
}

/// Trains each probe loss for the probe horizon on split 0, recording the
/// prediction spectrum of one validation sample after every update.
pub fn cmd_probe(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<ProbeReport> {
    cfg.validate()?;
    let data = prepare_dataset(cfg, out, jobs)?;
    let plan = split_plan(cfg, data.len(), 0)?;
    let records: Vec<TrainRecord> = pool(jobs)?.install(|| {
        cfg.probe
            .losses
            .par_iter()
            .map(|&loss| {
                let spec = RunSpec {
                    epochs: cfg.probe.epochs,
                    probe: Some(ProbeSpec {
                        sample: cfg.probe.sample,
                        epochs: cfg.probe.epochs,
                    }),
                    ..run_spec(cfg, loss, 0)
                };
                let record = trainer::train(&data, &plan, &spec)?;
                trainer::write_record(&out.join("probe").join(loss.name()), &record)?;
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let signatures: Vec<ProbeSignature> = records
        .iter()
        .map(|r| ProbeSignature::from_trace(r.spec.loss, r.probe.as_ref().expect("probe requested")))
        .collect();
    io::write_json(&out.join("probe").join("summary.json"), &signatures)?;
    Ok(ProbeReport { signatures, records })
}
