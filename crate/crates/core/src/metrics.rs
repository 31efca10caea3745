//! Loss functions as value-plus-gradient evaluations.
//!
//! All five losses take a prediction and a target on the same grid and return
//! the loss value together with its gradient with respect to the prediction.
//! The surface similarity parameter (SSP) is
//!
//! ```text
//! SSP(p, t) = ‖F_p − F_t‖ / (‖F_p‖ + ‖F_t‖)
//! ```
//!
//! with `‖·‖` the order-0 Sobolev norm of [`crate::spectral`]. Its value is
//! evaluated in the Fourier domain; the gradient uses the equivalent
//! space-domain form, which Parseval makes exact.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, Field};

/// Floor applied to denominators in gradient formulas (never in values).
pub const GRAD_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub value: f64,
    /// ∂value/∂prediction, laid out like the prediction values.
    pub grad: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HuberConfig {
    pub delta: f64,
}

impl HuberConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("huber delta {delta} must be > 0")));
        }
        Ok(HuberConfig { delta })
    }
}

impl Default for HuberConfig {
    fn default() -> Self {
        HuberConfig { delta: 1.0 }
    }
}

/// Loss function names as they appear in configs and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "SSP")]
    Ssp,
    #[serde(rename = "MSE")]
    Mse,
    #[serde(rename = "MAE")]
    Mae,
    #[serde(rename = "RMSE")]
    Rmse,
    #[serde(rename = "Huber")]
    Huber,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Ssp,
        LossKind::Mse,
        LossKind::Mae,
        LossKind::Rmse,
        LossKind::Huber,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ssp => "SSP",
            LossKind::Mse => "MSE",
            LossKind::Mae => "MAE",
            LossKind::Rmse => "RMSE",
            LossKind::Huber => "Huber",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown loss `{s}`")))
    }
}

/// A loss function with its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Metric {
    Ssp,
    Mse,
    Mae,
    Rmse,
    Huber(HuberConfig),
}

impl Metric {
    pub fn from_kind(kind: LossKind, huber: HuberConfig) -> Self {
        match kind {
            LossKind::Ssp => Metric::Ssp,
            LossKind::Mse => Metric::Mse,
            LossKind::Mae => Metric::Mae,
            LossKind::Rmse => Metric::Rmse,
            LossKind::Huber => Metric::Huber(huber),
        }
    }

    pub fn kind(&self) -> LossKind {
        match self {
            Metric::Ssp => LossKind::Ssp,
            Metric::Mse => LossKind::Mse,
            Metric::Mae => LossKind::Mae,
            Metric::Rmse => LossKind::Rmse,
            Metric::Huber(_) => LossKind::Huber,
        }
    }

    pub fn eval(&self, pred: &Field, target: &Field) -> Result<LossEval> {
        match self {
            Metric::Ssp => ssp(pred, target),
            Metric::Mse => mse(pred, target),
            Metric::Mae => mae(pred, target),
            Metric::Rmse => rmse(pred, target),
            Metric::Huber(cfg) => huber(pred, target, *cfg),
        }
    }
}

/// Fourier-domain SSP value.
pub fn ssp_value(pred: &Field, target: &Field) -> Result<f64> {
    pred.same_grid(target)?;
    let fp = spectral::forward(pred)?;
    let ft = spectral::forward(target)?;
    let diff: Vec<Complex64> = fp
        .coeffs()
        .iter()
        .zip(ft.coeffs())
        .map(|(a, b)| a - b)
        .collect();
    let diff = spectral::Spectrum::from_parts(diff, pred.dims().to_vec(), pred.extent().to_vec())?;
    let num = spectral::sobolev_norm(&diff);
    let den = spectral::sobolev_norm(&fp) + spectral::sobolev_norm(&ft);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Space-domain SSP, `‖p − t‖₂ / (‖p‖₂ + ‖t‖₂)`.
pub fn ssp_space_domain(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        .sqrt();
    let den = spectral::l2(pred) + spectral::l2(target);
    if den == 0.0 {
        0.0
    } else {
        n / den
    }
}

fn ssp_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let n = spectral::l2(&d);
    if n == 0.0 {
        return vec![0.0; pred.len()];
    }
    let a = spectral::l2(pred);
    let b = spectral::l2(target);
    let s = (a + b).max(GRAD_EPS);
    let first = 1.0 / (n.max(GRAD_EPS) * s);
    let second = n / (s * s) / a.max(GRAD_EPS);
    d.iter()
        .zip(pred)
        .map(|(di, pi)| di * first - second * pi)
        .collect()
}

/// Surface similarity parameter on 1D or 2D fields.
pub fn ssp(pred: &Field, target: &Field) -> Result<LossEval> {
    let value = ssp_value(pred, target)?;
    Ok(LossEval {
        value,
        grad: ssp_grad(pred.values(), target.values()),
    })
}

/// [`ssp`] restricted to two-dimensional fields.
pub fn ssp_2d(pred: &Field, target: &Field) -> Result<LossEval> {
    if pred.ndim() != 2 || target.ndim() != 2 {
        return Err(Error::InvalidArgument("ssp_2d expects 2D fields".into()));
    }
    ssp(pred, target)
}

fn residuals(pred: &Field, target: &Field) -> Result<Vec<f64>> {
    pred.same_grid(target)?;
    Ok(pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| p - t)
        .collect())
}

pub fn mse(pred: &Field, target: &Field) -> Result<LossEval> {
    let r = residuals(pred, target)?;
    let n = r.len() as f64;
    Ok(LossEval {
        value: r.iter().map(|x| x * x).sum::<f64>() / n,
        grad: r.iter().map(|x| 2.0 * x / n).collect(),
    })
}

pub fn mae(pred: &Field, target: &Field) -> Result<LossEval> {
    let r = residuals(pred, target)?;
    let n = r.len() as f64;
    let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    Ok(LossEval {
        value: r.iter().map(|x| x.abs()).sum::<f64>() / n,
        grad: r.iter().map(|&x| sign(x) / n).collect(),
    })
}

/// `sqrt(mean((p − t)²))`.
pub fn rmse(pred: &Field, target: &Field) -> Result<LossEval> {
    let r = residuals(pred, target)?;
    let n = r.len() as f64;
    let value = (r.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let grad = if value == 0.0 {
        vec![0.0; r.len()]
    } else {
        r.iter().map(|x| x / (n * value)).collect()
    };
    Ok(LossEval { value, grad })
}

pub fn huber(pred: &Field, target: &Field, cfg: HuberConfig) -> Result<LossEval> {
    let r = residuals(pred, target)?;
    let n = r.len() as f64;
    let delta = cfg.delta;
    let mut value = 0.0;
    let grad = r
        .iter()
        .map(|&x| {
            if x.abs() <= delta {
                value += 0.5 * x * x;
                x / n
            } else {
                value += delta * (x.abs() - 0.5 * delta);
                delta * x.signum() / n
            }
        })
        .collect();
    Ok(LossEval {
        value: value / n,
        grad,
    })
}

/// Mean loss over a batch; the gradient concatenates per-sample gradients
/// scaled by 1/batch.
pub fn batch_loss(metric: &Metric, preds: &[Field], targets: &[Field]) -> Result<LossEval> {
    if preds.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let scale = 1.0 / preds.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(preds.iter().map(Field::len).sum());
    for (p, t) in preds.iter().zip(targets) {
        let e = metric.eval(p, t)?;
        value += e.value;
        grad.extend(e.grad.iter().map(|g| g * scale));
    }
    Ok(LossEval {
        value: value * scale,
        grad,
    })
}
