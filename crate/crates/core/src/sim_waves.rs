//! Broad-banded dispersive surface waves under linear wave theory.
//!
//! The initial surface is a superposition of harmonic components whose
//! amplitudes follow a normalized single-peaked spectrum. It is sampled on
//! the observed domain and padded with zeros to the right, then advanced in
//! time by rotating the phase of every grid wavenumber bin with the linear
//! dispersion relation `ω(k) = sqrt(g·k·tanh(k·d))`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::spectral::{self, Field, Spectrum};
use crate::trajectory::{Source, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    pub n_components: usize,
    /// rad/s
    pub omega_min: f64,
    /// rad/s
    pub omega_max: f64,
    /// Water depth (m).
    pub depth: f64,
    /// m/s²
    pub gravity: f64,
    /// Grid points of the observed domain.
    pub n: usize,
    /// Length of the observed domain (m).
    pub length: f64,
    /// Zeros appended to the right of the observed domain.
    pub pad_points: usize,
    /// Simulated time (s).
    pub duration: f64,
    /// Frame interval (s).
    pub dt: f64,
    /// Amplitude (m) of a component at the spectral peak.
    pub a0: f64,
    pub seed: u64,
}

impl Default for WaveConfig {
    fn default() -> Self {
        WaveConfig::full_scale()
    }
}

impl WaveConfig {
    pub fn full_scale() -> Self {
        WaveConfig {
            n_components: 651,
            omega_min: 0.3,
            omega_max: 2.0,
            depth: 500.0,
            gravity: 9.81,
            n: 1024,
            length: 4096.0,
            pad_points: 1024,
            duration: 250.0,
            dt: 0.1,
            a0: 1.0,
            seed: 0,
        }
    }

    /// 256 observed points on the same 4 m spacing. The shorter duration
    /// keeps the padding sufficient for the fastest group.
    pub fn desk() -> Self {
        WaveConfig {
            n: 256,
            length: 1024.0,
            pad_points: 256,
            duration: 60.0,
            ..WaveConfig::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("waves.{field}"), msg));
        if self.n_components == 0 {
            return bad("n_components", "must be >= 1".into());
        }
        if !(self.omega_min > 0.0 && self.omega_min < self.omega_max) {
            return bad(
                "omega_min",
                format!(
                    "need 0 < omega_min < omega_max, got {} and {}",
                    self.omega_min, self.omega_max
                ),
            );
        }
        if !(self.depth > 0.0) {
            return bad("depth", format!("must be > 0, got {}", self.depth));
        }
        if !(self.gravity > 0.0) {
            return bad("gravity", format!("must be > 0, got {}", self.gravity));
        }
        if self.n < spectral::MIN_AXIS_LEN || !self.total_points().is_power_of_two() {
            return bad(
                "n",
                format!(
                    "n + pad_points must be a power of two (got {} + {})",
                    self.n, self.pad_points
                ),
            );
        }
        if !(self.length > 0.0) {
            return bad("length", format!("must be > 0, got {}", self.length));
        }
        if !(self.dt > 0.0) {
            return bad("dt", format!("must be > 0, got {}", self.dt));
        }
        if !(self.duration >= 0.0) {
            return bad("duration", format!("must be >= 0, got {}", self.duration));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn total_points(&self) -> usize {
        self.n + self.pad_points
    }

    /// Length of the padded, simulated domain.
    pub fn total_length(&self) -> f64 {
        self.spacing() * self.total_points() as f64
    }

    pub fn frame_count(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    /// Fastest group speed in the band, `dω/dk` at `omega_min`.
    pub fn max_group_speed(&self) -> f64 {
        let k = dispersion_k_unchecked(self.omega_min, self);
        group_speed(k, self)
    }

    /// Smallest padding with `pad·Δx ≥ c_g,max·duration`.
    pub fn min_pad_points(&self) -> usize {
        (self.max_group_speed() * self.duration / self.spacing()).ceil() as usize
    }
}

/// Normalized spectrum `27(ω−ω_min)(ω−ω_max)² / (4(ω_max−ω_min)³)`,
/// zero outside `[ω_min, ω_max]`. Its peak value 1 sits at a third of the
/// band.
pub fn spectrum_amplitude(omega: f64, config: &WaveConfig) -> f64 {
    let (lo, hi) = (config.omega_min, config.omega_max);
    if !(lo..=hi).contains(&omega) {
        return 0.0;
    }
    27.0 * (omega - lo) * (omega - hi).powi(2) / (4.0 * (hi - lo).powi(3))
}

fn omega_of_k(k: f64, config: &WaveConfig) -> f64 {
    (config.gravity * k * (k * config.depth).tanh()).sqrt()
}

fn group_speed(k: f64, config: &WaveConfig) -> f64 {
    let (g, d) = (config.gravity, config.depth);
    let w = omega_of_k(k, config);
    let kd = k * d;
    g * ((kd).tanh() + kd / kd.cosh().powi(2)) / (2.0 * w)
}

/// `ω(k) = sqrt(g·k·tanh(k·d))` for `k > 0`.
pub fn dispersion_omega(k: f64, config: &WaveConfig) -> Result<f64> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!("wavenumber {k} must be > 0")));
    }
    Ok(omega_of_k(k, config))
}

/// Inverse of [`dispersion_omega`] by bisection.
pub fn dispersion_k(omega: f64, config: &WaveConfig) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidArgument(format!("frequency {omega} must be > 0")));
    }
    Ok(dispersion_k_unchecked(omega, config))
}

fn dispersion_k_unchecked(omega: f64, config: &WaveConfig) -> f64 {
    // tanh ≤ 1 puts the root above the deep-water value ω²/g, and
    // monotonicity of tanh bounds it from above.
    let lo0 = omega * omega / config.gravity;
    let mut lo = lo0;
    let mut hi = lo0 / (lo0 * config.depth).tanh();
    if omega_of_k(hi, config) < omega {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if omega_of_k(mid, config) < omega {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveComponent {
    /// m
    pub amplitude: f64,
    /// rad/m
    pub k: f64,
    /// rad/s
    pub omega: f64,
    pub phase: f64,
}

/// Uniformly spaced frequencies with spectrum-shaped amplitudes and seeded
/// random phases.
pub fn wave_components(config: &WaveConfig) -> Result<Vec<WaveComponent>> {
    config.validate()?;
    let mut rng = substream(config.seed, "wave-phases", 0);
    let n = config.n_components;
    let span = config.omega_max - config.omega_min;
    (0..n)
        .map(|i| {
            let omega = if n == 1 {
                config.omega_min + span / 3.0
            } else {
                config.omega_min + span * i as f64 / (n - 1) as f64
            };
            let phase = rng.gen_range(0.0..2.0 * PI);
            Ok(WaveComponent {
                amplitude: spectrum_amplitude(omega, config) * config.a0,
                k: dispersion_k(omega, config)?,
                omega,
                phase,
            })
        })
        .collect()
}

/// `Σ A_i cos(k_i x + φ_i)` on the observed points, zeros on the padding.
pub fn wave_initial_from(components: &[WaveComponent], config: &WaveConfig) -> Result<Field> {
    config.validate()?;
    let dx = config.spacing();
    let values = (0..config.total_points())
        .map(|j| {
            if j >= config.n {
                return 0.0;
            }
            let x = j as f64 * dx;
            components
                .iter()
                .map(|c| c.amplitude * (c.k * x + c.phase).cos())
                .sum()
        })
        .collect();
    Field::line(values, config.total_length())
}

pub fn wave_initial(config: &WaveConfig) -> Result<(Field, Vec<WaveComponent>)> {
    let components = wave_components(config)?;
    Ok((wave_initial_from(&components, config)?, components))
}

/// Advances a surface by phase rotation of its spectrum.
///
/// Positive-k bins rotate by `exp(−iωt)` and their conjugates by `exp(+iωt)`,
/// so every component travels to the right. The mean and the Nyquist bin
/// carry no direction of travel on a real grid and are left in place, which
/// keeps the evolution unitary and the result real.
#[derive(Clone, Debug)]
pub struct WavePropagator {
    initial: Field,
    spectrum: Spectrum,
    omega: Vec<f64>,
    sign: Vec<f64>,
}

impl WavePropagator {
    pub fn new(initial: &Field, config: &WaveConfig) -> Result<Self> {
        if initial.ndim() != 1 {
            return Err(Error::InvalidArgument("surface must be one-dimensional".into()));
        }
        let spectrum = spectral::forward(initial)?;
        let n = initial.len();
        let mut omega = Vec::with_capacity(n);
        let mut sign = Vec::with_capacity(n);
        for (j, &k) in spectrum.wavenumbers(0).iter().enumerate() {
            let nyquist = n % 2 == 0 && j == n / 2;
            if k == 0.0 || nyquist {
                omega.push(0.0);
                sign.push(0.0);
            } else {
                omega.push(omega_of_k(k.abs(), config));
                sign.push(k.signum());
            }
        }
        Ok(WavePropagator {
            initial: initial.clone(),
            spectrum,
            omega,
            sign,
        })
    }

    pub fn at(&self, t: f64) -> Result<Field> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time {t} must be >= 0")));
        }
        if t == 0.0 {
            return Ok(self.initial.clone().with_time(0.0));
        }
        let mut s = self.spectrum.clone();
        for ((c, &w), &sg) in s.coeffs_mut().iter_mut().zip(&self.omega).zip(&self.sign) {
            *c *= Complex64::from_polar(1.0, -sg * w * t);
        }
        Ok(spectral::inverse(&s)?.with_time(t))
    }
}

/// Surface at time `t` from the initial surface (the component table is only
/// needed by oracles, propagation works on grid bins).
pub fn wave_propagate(initial: &Field, config: &WaveConfig, t: f64) -> Result<Field> {
    WavePropagator::new(initial, config)?.at(t)
}

/// Frames `ζ(j·dt)` over the padded domain.
pub fn wave_simulate(config: &WaveConfig) -> Result<Trajectory> {
    let (initial, _) = wave_initial(config)?;
    let prop = WavePropagator::new(&initial, config)?;
    let frames = (0..config.frame_count())
        .map(|j| prop.at(j as f64 * config.dt))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(frames, config.dt, Source::Waves(config.clone()))
}
