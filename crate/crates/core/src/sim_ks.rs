//! Kuramoto–Sivashinsky trajectories on periodic 1D and 2D grids.
//!
//! Integrates `u_t = −Δu − νΔ²u − ½|∇u|²` with fourth-order central
//! differences (Δ² is the Δ stencil applied twice), Heun's predictor-corrector
//! in time, and a spectral low-pass after every step.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::spectral::{self, Field};
use crate::trajectory::{Source, Trajectory};

/// Number of superposed waves in the initial condition.
pub const INITIAL_WAVES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KsConfig {
    /// 1 or 2 spatial dimensions.
    pub dims: usize,
    /// Viscosity of the fourth-order term.
    pub nu: f64,
    /// Domain length per axis (m).
    pub length: f64,
    /// Grid points per axis.
    pub n: usize,
    /// Integration step (s).
    pub dt_sim: f64,
    /// Integration steps between saved frames.
    pub save_every: usize,
    /// Simulated time (s).
    pub duration: f64,
    /// Retained spectral modes as a fraction of the grid size.
    pub keep_fraction: f64,
    /// Saved frames keep every `observe_stride`-th point per axis of the
    /// state band-limited to the coarse grid.
    #[serde(default = "default_stride")]
    pub observe_stride: usize,
    pub seed: u64,
}

fn default_stride() -> usize {
    1
}

impl Default for KsConfig {
    fn default() -> Self {
        KsConfig::full_scale(1)
    }
}

impl KsConfig {
    /// 1024 points per axis, 80 (1D) or 60 (2D) retained modes.
    pub fn full_scale(dims: usize) -> Self {
        KsConfig {
            dims,
            nu: 1.0,
            length: 128.0,
            n: 1024,
            dt_sim: 0.01,
            save_every: 10,
            duration: 200.0,
            keep_fraction: if dims == 2 { 60.0 / 1024.0 } else { 80.0 / 1024.0 },
            observe_stride: 1,
            seed: 0,
        }
    }

    /// Laptop-sized run: 20 s on a grid just fine enough to integrate
    /// stably, with the full-scale filter's cutoff wavenumber (80 or 60
    /// modes on the 128 m domain), stored at half the resolution (128 points
    /// in 1D, 64² in 2D).
    pub fn desk(dims: usize) -> Self {
        let (n, keep) = if dims == 2 { (128, 60.0) } else { (256, 80.0) };
        KsConfig {
            n,
            duration: 20.0,
            keep_fraction: keep / n as f64,
            observe_stride: 2,
            ..KsConfig::full_scale(dims)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("ks.{field}"), msg));
        if self.dims != 1 && self.dims != 2 {
            return bad("dims", format!("must be 1 or 2, got {}", self.dims));
        }
        if !(self.nu > 0.0) {
            return bad("nu", format!("must be > 0, got {}", self.nu));
        }
        if !(self.length > 0.0) {
            return bad("length", format!("must be > 0, got {}", self.length));
        }
        if !self.n.is_power_of_two() || self.n < spectral::MIN_AXIS_LEN {
            return bad("n", format!("must be a power of two >= 4, got {}", self.n));
        }
        if !(self.dt_sim > 0.0) {
            return bad("dt_sim", format!("must be > 0, got {}", self.dt_sim));
        }
        if self.save_every == 0 {
            return bad("save_every", "must be >= 1".into());
        }
        if !(self.duration >= 0.0) {
            return bad("duration", format!("must be >= 0, got {}", self.duration));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 0.5) {
            return bad(
                "keep_fraction",
                format!("must lie in (0, 0.5], got {}", self.keep_fraction),
            );
        }
        if self.keep_modes() == 0 {
            return bad("keep_fraction", "retains no modes on this grid".into());
        }
        if self.observe_stride == 0
            || self.n % self.observe_stride != 0
            || self.n / self.observe_stride < spectral::MIN_AXIS_LEN
        {
            return bad(
                "observe_stride",
                format!("{} does not divide n = {} into >= 4 points", self.observe_stride, self.n),
            );
        }
        Ok(())
    }

    /// Points per axis of the saved frames.
    pub fn observed_n(&self) -> usize {
        self.n / self.observe_stride
    }

    pub fn keep_modes(&self) -> usize {
        ((self.keep_fraction * self.n as f64).round() as usize).min(self.n / 2)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn grid_dims(&self) -> Vec<usize> {
        vec![self.n; self.dims]
    }

    pub fn extent(&self) -> Vec<f64> {
        vec![self.length; self.dims]
    }

    /// Saved frame interval (s).
    pub fn frame_dt(&self) -> f64 {
        self.dt_sim * self.save_every as f64
    }

    pub fn total_steps(&self) -> usize {
        (self.duration / self.dt_sim).round() as usize
    }

    pub fn frame_count(&self) -> usize {
        self.total_steps() / self.save_every + 1
    }
}

/// One wave of the initial superposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialWave {
    pub amplitude: f64,
    pub phase: f64,
    /// Propagation direction (2D only).
    pub angle: f64,
}

/// Draws the ten amplitudes, phases and (in 2D) directions from the seed.
pub fn initial_waves(config: &KsConfig) -> Vec<InitialWave> {
    let mut rng = substream(config.seed, "ks-initial", 0);
    (0..INITIAL_WAVES)
        .map(|_| {
            let amplitude = rng.gen_range(-1.0..=1.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let angle = if config.dims == 2 {
                rng.gen_range(-PI / 2.0..=PI / 2.0)
            } else {
                0.0
            };
            InitialWave {
                amplitude,
                phase,
                angle,
            }
        })
        .collect()
}

/// Evaluates `Σ_i A_i sin(2π·i/L·ξ_i + φ_i)` on the grid, with `ξ_i = x` in
/// 1D and `x cos ϕ_i + y sin ϕ_i` in 2D. Wave `i` (1-based) has `i` periods
/// across the domain.
pub fn ks_initial_from(waves: &[InitialWave], config: &KsConfig) -> Result<Field> {
    let n = config.n;
    let h = config.spacing();
    let l = config.length;
    let values = match config.dims {
        1 => (0..n)
            .map(|j| {
                let x = j as f64 * h;
                waves
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w.amplitude * (2.0 * PI * (i + 1) as f64 / l * x + w.phase).sin())
                    .sum()
            })
            .collect(),
        _ => {
            let mut v = Vec::with_capacity(n * n);
            for r in 0..n {
                let y = r as f64 * h;
                for c in 0..n {
                    let x = c as f64 * h;
                    v.push(
                        waves
                            .iter()
                            .enumerate()
                            .map(|(i, w)| {
                                let xi = x * w.angle.cos() + y * w.angle.sin();
                                w.amplitude * (2.0 * PI * (i + 1) as f64 / l * xi + w.phase).sin()
                            })
                            .sum(),
                    );
                }
            }
            v
        }
    };
    Field::new(values, config.grid_dims(), config.extent())
}

pub fn ks_initial(config: &KsConfig) -> Result<Field> {
    ks_initial_from(&initial_waves(config), config)
}

/// Fourth-order first derivative along a periodic line.
fn d1_line(u: &[f64], out: &mut [f64], stride: usize, count: usize, h: f64) {
    let c = 1.0 / (12.0 * h);
    for j in 0..count {
        let at = |o: isize| u[((j as isize + o).rem_euclid(count as isize) as usize) * stride];
        out[j * stride] = c * (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2));
    }
}

/// Fourth-order second derivative along a periodic line.
fn d2_line(u: &[f64], out: &mut [f64], stride: usize, count: usize, h: f64) {
    let c = 1.0 / (12.0 * h * h);
    for j in 0..count {
        let at = |o: isize| u[((j as isize + o).rem_euclid(count as isize) as usize) * stride];
        out[j * stride] = c * (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2));
    }
}

type LineOp = fn(&[f64], &mut [f64], usize, usize, f64);

/// Applies a line stencil along `axis` (0 = x in 1D; 0 = y, 1 = x in 2D).
fn along_axis(op: LineOp, u: &[f64], dims: usize, n: usize, axis: usize, h: f64) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    match (dims, axis) {
        (1, _) => op(u, &mut out, 1, n, h),
        (_, 1) => {
            for r in 0..n {
                op(&u[r * n..(r + 1) * n], &mut out[r * n..(r + 1) * n], 1, n, h);
            }
        }
        _ => {
            for c in 0..n {
                op(&u[c..], &mut out[c..], n, n, h);
            }
        }
    }
    out
}

/// Discrete Laplacian with the fourth-order stencil.
pub fn laplacian(u: &[f64], dims: usize, n: usize, h: f64) -> Vec<f64> {
    let mut lap = along_axis(d2_line, u, dims, n, 0, h);
    if dims == 2 {
        let yy = along_axis(d2_line, u, dims, n, 1, h);
        lap.iter_mut().zip(yy).for_each(|(a, b)| *a += b);
    }
    lap
}

/// `|∇u|²` with the fourth-order first-derivative stencil.
pub fn grad_sq(u: &[f64], dims: usize, n: usize, h: f64) -> Vec<f64> {
    let dx = along_axis(d1_line, u, dims, n, 0, h);
    let mut g: Vec<f64> = dx.iter().map(|v| v * v).collect();
    if dims == 2 {
        let dy = along_axis(d1_line, u, dims, n, 1, h);
        g.iter_mut().zip(dy).for_each(|(a, b)| *a += b * b);
    }
    g
}

fn rhs_values(u: &[f64], config: &KsConfig) -> Vec<f64> {
    let (d, n, h) = (config.dims, config.n, config.spacing());
    let lap = laplacian(u, d, n, h);
    let bih = laplacian(&lap, d, n, h);
    let g = grad_sq(u, d, n, h);
    lap.iter()
        .zip(&bih)
        .zip(&g)
        .map(|((l, b), g)| -l - config.nu * b - 0.5 * g)
        .collect()
}

/// Time derivative `−Δu − νΔ²u − ½|∇u|²`.
pub fn ks_rhs(u: &Field, config: &KsConfig) -> Result<Field> {
    check_grid(u, config)?;
    u.with_values(rhs_values(u.values(), config))
}

fn check_grid(u: &Field, config: &KsConfig) -> Result<()> {
    if u.dims() != config.grid_dims().as_slice() {
        return Err(Error::ShapeMismatch {
            left: u.dims().to_vec(),
            right: config.grid_dims(),
        });
    }
    Ok(())
}

/// Advances a state by Heun steps and filters after each one.
#[derive(Debug)]
pub struct KsIntegrator {
    config: KsConfig,
    step: usize,
}

impl KsIntegrator {
    pub fn new(config: KsConfig) -> Result<Self> {
        config.validate()?;
        Ok(KsIntegrator { config, step: 0 })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn step(&mut self, u: &Field) -> Result<Field> {
        check_grid(u, &self.config)?;
        let cfg = &self.config;
        let dt = cfg.dt_sim;
        let u0 = u.values();
        let k1 = rhs_values(u0, cfg);
        let predictor: Vec<f64> = u0.iter().zip(&k1).map(|(u, k)| u + dt * k).collect();
        let k2 = rhs_values(&predictor, cfg);
        let next: Vec<f64> = u0
            .iter()
            .zip(k1.iter().zip(&k2))
            .map(|(u, (a, b))| u + 0.5 * dt * (a + b))
            .collect();
        self.step += 1;
        if spectral::check_finite(&next).is_err() {
            return Err(Error::BlowUp {
                step: self.step,
                time: self.step as f64 * dt,
            });
        }
        let next = u.with_values(next)?;
        let keep = cfg.keep_modes();
        if keep >= cfg.n / 2 {
            return Ok(next);
        }
        let filtered = spectral::lowpass(&spectral::forward(&next)?, &vec![keep; cfg.dims])?;
        spectral::inverse(&filtered)
    }
}

/// One Heun step followed by the spectral low-pass.
pub fn ks_step(u: &Field, config: &KsConfig) -> Result<Field> {
    KsIntegrator::new(config.clone())?.step(u)
}

/// Integrates from `initial`, saving every `save_every`-th state from t = 0.
pub fn ks_simulate_from(initial: Field, config: &KsConfig) -> Result<Trajectory> {
    let mut integ = KsIntegrator::new(config.clone())?;
    check_grid(&initial, config)?;
    let steps = config.total_steps();
    let mut frames = Vec::with_capacity(config.frame_count());
    let stride = config.observe_stride;
    let mut u = initial;
    frames.push(spectral::decimate(&u, stride)?.with_time(0.0));
    for s in 1..=steps {
        u = integ.step(&u)?;
        if s % config.save_every == 0 {
            let t = frames.len() as f64 * config.frame_dt();
            frames.push(spectral::decimate(&u, stride)?.with_time(t));
        }
    }
    Trajectory::new(frames, config.frame_dt(), Source::Ks(config.clone()))
}

/// Seeded initial condition integrated for `duration` seconds.
pub fn ks_simulate(config: &KsConfig) -> Result<Trajectory> {
    config.validate()?;
    ks_simulate_from(ks_initial(config)?, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> KsConfig {
        KsConfig {
            n: 128,
            keep_fraction: 0.5,
            observe_stride: 1,
            ..KsConfig::desk(1)
        }
    }

    /// Symbols of the stencils, derived by hand from their Fourier transform:
    /// D2 ↦ (−2cos2θ + 32cosθ − 30)/(12h²), D1 ↦ i(8 sinθ − sin2θ)/(6h).
    fn lap_symbol(k: f64, h: f64) -> f64 {
        let t = k * h;
        (-2.0 * (2.0 * t).cos() + 32.0 * t.cos() - 30.0) / (12.0 * h * h)
    }

    #[test]
    fn zero_and_constant_states_have_zero_rhs() {
        let cfg = desk();
        let z = Field::zeros(&[128], &[128.0]).unwrap();
        assert!(ks_rhs(&z, &cfg).unwrap().values().iter().all(|&v| v == 0.0));
        let c = z.with_values(vec![3.25; 128]).unwrap();
        assert!(ks_rhs(&c, &cfg).unwrap().values().iter().all(|&v| v == 0.0));
        assert_eq!(ks_step(&z, &cfg).unwrap(), z);
    }

    #[test]
    fn rhs_of_small_mode_matches_stencil_symbol() {
        let cfg = desk();
        let (h, l, eps) = (cfg.spacing(), cfg.length, 1e-6);
        let k = 2.0 * PI * 4.0 / l;
        let u = Field::sample_line(128, l, |x| eps * (k * x).sin()).unwrap();
        let k2 = -lap_symbol(k, h);
        let sigma = k2 - cfg.nu * k2 * k2;
        let rhs = ks_rhs(&u, &cfg).unwrap();
        let expect: Vec<f64> = (0..128).map(|j| eps * sigma * (k * j as f64 * h).sin()).collect();
        let scale = eps * sigma.abs();
        let err = rhs
            .values()
            .iter()
            .zip(&expect)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / scale < 1e-3, "rel err {}", err / scale);
    }

    #[test]
    fn two_dim_operators_match_analytic_derivatives() {
        let (n, l) = (128, 64.0);
        let h = l / n as f64;
        let (a, b) = (2.0 * PI * 3.0 / l, 2.0 * PI * 2.0 / l);
        let phase = |i: usize| a * (i % n) as f64 * h + b * (i / n) as f64 * h;
        let u: Vec<f64> = (0..n * n).map(|i| phase(i).sin()).collect();
        let lap = laplacian(&u, 2, n, h);
        let g = grad_sq(&u, 2, n, h);
        let k2 = a * a + b * b;
        for i in 0..n * n {
            assert!((lap[i] + k2 * phase(i).sin()).abs() < 1e-5);
            assert!((g[i] - k2 * phase(i).cos().powi(2)).abs() < 1e-5);
        }
    }

    #[test]
    fn desk_frames_are_stored_at_half_resolution() {
        let cfg = KsConfig::desk(1);
        assert_eq!((cfg.n, cfg.keep_modes(), cfg.observed_n()), (256, 80, 128));
        let t = ks_simulate(&cfg).unwrap();
        assert_eq!(t.len(), 201);
        assert_eq!(t.frames()[0].dims(), &[128]);
        let c2 = KsConfig::desk(2);
        assert_eq!((c2.n, c2.keep_modes(), c2.observed_n()), (128, 60, 64));
    }

    #[test]
    fn one_step_growth_factor_is_second_order() {
        let cfg = desk();
        let l = cfg.length;
        let k = 2.0 * PI * 4.0 / l;
        let eps = 1e-6;
        let u = Field::sample_line(128, l, |x| eps * (k * x).sin()).unwrap();
        let next = ks_step(&u, &cfg).unwrap();
        let amp = |f: &Field| spectral::forward(f).unwrap().coeffs()[4].norm();
        let factor = amp(&next) / amp(&u);
        let sigma = k * k - cfg.nu * k.powi(4);
        let exact = (sigma * cfg.dt_sim).exp();
        assert!((factor - exact).abs() < cfg.dt_sim * cfg.dt_sim * 1e-2, "{factor} vs {exact}");
    }

    #[test]
    fn filtered_step_leaves_no_energy_above_cutoff() {
        let cfg = KsConfig {
            keep_fraction: 80.0 / 1024.0,
            ..desk()
        };
        let keep = cfg.keep_modes();
        assert_eq!(keep, 10);
        let u = Field::sample_line(128, cfg.length, |x| (0.3 * x).sin() + (1.7 * x).cos()).unwrap();
        let next = ks_step(&u, &cfg).unwrap();
        assert!(spectral::forward(&next).unwrap().energy_above(&[keep]) < 1e-20);
    }

    #[test]
    fn initial_condition_hooks() {
        let cfg = desk();
        let zero = vec![
            InitialWave {
                amplitude: 0.0,
                phase: 1.0,
                angle: 0.0
            };
            10
        ];
        assert!(ks_initial_from(&zero, &cfg).unwrap().values().iter().all(|&v| v == 0.0));

        let mut single = zero.clone();
        single[0] = InitialWave {
            amplitude: 1.0,
            phase: 0.0,
            angle: 0.0,
        };
        let u = ks_initial_from(&single, &cfg).unwrap();
        let s = spectral::forward(&u).unwrap();
        let total: f64 = s.coeffs().iter().map(|c| c.norm_sqr()).sum();
        let mode1 = s.coeffs()[1].norm_sqr() + s.coeffs()[127].norm_sqr();
        assert!((mode1 / total - 1.0).abs() < 1e-12);

        assert_eq!(ks_initial(&cfg).unwrap(), ks_initial(&cfg).unwrap());
        let other = KsConfig { seed: 1, ..cfg.clone() };
        assert_ne!(ks_initial(&cfg).unwrap(), ks_initial(&other).unwrap());
    }

    #[test]
    fn initial_condition_2d_has_grid_shape() {
        let cfg = KsConfig {
            n: 16,
            observe_stride: 1,
            ..KsConfig::desk(2)
        };
        let u = ks_initial(&cfg).unwrap();
        assert_eq!(u.dims(), &[16, 16]);
        assert!(initial_waves(&cfg).iter().all(|w| w.angle.abs() <= PI / 2.0));
    }

    #[test]
    fn zero_duration_is_single_frame() {
        let cfg = KsConfig {
            duration: 0.0,
            ..desk()
        };
        let t = ks_simulate(&cfg).unwrap();
        assert_eq!(t.frames().len(), 1);
        assert_eq!(t.frames()[0], ks_initial(&cfg).unwrap().with_time(0.0));
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let cfg = KsConfig {
            duration: 2.0,
            ..desk()
        };
        let t = ks_simulate_from(Field::zeros(&[128], &[128.0]).unwrap(), &cfg).unwrap();
        assert!(t.frames().iter().all(|f| f.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn blow_up_names_the_step() {
        let cfg = KsConfig {
            dt_sim: 5.0,
            duration: 500.0,
            ..desk()
        };
        let err = ks_simulate(&cfg).unwrap_err();
        assert!(matches!(err, Error::BlowUp { step, .. } if step > 0), "{err}");
    }

    #[test]
    fn config_validation_names_fields() {
        let bad = KsConfig { n: 100, ..desk() };
        let err = bad.validate().unwrap_err().to_string();
        assert!(err.contains("ks.n"), "{err}");
        let bad = KsConfig { keep_fraction: 0.7, ..desk() };
        assert!(bad.validate().unwrap_err().to_string().contains("ks.keep_fraction"));
    }

    #[test]
    fn desk_run_two_dims_stays_finite() {
        let cfg = KsConfig {
            n: 32,
            keep_fraction: 0.5,
            duration: 2.0,
            ..KsConfig::desk(2)
        };
        let t = ks_simulate(&cfg).unwrap();
        assert_eq!(t.frames().len(), 21);
        assert_eq!(t.frames()[0].dims(), &[16, 16]);
    }
}
