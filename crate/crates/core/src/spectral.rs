//! Discrete Fourier transforms on uniform periodic 1D/2D grids.
//!
//! Convention: the forward transform is unnormalized and the inverse carries
//! the 1/N factor. Wavenumbers follow the standard DFT index order,
//! `k_j = 2π·j/L` with `j` running `0, 1, …, n/2-1, -n/2, …, -1`.
//!
//! With this convention and the plain Riemann quadrature used by
//! [`sobolev_norm`], Parseval gives
//!
//! ```text
//! sobolev_norm(forward(f)) = sqrt(N · Π_axes 2π/L_axis) · ‖f‖₂
//! ```
//!
//! where `N` is the total number of grid points; see [`parseval_constant`].

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Smallest admissible grid length per axis.
pub const MIN_AXIS_LEN: usize = 4;

/// Relative bound on the imaginary part left over by [`inverse`].
pub const IMAG_RESIDUE_TOL: f64 = 1e-9;

/// A real-valued sample on a uniform periodic grid with physical extent.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    values: Vec<f64>,
    dims: Vec<usize>,
    extent: Vec<f64>,
    time: Option<f64>,
}

impl Field {
    /// Builds a field, checking shape, extent and finiteness. `dims` is `[n]`
    /// or `[ny, nx]` (row-major), `extent` the matching physical lengths.
    pub fn new(values: Vec<f64>, dims: Vec<usize>, extent: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(Error::InvalidField(format!(
                "expected 1 or 2 axes, got {}",
                dims.len()
            )));
        }
        if dims.len() != extent.len() {
            return Err(Error::InvalidField(format!(
                "{} axes but {} extents",
                dims.len(),
                extent.len()
            )));
        }
        if let Some(&n) = dims.iter().find(|&&n| n < MIN_AXIS_LEN) {
            return Err(Error::InvalidField(format!(
                "axis length {n} is below the minimum of {MIN_AXIS_LEN}"
            )));
        }
        if let Some(&l) = extent.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidField(format!("extent {l} must be positive")));
        }
        let expected: usize = dims.iter().product();
        if values.len() != expected {
            return Err(Error::InvalidField(format!(
                "{} values for shape {:?}",
                values.len(),
                dims
            )));
        }
        check_finite(&values)?;
        Ok(Field {
            values,
            dims,
            extent,
            time: None,
        })
    }

    pub fn line(values: Vec<f64>, length: f64) -> Result<Self> {
        let n = values.len();
        Field::new(values, vec![n], vec![length])
    }

    pub fn grid(values: Vec<f64>, ny: usize, nx: usize, ly: f64, lx: f64) -> Result<Self> {
        Field::new(values, vec![ny, nx], vec![ly, lx])
    }

    pub fn zeros(dims: &[usize], extent: &[f64]) -> Result<Self> {
        Field::new(vec![0.0; dims.iter().product()], dims.to_vec(), extent.to_vec())
    }

    /// Samples `f(x)` (1D) at `x_j = j·L/n`.
    pub fn sample_line(n: usize, length: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = length / n as f64;
        Field::line((0..n).map(|j| f(j as f64 * dx)).collect(), length)
    }

    /// A field with the same grid as `self` but new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        let mut f = Field::new(values, self.dims.clone(), self.extent.clone())?;
        f.time = self.time;
        Ok(f)
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn time(&self) -> Option<f64> {
        self.time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Grid spacing per axis.
    pub fn spacing(&self) -> Vec<f64> {
        self.dims
            .iter()
            .zip(&self.extent)
            .map(|(&n, &l)| l / n as f64)
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|v| c * v).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Plain ℓ2 norm of the grid values.
    pub fn l2(&self) -> f64 {
        l2(&self.values)
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch {
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        if self.extent != other.extent {
            return Err(Error::InvalidArgument(format!(
                "extent mismatch: {:?} vs {:?}",
                self.extent, other.extent
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

pub(crate) fn l2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormConvention {
    /// Forward sum without scaling, inverse scaled by 1/N.
    UnnormalizedForward,
}

/// Full complex spectrum of a [`Field`].
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    coeffs: Vec<Complex64>,
    dims: Vec<usize>,
    extent: Vec<f64>,
    wavenumbers: Vec<Vec<f64>>,
    convention: NormConvention,
}

impl Spectrum {
    /// Wraps coefficients laid out like a field of shape `dims`.
    pub fn from_parts(coeffs: Vec<Complex64>, dims: Vec<usize>, extent: Vec<f64>) -> Result<Self> {
        // Validate the grid through Field's rules.
        Field::zeros(&dims, &extent)?;
        if coeffs.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for shape {:?}",
                coeffs.len(),
                dims
            )));
        }
        let wavenumbers = dims
            .iter()
            .zip(&extent)
            .map(|(&n, &l)| wavenumbers(n, l))
            .collect();
        Ok(Spectrum {
            coeffs,
            dims,
            extent,
            wavenumbers,
            convention: NormConvention::UnnormalizedForward,
        })
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    /// Wavenumbers (rad/m) of one axis in DFT index order.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    pub fn convention(&self) -> NormConvention {
        self.convention
    }

    /// Product of per-axis wavenumber spacings.
    pub fn dk(&self) -> f64 {
        self.extent.iter().map(|l| 2.0 * PI / l).product()
    }

    /// Mode-magnitude profile `|F|` in coefficient order.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm()).collect()
    }

    /// Quadrature of `|F(k)|` over all wavenumbers, `Σ|F(k)|·Δk`.
    pub fn magnitude_integral(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum::<f64>() * self.dk()
    }

    pub fn scaled(&self, c: f64) -> Spectrum {
        let mut s = self.clone();
        s.coeffs.iter_mut().for_each(|z| *z *= c);
        s
    }

    /// Σ|F|² over coefficients with any axis mode index above `keep`.
    pub fn energy_above(&self, keep: &[usize]) -> f64 {
        let mut e = 0.0;
        for_each_index(&self.dims, |flat, idx| {
            if idx
                .iter()
                .zip(&self.dims)
                .zip(keep)
                .any(|((&j, &n), &m)| mode_magnitude(j, n) > m)
            {
                e += self.coeffs[flat].norm_sqr();
            }
        });
        e
    }
}

/// `2π·fftfreq(n, L/n)`.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|j| 2.0 * PI * signed_index(j, n) as f64 / length)
        .collect()
}

/// Signed DFT index of position `j` (`-n/2` for the Nyquist slot).
pub fn signed_index(j: usize, n: usize) -> i64 {
    if j < n.div_ceil(2) {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Magnitude of the mode index at DFT position `j`.
pub fn mode_magnitude(j: usize, n: usize) -> usize {
    j.min(n - j)
}

/// Constant `c` with `sobolev_norm(forward(f)) == c·‖f‖₂`.
pub fn parseval_constant(dims: &[usize], extent: &[f64]) -> f64 {
    let n: usize = dims.iter().product();
    let dk: f64 = extent.iter().map(|l| 2.0 * PI / l).product();
    (n as f64 * dk).sqrt()
}

fn for_each_index(dims: &[usize], mut f: impl FnMut(usize, &[usize])) {
    match dims {
        [n] => (0..*n).for_each(|j| f(j, &[j])),
        [ny, nx] => {
            for r in 0..*ny {
                for c in 0..*nx {
                    f(r * nx + c, &[r, c]);
                }
            }
        }
        _ => unreachable!("fields have one or two axes"),
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// In-place unnormalized transform over all axes of a row-major buffer.
pub(crate) fn transform(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    match dims {
        [n] => plan(*n, inverse).process(data),
        [ny, nx] => {
            let (ny, nx) = (*ny, *nx);
            let rows = plan(nx, inverse);
            rows.process(data); // rustfft processes consecutive chunks of length nx
            let cols = plan(ny, inverse);
            let mut column = vec![Complex64::new(0.0, 0.0); ny];
            for c in 0..nx {
                for r in 0..ny {
                    column[r] = data[r * nx + c];
                }
                cols.process(&mut column);
                for r in 0..ny {
                    data[r * nx + c] = column[r];
                }
            }
        }
        _ => unreachable!("fields have one or two axes"),
    }
}

/// Full complex DFT of a real field.
pub fn forward(field: &Field) -> Result<Spectrum> {
    check_finite(field.values())?;
    let mut data: Vec<Complex64> = field
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    transform(&mut data, field.dims(), false);
    Spectrum::from_parts(data, field.dims().to_vec(), field.extent().to_vec())
}

/// Real part of the 1/N-normalized inverse DFT. Fails when the imaginary
/// residue exceeds [`IMAG_RESIDUE_TOL`]·max|coeffs|.
pub fn inverse(spec: &Spectrum) -> Result<Field> {
    let mut data = spec.coeffs.clone();
    transform(&mut data, &spec.dims, true);
    let scale = 1.0 / data.len() as f64;
    let max_coeff = spec.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
    let tolerance = IMAG_RESIDUE_TOL * max_coeff;
    let residue = data.iter().fold(0.0_f64, |m, c| m.max((c.im * scale).abs()));
    if residue > tolerance {
        return Err(Error::NonHermitian { residue, tolerance });
    }
    Field::new(
        data.iter().map(|c| c.re * scale).collect(),
        spec.dims.clone(),
        spec.extent.clone(),
    )
}

/// Order-0 Sobolev norm, `sqrt(Σ_k |F(k)|²·Δk)`.
pub fn sobolev_norm(spec: &Spectrum) -> f64 {
    (spec.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * spec.dk()).sqrt()
}

/// Zeroes every coefficient whose mode index magnitude exceeds `keep_modes`
/// on any axis.
pub fn lowpass(spec: &Spectrum, keep_modes: &[usize]) -> Result<Spectrum> {
    if keep_modes.len() != spec.dims.len() {
        return Err(Error::InvalidArgument(format!(
            "{} cutoffs for {} axes",
            keep_modes.len(),
            spec.dims.len()
        )));
    }
    for (&m, &n) in keep_modes.iter().zip(&spec.dims) {
        if m == 0 {
            return Err(Error::InvalidArgument("keep_modes must be positive".into()));
        }
        if m > n / 2 {
            return Err(Error::InvalidArgument(format!(
                "keep_modes {m} exceeds the Nyquist index {}",
                n / 2
            )));
        }
    }
    let mut out = spec.clone();
    let dims = spec.dims.clone();
    for_each_index(&dims, |flat, idx| {
        if idx
            .iter()
            .zip(&dims)
            .zip(keep_modes)
            .any(|((&j, &n), &m)| mode_magnitude(j, n) > m)
        {
            out.coeffs[flat] = Complex64::new(0.0, 0.0);
        }
    });
    Ok(out)
}

/// Band-limits `field` to the Nyquist mode of a grid `stride` times coarser
/// and keeps every `stride`-th sample per axis.
pub fn decimate(field: &Field, stride: usize) -> Result<Field> {
    let dims = field.dims();
    if stride == 0 || dims.iter().any(|&n| n % stride != 0 || n / stride < MIN_AXIS_LEN) {
        return Err(Error::InvalidArgument(format!(
            "stride {stride} does not divide {dims:?} into >= {MIN_AXIS_LEN} points"
        )));
    }
    if stride == 1 {
        return Ok(field.clone());
    }
    let keep: Vec<usize> = dims.iter().map(|n| n / stride / 2).collect();
    let smooth = inverse(&lowpass(&forward(field)?, &keep)?)?;
    let coarse: Vec<usize> = dims.iter().map(|n| n / stride).collect();
    let v = smooth.values();
    let values = if dims.len() == 1 {
        v.iter().step_by(stride).copied().collect()
    } else {
        let nx = dims[1];
        let mut out = Vec::with_capacity(coarse[0] * coarse[1]);
        for r in 0..coarse[0] {
            out.extend(v[r * stride * nx..(r * stride + 1) * nx].iter().step_by(stride));
        }
        out
    };
    Field::new(values, coarse, field.extent().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::substream;

    #[test]
    fn decimation_samples_band_limited_fields() {
        let l = 32.0;
        let k = |m: f64| 2.0 * PI * m / l;
        let f = Field::sample_line(64, l, |x| (k(3.0) * x).cos() + 0.5 * (k(20.0) * x + 0.3).sin()).unwrap();
        let d = decimate(&f, 2).unwrap();
        let expect = Field::sample_line(32, l, |x| (k(3.0) * x).cos()).unwrap();
        assert_eq!(d.dims(), &[32]);
        for (a, b) in d.values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(decimate(&f, 1).unwrap(), f);
        assert!(decimate(&f, 3).is_err());
        assert!(decimate(&f, 32).is_err());
        let g = Field::grid(
            (0..16 * 16).map(|i| ((i / 16) as f64 * 0.4).sin() + ((i % 16) as f64 * 0.8).cos()).collect(),
            16,
            16,
            1.0,
            1.0,
        )
        .unwrap();
        let dg = decimate(&g, 2).unwrap();
        assert_eq!(dg.dims(), &[8, 8]);
        let smooth = inverse(&lowpass(&forward(&g).unwrap(), &[4, 4]).unwrap()).unwrap();
        assert!((dg.values()[3 * 8 + 5] - smooth.values()[6 * 16 + 10]).abs() < 1e-12);
    }

    fn random_field(dims: &[usize], extent: &[f64], seed: u64) -> Field {
        let mut rng = substream(seed, "spectral-test", 0);
        let n = dims.iter().product();
        Field::new(
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            dims.to_vec(),
            extent.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn constant_field_is_dc_only() {
        let f = Field::line(vec![1.0; 8], 8.0).unwrap();
        let s = forward(&f).unwrap();
        assert_eq!(s.coeffs()[0], Complex64::new(8.0, 0.0));
        assert!(s.coeffs()[1..].iter().all(|c| c.norm() < 1e-14));
    }

    #[test]
    fn single_harmonic_lands_in_modes_one() {
        let l = 10.0;
        let f = Field::sample_line(64, l, |x| (2.0 * PI * x / l).cos()).unwrap();
        let s = forward(&f).unwrap();
        assert!((s.coeffs()[1].norm() - 32.0).abs() < 1e-10);
        assert!((s.coeffs()[63].norm() - 32.0).abs() < 1e-10);
        let rest: f64 = s
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != 1 && *j != 63)
            .map(|(_, c)| c.norm())
            .sum();
        assert!(rest < 1e-10);
    }

    #[test]
    fn round_trip_1d_and_2d() {
        for (dims, extent) in [(vec![128], vec![3.0]), (vec![16, 32], vec![2.0, 5.0])] {
            let f = random_field(&dims, &extent, 1);
            let g = inverse(&forward(&f).unwrap()).unwrap();
            let err = f
                .values()
                .iter()
                .zip(g.values())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 1e-10 * f.max_abs(), "err {err}");
        }
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let s = Spectrum::from_parts(vec![Complex64::new(0.0, 0.0); 8], vec![8], vec![1.0]).unwrap();
        assert!(inverse(&s).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_hermitian_spectrum_is_rejected() {
        let mut c = vec![Complex64::new(0.0, 0.0); 8];
        c[1] = Complex64::new(1.0, 0.0);
        let s = Spectrum::from_parts(c, vec![8], vec![1.0]).unwrap();
        assert!(matches!(inverse(&s), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn non_finite_input_names_index() {
        // Field::new already refuses it, so exercise the check directly.
        let err = check_finite(&[0.0, 1.0, f64::NAN, f64::INFINITY]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 2 }));
        assert!(Field::line(vec![0.0, 0.0, 0.0, f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn wavenumber_axis_matches_fftfreq() {
        let k = wavenumbers(8, 4.0);
        let expect = [0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0].map(|j| 2.0 * PI * j / 4.0);
        assert_eq!(k, expect.to_vec());
    }

    #[test]
    fn sobolev_norm_zero_and_homogeneous() {
        let f = random_field(&[32], &[7.0], 3);
        let s = forward(&f).unwrap();
        let zero = s.scaled(0.0);
        assert_eq!(sobolev_norm(&zero), 0.0);
        let a = sobolev_norm(&s);
        let b = sobolev_norm(&s.scaled(2.0));
        assert!((b - 2.0 * a).abs() <= 1e-14 * a);
    }

    #[test]
    fn parseval_constant_matches_on_all_sizes() {
        let cases: Vec<(Vec<usize>, Vec<f64>)> = vec![
            (vec![8], vec![1.0]),
            (vec![64], vec![128.0]),
            (vec![128], vec![20.0]),
            (vec![8, 8], vec![3.0, 4.0]),
            (vec![32, 32], vec![64.0, 64.0]),
        ];
        for (i, (dims, extent)) in cases.into_iter().enumerate() {
            let f = random_field(&dims, &extent, 10 + i as u64);
            // Independent constant: Σ|F|² = N·Σ|f|² and Δk = Π 2π/L.
            let n = dims.iter().product::<usize>() as f64;
            let dk: f64 = extent.iter().map(|l| 2.0 * PI / l).product();
            let expected = (n * dk).sqrt();
            let ratio = sobolev_norm(&forward(&f).unwrap()) / f.l2();
            assert!((ratio / expected - 1.0).abs() < 1e-9, "{dims:?}");
            assert!((parseval_constant(&dims, &extent) / expected - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lowpass_edge_cases() {
        let l = 128.0;
        let f = Field::sample_line(128, l, |x| (2.0 * PI * x / l).cos() + (2.0 * PI * 20.0 * x / l).sin())
            .unwrap();
        let s = forward(&f).unwrap();
        assert_eq!(lowpass(&s, &[64]).unwrap(), s);
        assert!(lowpass(&s, &[0]).is_err());
        assert!(lowpass(&s, &[65]).is_err());

        let cos = Field::sample_line(64, l, |x| (2.0 * PI * x / l).cos()).unwrap();
        let cs = forward(&cos).unwrap();
        let kept = inverse(&lowpass(&cs, &[1]).unwrap()).unwrap();
        let err = kept
            .values()
            .iter()
            .zip(cos.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-14, "mode 1 must survive, err {err}");

        // 80/1024 of 128 modes keeps 10.
        let keep = (80.0 / 1024.0 * 128.0_f64).round() as usize;
        assert_eq!(keep, 10);
        let filtered = lowpass(&s, &[keep]).unwrap();
        assert_eq!(filtered.energy_above(&[keep]), 0.0);
        assert!(s.energy_above(&[keep]) > 1.0);
        // the filtered spectrum still inverts to a real field
        inverse(&filtered).unwrap();
    }

    #[test]
    fn lowpass_2d_preserves_hermitian_symmetry() {
        let f = random_field(&[16, 16], &[1.0, 1.0], 4);
        let s = lowpass(&forward(&f).unwrap(), &[3, 5]).unwrap();
        assert_eq!(s.energy_above(&[3, 5]), 0.0);
        inverse(&s).unwrap();
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field_strategy() -> impl Strategy<Value = Field> {
            prop_oneof![
                prop::collection::vec(-10.0..10.0_f64, 64)
                    .prop_map(|v| Field::line(v, 5.0).unwrap()),
                prop::collection::vec(-10.0..10.0_f64, 64)
                    .prop_map(|v| Field::grid(v, 8, 8, 1.0, 2.0).unwrap()),
            ]
        }

        proptest! {
            #[test]
            fn round_trip(f in field_strategy()) {
                let g = inverse(&forward(&f).unwrap()).unwrap();
                let err = f.values().iter().zip(g.values()).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                prop_assert!(err <= 1e-10 * f.max_abs().max(1e-300));
            }

            #[test]
            fn lowpass_is_idempotent(f in field_strategy(), m in 1usize..=4) {
                let s = forward(&f).unwrap();
                let keep = vec![m; f.ndim()];
                let once = lowpass(&s, &keep).unwrap();
                let twice = lowpass(&once, &keep).unwrap();
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn forward_is_linear(f in field_strategy(), a in -3.0..3.0_f64, b in -3.0..3.0_f64) {
                let g = f.with_values(f.values().iter().rev().copied().collect()).unwrap();
                let combo = f.with_values(f.values().iter().zip(g.values()).map(|(x, y)| a * x + b * y).collect()).unwrap();
                let lhs = forward(&combo).unwrap();
                let (sf, sg) = (forward(&f).unwrap(), forward(&g).unwrap());
                let scale = sobolev_norm(&lhs).max(sobolev_norm(&sf) + sobolev_norm(&sg)) / sf.dk().sqrt();
                for ((l, x), y) in lhs.coeffs().iter().zip(sf.coeffs()).zip(sg.coeffs()) {
                    prop_assert!((l - (x * a + y * b)).norm() <= 1e-9 * scale.max(1e-300));
                }
            }
        }
    }
}
