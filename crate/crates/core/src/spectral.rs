//! Periodic surrogate of the real line.
//!
//! A [`SpectralGrid`] samples `[-L, L)` at `N` equispaced nodes. Fields carry
//! their real samples and a lazily computed real-to-complex spectrum. All the
//! operators used by the Benjamin-Ono experiments (derivatives, the Hilbert
//! transform, the dispersion `H∂ₓ²`, dealiasing) are Fourier multipliers
//! acting on that spectrum.
//!
//! Normalisation follows the continuous Fourier transform,
//!
//! ```text
//! c_m = Δx · Σ_j f(x_j) · exp(−i k_m x_j),     k_m = π m / L,
//! ```
//!
//! so that `‖f‖²_{L²} = (1/2L) Σ_m |c_m|²` and the discrete norms converge to
//! the real-line ones as `L, N → ∞`.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Periodic grid on `[-L, L)` with a power-of-two number of nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralGrid {
    half_length: f64,
    size: usize,
}

impl SpectralGrid {
    pub fn new(half_length: f64, size: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::config(format!(
                "grid half-length must be positive and finite, got {half_length}"
            )));
        }
        if size < 4 || !size.is_power_of_two() {
            return Err(Error::config(format!(
                "grid size must be a power of two >= 4, got {size}"
            )));
        }
        Ok(Self { half_length, size })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.size as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.size).map(|j| self.node(j))
    }

    /// `k_m = π m / L` for `m ∈ {−N/2, …, N/2−1}`.
    pub fn wavenumber(&self, m: i64) -> f64 {
        PI * m as f64 / self.half_length
    }

    /// Mode indices in increasing order, `−N/2 ..= N/2 − 1`.
    pub fn modes(&self) -> std::ops::Range<i64> {
        let half = (self.size / 2) as i64;
        -half..half
    }

    /// Largest resolved wavenumber `π/Δx`.
    pub fn max_wavenumber(&self) -> f64 {
        PI / self.spacing()
    }

    /// Modes with `|m|` above this index are removed by [`dealias`].
    pub fn dealias_cutoff(&self) -> usize {
        self.size / 3
    }

    /// Wavenumber attached to entry `i` of a real-to-complex half spectrum.
    /// The last entry is the Nyquist mode `m = −N/2`.
    pub(crate) fn half_wavenumber(&self, i: usize) -> f64 {
        if i == self.size / 2 {
            self.wavenumber(-(i as i64))
        } else {
            self.wavenumber(i as i64)
        }
    }

    pub(crate) fn check_same(&self, other: &SpectralGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::config(format!(
                "grid mismatch: (L = {}, N = {}) vs (L = {}, N = {})",
                self.half_length, self.size, other.half_length, other.size
            )))
        }
    }
}

struct RealPlans {
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

fn real_plans(n: usize) -> RealPlans {
    static PLANNER: OnceLock<Mutex<RealFftPlanner<f64>>> = OnceLock::new();
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(RealFftPlanner::new()))
        .lock()
        .expect("fft planner poisoned");
    RealPlans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

fn complex_inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .expect("fft planner poisoned")
        .plan_fft_inverse(n)
}

/// Reusable real transform pair of one size with private scratch space.
///
/// Spectra are kept in raw (unnormalised) FFT units; [`RealTransform::inverse`]
/// applies the `1/N` factor.
pub(crate) struct RealTransform {
    n: usize,
    plans: RealPlans,
    real_buf: Vec<f64>,
    scratch_fwd: Vec<Complex64>,
    scratch_inv: Vec<Complex64>,
}

impl RealTransform {
    pub(crate) fn new(n: usize) -> Self {
        let plans = real_plans(n);
        let scratch_fwd = plans.forward.make_scratch_vec();
        let scratch_inv = plans.inverse.make_scratch_vec();
        Self {
            n,
            plans,
            real_buf: vec![0.0; n],
            scratch_fwd,
            scratch_inv,
        }
    }

    pub(crate) fn forward(&mut self, values: &[f64], out: &mut [Complex64]) {
        self.real_buf.copy_from_slice(values);
        self.plans
            .forward
            .process_with_scratch(&mut self.real_buf, out, &mut self.scratch_fwd)
            .expect("forward transform length");
    }

    /// Inverse transform of a half spectrum; `spec` is used as workspace and
    /// left in an unspecified state.
    pub(crate) fn inverse(&mut self, spec: &mut [Complex64], out: &mut [f64]) {
        spec[0].im = 0.0;
        spec[self.n / 2].im = 0.0;
        self.plans
            .inverse
            .process_with_scratch(spec, out, &mut self.scratch_inv)
            .expect("inverse transform length");
        let scale = 1.0 / self.n as f64;
        out.iter_mut().for_each(|v| *v *= scale);
    }
}

fn forward_half(values: &[f64]) -> Vec<Complex64> {
    let mut transform = RealTransform::new(values.len());
    let mut out = vec![ZERO; values.len() / 2 + 1];
    transform.forward(values, &mut out);
    out
}

fn inverse_half(mut spec: Vec<Complex64>, n: usize) -> Vec<f64> {
    let mut transform = RealTransform::new(n);
    let mut out = vec![0.0; n];
    transform.inverse(&mut spec, &mut out);
    out
}

/// Real samples on a grid together with a cached spectrum.
///
/// A field is immutable once built; the spectrum is computed on first use and
/// shared by every operator applied afterwards.
#[derive(Debug, Clone)]
pub struct Field {
    grid: SpectralGrid,
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl Field {
    pub fn new(grid: SpectralGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::config(format!(
                "field has {} samples but the grid has {} nodes",
                values.len(),
                grid.size()
            )));
        }
        Ok(Self::from_parts(grid, values))
    }

    pub(crate) fn from_parts(grid: SpectralGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.size());
        Self {
            grid,
            values,
            spectrum: OnceLock::new(),
        }
    }

    pub(crate) fn from_half_spectrum(grid: SpectralGrid, spec: Vec<Complex64>) -> Self {
        Self::from_parts(grid, inverse_half(spec, grid.size()))
    }

    pub fn zeros(grid: SpectralGrid) -> Self {
        Self::from_parts(grid, vec![0.0; grid.size()])
    }

    pub fn constant(grid: SpectralGrid, value: f64) -> Self {
        Self::from_parts(grid, vec![value; grid.size()])
    }

    pub fn from_fn(grid: SpectralGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Raw real-to-complex spectrum (`N/2 + 1` entries, unnormalised).
    pub(crate) fn half_spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| forward_half(&self.values))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Self::from_parts(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_parts(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Field {
        self.map(|v| factor * v)
    }

    /// Average over the box, `(1/2L) ∫ f`.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `∫ f` by the rectangle rule.
    pub fn integral(&self) -> f64 {
        self.grid.spacing() * self.values.iter().sum::<f64>()
    }
}

/// Two-sided spectrum `c_m`, stored for `m = −N/2, …, N/2 − 1`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: SpectralGrid,
    coefficients: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: SpectralGrid, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.size() {
            return Err(Error::config(format!(
                "spectrum has {} coefficients but the grid has {} modes",
                coefficients.len(),
                grid.size()
            )));
        }
        Ok(Self { grid, coefficients })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficient(&self, m: i64) -> Complex64 {
        let half = (self.grid.size() / 2) as i64;
        assert!(
            (-half..half).contains(&m),
            "mode {m} outside -{half}..{half}"
        );
        self.coefficients[(m + half) as usize]
    }
}

fn parity(m: i64) -> f64 {
    if m % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Forward transform with the continuous-transform normalisation.
pub fn analyze(f: &Field) -> Spectrum {
    let grid = *f.grid();
    let n = grid.size();
    let half = (n / 2) as i64;
    let dx = grid.spacing();
    let raw = f.half_spectrum();
    let coefficients = grid
        .modes()
        .map(|m| {
            if m == -half {
                raw[n / 2] * (parity(m) * dx)
            } else if m >= 0 {
                raw[m as usize] * (parity(m) * dx)
            } else {
                raw[(-m) as usize].conj() * (parity(m) * dx)
            }
        })
        .collect();
    Spectrum { grid, coefficients }
}

/// Inverse of [`analyze`]. Returns the real part of the inverse transform,
/// which is exact for Hermitian spectra.
pub fn synthesize(spectrum: &Spectrum) -> Field {
    let grid = *spectrum.grid();
    let n = grid.size();
    let half = (n / 2) as i64;
    let inv_dx = 1.0 / grid.spacing();
    let mut raw = vec![ZERO; n / 2 + 1];
    raw[0] = Complex64::new(spectrum.coefficient(0).re * inv_dx, 0.0);
    for m in 1..half {
        let hermitian = (spectrum.coefficient(m) + spectrum.coefficient(-m).conj()) * 0.5;
        raw[m as usize] = hermitian * (parity(m) * inv_dx);
    }
    raw[n / 2] = Complex64::new(
        spectrum.coefficient(-half).re * parity(-half) * inv_dx,
        0.0,
    );
    Field::from_half_spectrum(grid, raw)
}

/// Zero every mode with `|m| > N/3` (the 2/3 rule).
pub fn dealias(spectrum: &Spectrum) -> Spectrum {
    let cutoff = spectrum.grid.dealias_cutoff() as i64;
    let coefficients = spectrum
        .grid
        .modes()
        .zip(&spectrum.coefficients)
        .map(|(m, &c)| if m.abs() > cutoff { ZERO } else { c })
        .collect();
    Spectrum {
        grid: spectrum.grid,
        coefficients,
    }
}

/// [`dealias`] applied to a field.
pub fn dealias_field(f: &Field) -> Field {
    let cutoff = f.grid().dealias_cutoff();
    apply_half(f, |i, _| if i > cutoff { ZERO } else { Complex64::new(1.0, 0.0) })
}

/// Apply a multiplier given per half-spectrum entry `(i, k)`.
///
/// Only the real part of the symbol survives on the Nyquist entry, which has
/// no conjugate partner; odd symbols therefore annihilate it.
fn apply_half(f: &Field, symbol: impl Fn(usize, f64) -> Complex64) -> Field {
    let grid = *f.grid();
    let spec = f
        .half_spectrum()
        .iter()
        .enumerate()
        .map(|(i, &c)| c * symbol(i, grid.half_wavenumber(i)))
        .collect();
    Field::from_half_spectrum(grid, spec)
}

/// Apply an arbitrary Hermitian multiplier `symbol(k)`.
pub fn apply_multiplier(f: &Field, symbol: impl Fn(f64) -> Complex64) -> Field {
    apply_half(f, |_, k| symbol(k))
}

fn sign(k: f64) -> f64 {
    if k > 0.0 {
        1.0
    } else if k < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Hilbert transform, multiplier `−i·sgn(k)` with `sgn(0) = 0`.
pub fn hilbert(f: &Field) -> Field {
    apply_multiplier(f, |k| Complex64::new(0.0, -sign(k)))
}

/// `∂ₓ^order`, multiplier `(ik)^order`, for `order ≤ 4`.
pub fn derivative(f: &Field, order: u32) -> Result<Field> {
    if order > 4 {
        return Err(Error::config(format!(
            "derivative order {order} not supported (max 4)"
        )));
    }
    Ok(apply_multiplier(f, |k| Complex64::new(0.0, k).powu(order)))
}

/// Symbol of `H∂ₓ²`, i.e. `i·k|k|`, listed for `m = −N/2, …, N/2 − 1`.
///
/// The Nyquist mode gets symbol 0, as for odd derivatives, so that the linear
/// propagator `exp(−i k|k| t)` maps real fields to real fields.
pub fn dispersion_symbol(grid: &SpectralGrid) -> Vec<Complex64> {
    let half = (grid.size() / 2) as i64;
    grid.modes()
        .map(|m| {
            if m == -half {
                ZERO
            } else {
                let k = grid.wavenumber(m);
                Complex64::new(0.0, k * k.abs())
            }
        })
        .collect()
}

/// `H∂ₓ² f`.
pub fn hilbert_dxx(f: &Field) -> Field {
    let nyquist = f.grid().size() / 2;
    apply_half(f, |i, k| {
        if i == nyquist {
            ZERO
        } else {
            Complex64::new(0.0, k * k.abs())
        }
    })
}

/// Exact solution of `u_t + H u_xx = 0` after time `t`.
pub fn propagate_linear(f: &Field, t: f64) -> Field {
    let nyquist = f.grid().size() / 2;
    apply_half(f, |i, k| {
        if i == nyquist {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, -k * k.abs() * t)
        }
    })
}

/// Complex samples of a (not necessarily Hermitian) multiplier applied to a
/// real field: `Σ_m symbol(k_m) ĉ_m e^{i k_m x}`.
///
/// With `symbol(k) = σ(k + λ)` this evaluates `e^{−iλx} T_σ(e^{iλx} f)`, so a
/// modulated packet `f(x)·e^{iλx}` can be handled with the carrier kept exact
/// and only the slowly varying envelope passing through the transform. The
/// symbol receives the envelope wavenumber `k`, not `k + λ`, so it can be
/// written without cancellation.
pub fn apply_complex_multiplier(f: &Field, symbol: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
    let grid = *f.grid();
    let n = grid.size();
    let raw = f.half_spectrum();
    let mut full = vec![ZERO; n];
    for (i, slot) in full.iter_mut().enumerate() {
        let (c, k) = if i <= n / 2 {
            (raw[i], grid.half_wavenumber(i))
        } else {
            (raw[n - i].conj(), grid.wavenumber(i as i64 - n as i64))
        };
        *slot = c * symbol(k);
    }
    let plan = complex_inverse_plan(n);
    plan.process(&mut full);
    let scale = 1.0 / n as f64;
    full.iter_mut().for_each(|c| *c *= scale);
    full
}

/// Band-limited interpolation onto a grid of the same length: the spectrum is
/// zero-padded (or truncated) to the target size.
pub fn resample(f: &Field, target: SpectralGrid) -> Result<Field> {
    let grid = *f.grid();
    if grid.half_length() != target.half_length() {
        return Err(Error::config(format!(
            "cannot resample from L = {} to L = {}",
            grid.half_length(),
            target.half_length()
        )));
    }
    if grid == target {
        return Ok(f.clone());
    }
    let (n, m) = (grid.size(), target.size());
    let raw = f.half_spectrum();
    let ratio = m as f64 / n as f64;
    let keep = n.min(m) / 2;
    let mut spec = vec![ZERO; m / 2 + 1];
    for i in 0..keep {
        spec[i] = raw[i] * ratio;
    }
    if m > n {
        // The source Nyquist mode is split evenly between ±N/2.
        spec[keep] = raw[keep] * (0.5 * ratio);
    }
    Ok(Field::from_half_spectrum(target, spec))
}

/// Sobolev index `s ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormSpec {
    s: f64,
}

impl NormSpec {
    pub fn new(s: f64) -> Result<Self> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::config(format!(
                "Sobolev index must be finite and non-negative, got {s}"
            )));
        }
        Ok(Self { s })
    }

    pub fn s(&self) -> f64 {
        self.s
    }
}

/// `‖f‖_{H^s} = ( (1/2L) Σ_m (1 + k_m²)^s |c_m|² )^{1/2}`.
pub fn sobolev_norm(f: &Field, spec: NormSpec) -> f64 {
    let grid = *f.grid();
    let n = grid.size();
    let weight = |k: f64| {
        if spec.s == 0.0 {
            1.0
        } else {
            (1.0 + k * k).powf(spec.s)
        }
    };
    let raw = f.half_spectrum();
    let mut sum = weight(0.0) * raw[0].norm_sqr() + weight(grid.half_wavenumber(n / 2)) * raw[n / 2].norm_sqr();
    for (i, c) in raw.iter().enumerate().take(n / 2).skip(1) {
        sum += 2.0 * weight(grid.half_wavenumber(i)) * c.norm_sqr();
    }
    (grid.spacing() / n as f64 * sum).sqrt()
}

/// `(Δx Σ_j f_j²)^{1/2}`.
pub fn l2_norm(f: &Field) -> f64 {
    (f.grid().spacing() * f.values().iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub fn linf_norm(f: &Field) -> f64 {
    f.values().iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
