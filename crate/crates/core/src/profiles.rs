//! Cutoff profiles, wave packets and the approximate solutions built from them.
//!
//! Notation: for a profile `f`, `f_λ(x) = f(x / λ^{1+δ})`. The packet is
//! `u_h = −A φ_λ cos Φ` with `A = λ^{−(1+δ)/2−s}` and
//! `Φ = −λ²t + λx + ωt + α`; the low bump is `U = −ω λ^{−1} φ̃_λ`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{Field, SpectralGrid};

/// `‖φ‖_{L²}` for the plateau-1/support-2 bump (40-digit quadrature).
pub const PHI_L2_NORM: f64 = 1.676_726_127_173_637;
/// `‖φ̃‖_{L²}` for the plateau-2/support-3 bump.
pub const PHI_TILDE_L2_NORM: f64 = 2.193_492_763_960_415;

fn g(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth step: 1 for `t ≤ 0`, 0 for `t ≥ 1`, `C^∞` in between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let a = g(1.0 - t);
        a / (a + g(t))
    }
}

/// Even bump equal to 1 on `|x| ≤ plateau` and 0 on `|x| ≥ support`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpProfile {
    plateau: f64,
    support: f64,
}

impl BumpProfile {
    pub fn new(plateau: f64, support: f64) -> Result<Self> {
        if !(plateau >= 0.0 && support > plateau && support.is_finite()) {
            return Err(Error::config(format!(
                "bump needs 0 <= plateau < support, got ({plateau}, {support})"
            )));
        }
        Ok(Self { plateau, support })
    }

    pub fn plateau(&self) -> f64 {
        self.plateau
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn eval(&self, x: f64) -> f64 {
        smooth_step((x.abs() - self.plateau) / (self.support - self.plateau))
    }

    /// `‖·‖_{L²}` by the trapezoid rule on `[0, support]` with `intervals`
    /// panels. The integrand is flat to all orders at the plateau and support
    /// edges, so the rule converges faster than any power of the step.
    pub fn l2_norm_quadrature(&self, intervals: usize) -> f64 {
        let h = self.support / intervals as f64;
        let mut sum = 0.5 * (self.eval(0.0).powi(2) + self.eval(self.support).powi(2));
        for i in 1..intervals {
            sum += self.eval(i as f64 * h).powi(2);
        }
        (2.0 * h * sum).sqrt()
    }
}

/// The cutoff pair: `φ` (plateau 1, support 2) and `φ̃` (plateau 2, support 3).
/// `φ̃ ≡ 1` on the support of `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpPair {
    pub phi: BumpProfile,
    pub phi_tilde: BumpProfile,
    pub phi_l2_norm: f64,
}

pub fn make_bump_pair() -> BumpPair {
    let phi = BumpProfile {
        plateau: 1.0,
        support: 2.0,
    };
    BumpPair {
        phi,
        phi_tilde: BumpProfile {
            plateau: 2.0,
            support: 3.0,
        },
        phi_l2_norm: phi.l2_norm_quadrature(1 << 14),
    }
}

/// One experiment point `(λ, δ, s, ω, α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacketSpec {
    pub lambda: f64,
    pub delta: f64,
    pub s: f64,
    pub omega: f64,
    pub alpha: f64,
}

impl PacketSpec {
    pub fn new(lambda: f64, delta: f64, s: f64, omega: f64, alpha: f64) -> Result<Self> {
        let spec = Self {
            lambda,
            delta,
            s,
            omega,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 8.0) {
            return Err(Error::config(format!(
                "lambda must be >= 8, got {}",
                self.lambda
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!(
                "delta must satisfy 0 < delta < 1, got {}",
                self.delta
            )));
        }
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(Error::config(format!("s must be > 0, got {}", self.s)));
        }
        if !self.omega.is_finite() || !self.alpha.is_finite() {
            return Err(Error::config("omega and alpha must be finite"));
        }
        Ok(())
    }

    /// Extra constraints of the nonlinear-interaction runs: `1 − s < δ < 1`
    /// and `|ω| ≤ factor · λ^{(1−δ)/2}`.
    pub fn validate_interaction(&self, omega_factor: f64) -> Result<()> {
        self.validate()?;
        if self.delta <= 1.0 - self.s {
            return Err(Error::config(format!(
                "requires 1 - s < delta < 1 (delta = {}, s = {})",
                self.delta, self.s
            )));
        }
        if self.omega_ratio() > omega_factor {
            return Err(Error::config(format!(
                "requires |omega| <= {omega_factor} * lambda^((1-delta)/2) (omega = {}, bound = {})",
                self.omega,
                omega_factor * self.lambda.powf(0.5 * (1.0 - self.delta))
            )));
        }
        Ok(())
    }

    pub fn with_omega(&self, omega: f64) -> Self {
        Self { omega, ..*self }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..*self }
    }

    /// Envelope length scale `λ^{1+δ}`.
    pub fn width(&self) -> f64 {
        self.lambda.powf(1.0 + self.delta)
    }

    /// Packet amplitude `λ^{−(1+δ)/2−s}`.
    pub fn amplitude(&self) -> f64 {
        self.lambda.powf(-0.5 * (1.0 + self.delta) - self.s)
    }

    /// `|ω| / λ^{(1−δ)/2}`.
    pub fn omega_ratio(&self) -> f64 {
        self.omega.abs() / self.lambda.powf(0.5 * (1.0 - self.delta))
    }
}

fn check_box(spec: &PacketSpec, grid: &SpectralGrid) -> Result<()> {
    let needed = 9.0 * spec.width();
    if grid.half_length() < needed * (1.0 - 1e-12) {
        return Err(Error::config(format!(
            "box half-length {} too small for lambda = {}: need L >= 9 lambda^(1+delta) = {needed}",
            grid.half_length(),
            spec.lambda
        )));
    }
    Ok(())
}

fn check_resolution(spec: &PacketSpec, grid: &SpectralGrid) -> Result<()> {
    check_box(spec, grid)?;
    if grid.max_wavenumber() < 4.0 * spec.lambda * (1.0 - 1e-12) {
        return Err(Error::config(format!(
            "grid under-resolves lambda = {}: pi/dx = {} < 4 lambda",
            spec.lambda,
            grid.max_wavenumber()
        )));
    }
    Ok(())
}

/// Samples of `profile(x / λ^{1+δ})`.
pub fn scaled_profile(profile: &BumpProfile, spec: &PacketSpec, grid: SpectralGrid) -> Field {
    let width = spec.width();
    Field::from_fn(grid, |x| profile.eval(x / width))
}

/// `U = −ω λ^{−1} φ̃_λ`.
pub fn low_bump(spec: &PacketSpec, grid: SpectralGrid) -> Result<Field> {
    check_box(spec, &grid)?;
    let pair = make_bump_pair();
    let c = -spec.omega / spec.lambda;
    Ok(scaled_profile(&pair.phi_tilde, spec, grid).scale(c))
}

/// Samples of `Φ = −λ²t + λx + ωt + α`.
pub fn phase(spec: &PacketSpec, grid: SpectralGrid, t: f64) -> Field {
    let offset = (spec.omega - spec.lambda * spec.lambda) * t + spec.alpha;
    Field::from_fn(grid, |x| spec.lambda * x + offset)
}

/// `(cos θ_j, sin θ_j)` for `θ_j = λ x_j + offsets_j`, split so the large
/// carrier angle and the slow offset are reduced separately.
pub(crate) fn carrier(
    lambda: f64,
    grid: &SpectralGrid,
    offsets: impl Fn(usize) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = grid.size();
    let mut cos = Vec::with_capacity(n);
    let mut sin = Vec::with_capacity(n);
    for j in 0..n {
        let (sa, ca) = (lambda * grid.node(j)).sin_cos();
        let (sb, cb) = offsets(j).sin_cos();
        cos.push(ca * cb - sa * sb);
        sin.push(sa * cb + ca * sb);
    }
    (cos, sin)
}

/// `(cos Φ, sin Φ)` on the grid.
pub fn phase_cos_sin(spec: &PacketSpec, grid: &SpectralGrid, t: f64) -> (Vec<f64>, Vec<f64>) {
    let offset = (spec.omega - spec.lambda * spec.lambda) * t + spec.alpha;
    carrier(spec.lambda, grid, |_| offset)
}

/// Samples of `φ_λ(x) cos(λx + α)`.
pub fn modulated_bump(spec: &PacketSpec, grid: SpectralGrid) -> Field {
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    let (cos, _) = carrier(spec.lambda, &grid, |_| spec.alpha);
    env.zip_map(&Field::from_parts(grid, cos), |a, b| a * b)
        .expect("same grid")
}

/// High-frequency packet `u_h = −A φ_λ cos Φ`.
pub fn packet(spec: &PacketSpec, grid: SpectralGrid, t: f64) -> Result<Field> {
    check_resolution(spec, &grid)?;
    let amp = spec.amplitude();
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    let (cos, _) = phase_cos_sin(spec, &grid, t);
    let values = env.values().iter().zip(&cos).map(|(e, c)| -amp * e * c).collect();
    Ok(Field::from_parts(grid, values))
}

/// `∂_t u_h = −A φ_λ (λ² − ω) sin Φ`.
pub fn packet_time_derivative(spec: &PacketSpec, grid: SpectralGrid, t: f64) -> Result<Field> {
    check_resolution(spec, &grid)?;
    let amp = spec.amplitude();
    let rate = spec.lambda * spec.lambda - spec.omega;
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    let (_, sin) = phase_cos_sin(spec, &grid, t);
    let values = env
        .values()
        .iter()
        .zip(&sin)
        .map(|(e, s)| -amp * rate * e * s)
        .collect();
    Ok(Field::from_parts(grid, values))
}

/// First ansatz `U + u_h`. Its time derivative is [`packet_time_derivative`].
pub fn assemble_ap1(spec: &PacketSpec, grid: SpectralGrid, t: f64) -> Result<Field> {
    low_bump(spec, grid)?.add(&packet(spec, grid, t)?)
}

/// Initial datum `−ω λ^{−1} φ̃_λ − A φ_λ cos(λx + α)` of the interaction runs.
pub fn interaction_initial_data(spec: &PacketSpec, grid: SpectralGrid) -> Result<Field> {
    assemble_ap1(spec, grid, 0.0)
}

/// Phase of the refined ansatz, `Θ = −λ²t + λx − λt·u_low(0,x) + α`, as
/// `(cos Θ, sin Θ)`.
fn refined_phase(
    spec: &PacketSpec,
    t: f64,
    u_low_init: &Field,
) -> (Vec<f64>, Vec<f64>) {
    let base = -spec.lambda * spec.lambda * t + spec.alpha;
    let init = u_low_init.values();
    carrier(spec.lambda, u_low_init.grid(), |j| {
        base - spec.lambda * t * init[j]
    })
}

/// Packet part of the refined ansatz, `−A φ_λ cos Θ`.
pub fn refined_packet(spec: &PacketSpec, t: f64, u_low_init: &Field) -> Result<Field> {
    let grid = *u_low_init.grid();
    check_resolution(spec, &grid)?;
    let amp = spec.amplitude();
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    let (cos, _) = refined_phase(spec, t, u_low_init);
    let values = env.values().iter().zip(&cos).map(|(e, c)| -amp * e * c).collect();
    Ok(Field::from_parts(grid, values))
}

/// Time derivative of [`refined_packet`],
/// `−A φ_λ (λ² + λ u_low(0,x)) sin Θ`.
pub fn refined_packet_time_derivative(
    spec: &PacketSpec,
    t: f64,
    u_low_init: &Field,
) -> Result<Field> {
    let grid = *u_low_init.grid();
    check_resolution(spec, &grid)?;
    let amp = spec.amplitude();
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    let (_, sin) = refined_phase(spec, t, u_low_init);
    let init = u_low_init.values();
    let values = (0..grid.size())
        .map(|j| -amp * env.values()[j] * (spec.lambda * spec.lambda + spec.lambda * init[j]) * sin[j])
        .collect();
    Ok(Field::from_parts(grid, values))
}

/// Refined ansatz `u_low(t) − A φ_λ cos Θ`.
pub fn assemble_ap2(
    spec: &PacketSpec,
    t: f64,
    u_low_now: &Field,
    u_low_init: &Field,
) -> Result<Field> {
    u_low_now.grid().check_same(u_low_init.grid())?;
    u_low_now.add(&refined_packet(spec, t, u_low_init)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{l2_norm, linf_norm};

    fn spec(lambda: f64, omega: f64) -> PacketSpec {
        PacketSpec::new(lambda, 0.5, 1.0, omega, 0.0).unwrap()
    }

    /// Policy grid: `L = ⌈9λ^{1+δ}⌉`, smallest power of two with `π/Δx ≥ 4λ`.
    fn grid_for(spec: &PacketSpec) -> SpectralGrid {
        let l = (9.0 * spec.width()).ceil();
        let mut n = 1 << 12;
        while std::f64::consts::PI * n as f64 / (2.0 * l) < 4.0 * spec.lambda {
            n *= 2;
        }
        SpectralGrid::new(l, n).unwrap()
    }

    #[test]
    fn bump_plateau_and_support() {
        let pair = make_bump_pair();
        assert_eq!(pair.phi.eval(0.0), 1.0);
        assert_eq!(pair.phi.eval(1.0), 1.0);
        assert_eq!(pair.phi.eval(2.5), 0.0);
        assert_eq!(pair.phi.eval(-2.5), 0.0);
        assert_eq!(pair.phi_tilde.eval(2.0), 1.0);
        assert_eq!(pair.phi_tilde.eval(3.0), 0.0);
        assert!((pair.phi.eval(1.5) - 0.5).abs() < 1e-15);
        for i in 0..=4000 {
            let x = -4.0 + i as f64 * 0.002;
            let (p, pt) = (pair.phi.eval(x), pair.phi_tilde.eval(x));
            assert!((0.0..=1.0).contains(&p));
            assert!((p * pt - p).abs() < 1e-15);
        }
    }

    #[test]
    fn bump_norm_matches_frozen_constant() {
        let pair = make_bump_pair();
        assert!((pair.phi_l2_norm - PHI_L2_NORM).abs() < 1e-14);
        assert!((pair.phi.l2_norm_quadrature(1 << 10) - PHI_L2_NORM).abs() < 1e-13);
        assert!((pair.phi_tilde.l2_norm_quadrature(1 << 14) - PHI_TILDE_L2_NORM).abs() < 1e-14);
        assert!(PHI_L2_NORM > 2f64.sqrt() && PHI_L2_NORM < 2.0);
    }

    #[test]
    fn spec_validation() {
        assert!(PacketSpec::new(4.0, 0.5, 1.0, 1.0, 0.0).is_err());
        assert!(PacketSpec::new(16.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(PacketSpec::new(16.0, 0.5, 0.0, 1.0, 0.0).is_err());
        let s = PacketSpec::new(16.0, 0.3, 0.5, 1.0, 0.0).unwrap();
        let err = s.validate_interaction(1.0).unwrap_err().to_string();
        assert!(err.contains("1 - s < delta < 1"), "{err}");
        let fast = spec(16.0, 3.0);
        assert!(fast.validate_interaction(1.0).is_err());
        assert!(spec(16.0, 1.0).validate_interaction(1.0).is_ok());
        assert!((spec(16.0, 1.0).omega_ratio() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn low_bump_values() {
        let s = spec(16.0, 1.0);
        let grid = grid_for(&s);
        let u = low_bump(&s, grid).unwrap();
        assert!((linf_norm(&u) - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(linf_norm(&low_bump(&s.with_omega(0.0), grid).unwrap()), 0.0);
        let expected = 16f64.powf(-1.0 + 0.75) * PHI_TILDE_L2_NORM;
        assert!((l2_norm(&u) - expected).abs() < 1e-10 * expected);
        let small = SpectralGrid::new(100.0, 4096).unwrap();
        assert!(matches!(low_bump(&s, small), Err(Error::Config(_))));
    }

    #[test]
    fn low_bump_scaling_covariance() {
        let s = spec(16.0, 1.0);
        let grid = SpectralGrid::new(576.0, 1 << 12).unwrap();
        let u = low_bump(&s, grid).unwrap();
        let pair = make_bump_pair();
        for (j, x) in grid.nodes().enumerate() {
            let y = x / s.width();
            assert!((u.values()[j] + pair.phi_tilde.eval(y) / 16.0).abs() < 1e-14);
        }
    }

    #[test]
    fn phase_properties() {
        let s = spec(16.0, 1.0);
        let grid = grid_for(&s);
        let p0 = phase(&s, grid, 0.0);
        for (j, x) in grid.nodes().enumerate() {
            assert_eq!(p0.values()[j], 16.0 * x);
        }
        let plus = phase(&s, grid, 0.7);
        let minus = phase(&s.with_omega(-1.0), grid, 0.7);
        for (a, b) in plus.values().iter().zip(minus.values()) {
            assert!((a - b - 1.4).abs() < 1e-9);
        }
    }

    #[test]
    fn packet_bounds_and_norm() {
        let s = spec(32.0, 1.0);
        let grid = grid_for(&s);
        let u = packet(&s, grid, 0.3).unwrap();
        assert!(linf_norm(&u) <= s.amplitude() * (1.0 + 1e-15));
        // ‖u_h‖_{L²} ≈ λ^{−s}‖φ‖/√2 by averaging cos² over the carrier.
        let expected = 32f64.powf(-1.0) * PHI_L2_NORM / 2f64.sqrt();
        assert!((l2_norm(&u) - expected).abs() < 1e-3 * expected);
        let coarse = SpectralGrid::new(grid.half_length(), 1 << 12).unwrap();
        assert!(packet(&s, coarse, 0.0).is_err());
    }

    #[test]
    fn packet_time_derivative_matches_difference_quotient() {
        let s = spec(16.0, 1.0);
        let grid = grid_for(&s);
        let (t, h) = (0.4, 1e-5);
        let dt = packet_time_derivative(&s, grid, t).unwrap();
        let fd = packet(&s, grid, t + h)
            .unwrap()
            .sub(&packet(&s, grid, t - h).unwrap())
            .unwrap()
            .scale(0.5 / h);
        let err = dt.sub(&fd).unwrap();
        assert!(linf_norm(&err) < 1e-5 * linf_norm(&dt));
    }

    #[test]
    fn ap1_reductions() {
        let s = spec(16.0, 1.0);
        let grid = grid_for(&s);
        let free = s.with_omega(0.0);
        let a = assemble_ap1(&free, grid, 0.5).unwrap();
        let p = packet(&free, grid, 0.5).unwrap();
        assert_eq!(a.values(), p.values());
        let d0 = interaction_initial_data(&s, grid).unwrap();
        let a0 = assemble_ap1(&s, grid, 0.0).unwrap();
        assert_eq!(d0.values(), a0.values());
    }

    #[test]
    fn ap2_reductions() {
        let s = spec(16.0, 1.0);
        let grid = grid_for(&s);
        let u_low = low_bump(&s, grid).unwrap();
        let at0 = assemble_ap2(&s, 0.0, &u_low, &u_low).unwrap();
        let d0 = interaction_initial_data(&s, grid).unwrap();
        let diff = at0.sub(&d0).unwrap();
        assert!(linf_norm(&diff) < 1e-15);

        // On supp φ_λ the refined phase equals Φ.
        let t = 0.8;
        let ap1_packet = packet(&s, grid, t).unwrap();
        let ap2_packet = refined_packet(&s, t, &u_low).unwrap();
        let diff = ap1_packet.sub(&ap2_packet).unwrap();
        assert!(linf_norm(&diff) < 1e-14 * s.amplitude() * 1e2);

        let free = s.with_omega(0.0);
        let zero = Field::zeros(grid);
        let a = assemble_ap1(&free, grid, t).unwrap();
        let b = assemble_ap2(&free, t, &zero, &zero).unwrap();
        assert!(linf_norm(&a.sub(&b).unwrap()) < 1e-13);

        let other = SpectralGrid::new(grid.half_length(), grid.size() * 2).unwrap();
        assert!(assemble_ap2(&s, t, &u_low, &Field::zeros(other)).is_err());
    }
}
