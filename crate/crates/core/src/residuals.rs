//! PDE residuals of the approximate solutions and the packet commutator.
//!
//! For an ansatz `u_ap = U + u_h` the residual
//! `F = (∂_t + H∂ₓ²) u_ap + u_ap ∂ₓ u_ap` splits as
//!
//! ```text
//! F1 = H∂ₓ²U + U Uₓ                     (static low bump)
//! F2 = −cos Φ · ∂ₓ(A U φ_λ)              (transport of the envelope)
//! F3 = u_h ∂ₓ u_h                        (packet self-interaction)
//! F4 = −A [H∂ₓ², φ_λ] cos Φ              (dispersion commutator)
//! F5 = A φ_λ sin Φ (ω + λU)              (phase/transport balance)
//! ```
//!
//! Time derivatives are analytic. Terms in which `H∂ₓ²` hits the packet are
//! evaluated on the carrier frame: with `φ_λ cos Φ = Re(φ_λ e^{iΦ})`, the
//! operator acts on the envelope through the shifted symbol
//! `i(k+λ)|k+λ|`, and the `λ²` part that cancels against `∂_t u_h` is removed
//! from the symbol before any rounding happens.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::profiles::{
    low_bump, make_bump_pair, packet, packet_time_derivative, phase_cos_sin, refined_packet,
    scaled_profile, PacketSpec,
};
use crate::solver::Trajectory;
use crate::spectral::{
    apply_complex_multiplier, derivative, hilbert, hilbert_dxx, l2_norm, linf_norm, resample,
    Field, SpectralGrid,
};

/// `(k+λ)|k+λ| − λ²` written without cancellation for small `k`.
fn shifted_dispersion(k: f64, lambda: f64) -> f64 {
    if k + lambda >= 0.0 {
        k * (2.0 * lambda + k)
    } else {
        -(k + lambda).powi(2) - lambda * lambda
    }
}

/// `Re(e^{iΦ} · σ(D) env)` with `σ(k) = i·symbol(k)`.
fn carrier_frame(
    spec: &PacketSpec,
    env: &Field,
    t: f64,
    symbol: impl Fn(f64) -> f64,
) -> Field {
    let grid = *env.grid();
    let inner = apply_complex_multiplier(env, |k| Complex64::new(0.0, symbol(k)));
    let (cos, sin) = phase_cos_sin(spec, &grid, t);
    let values = (0..grid.size())
        .map(|j| cos[j] * inner[j].re - sin[j] * inner[j].im)
        .collect();
    Field::from_parts(grid, values)
}

/// `(∂_t + H∂ₓ²) u_h`, i.e. `−A Re(e^{iΦ} · i(ω + (k+λ)|k+λ| − λ²) φ_λ)`.
pub fn packet_linear_residual(spec: &PacketSpec, grid: SpectralGrid, t: f64) -> Field {
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    carrier_frame(spec, &env, t, |k| spec.omega + shifted_dispersion(k, spec.lambda))
        .scale(-spec.amplitude())
}

/// `F4 = −A [H∂ₓ², φ_λ] cos Φ`.
pub fn packet_commutator_term(spec: &PacketSpec, grid: SpectralGrid, t: f64) -> Field {
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    carrier_frame(spec, &env, t, |k| shifted_dispersion(k, spec.lambda)).scale(-spec.amplitude())
}

#[derive(Debug, Clone)]
pub struct Residual {
    pub total: Field,
    /// `None` where the ansatz removes the term (refined ansatz).
    pub f1: Option<Field>,
    pub f2: Field,
    pub f3: Field,
    pub f4: Field,
    pub f5: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualNorms {
    pub total: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    pub f5: f64,
    pub f5_linf: f64,
    /// `‖F − ΣF_i‖_∞ / max_i ‖F_i‖_∞`.
    pub sum_defect: f64,
}

impl Residual {
    pub fn parts(&self) -> Vec<&Field> {
        let mut parts: Vec<&Field> = self.f1.iter().collect();
        parts.extend([&self.f2, &self.f3, &self.f4, &self.f5]);
        parts
    }

    pub fn sum_of_parts(&self) -> Field {
        let mut acc = Field::zeros(*self.total.grid());
        for p in self.parts() {
            acc = acc.add(p).expect("same grid");
        }
        acc
    }

    pub fn norms(&self) -> ResidualNorms {
        let scale = self
            .parts()
            .iter()
            .map(|p| linf_norm(p))
            .fold(0.0, f64::max);
        let defect = linf_norm(&self.total.sub(&self.sum_of_parts()).expect("same grid"));
        ResidualNorms {
            total: l2_norm(&self.total),
            f1: self.f1.as_ref().map_or(0.0, l2_norm),
            f2: l2_norm(&self.f2),
            f3: l2_norm(&self.f3),
            f4: l2_norm(&self.f4),
            f5: l2_norm(&self.f5),
            f5_linf: linf_norm(&self.f5),
            sum_defect: if scale > 0.0 { defect / scale } else { defect },
        }
    }
}

fn product_derivative(a: &Field, b: &Field) -> Field {
    derivative(&a.mul(b).expect("same grid"), 1).expect("order 1")
}

fn self_transport(u: &Field) -> Field {
    u.mul(&derivative(u, 1).expect("order 1")).expect("same grid")
}

/// Shared part of both ansätze for a low-frequency field `low` sitting under
/// the packet: returns `(F2, F3, F4, F5, L u_h + ∂(low·u_h) + u_h ∂u_h)`.
fn packet_terms(
    spec: &PacketSpec,
    grid: SpectralGrid,
    t: f64,
    low: &Field,
    high: &Field,
) -> Result<(Field, Field, Field, Field, Field)> {
    let amp = spec.amplitude();
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    let (cos, sin) = phase_cos_sin(spec, &grid, t);
    let cos = Field::from_parts(grid, cos);
    let sin = Field::from_parts(grid, sin);

    let f2 = product_derivative(low, &env)
        .scale(-amp)
        .mul(&cos)?;
    let f3 = self_transport(high);
    let f4 = packet_commutator_term(spec, grid, t);
    let balance = low.map(|v| spec.omega + spec.lambda * v);
    let f5 = env.mul(&sin)?.mul(&balance)?.scale(amp);

    let combined = packet_linear_residual(spec, grid, t)
        .add(&product_derivative(low, high))?
        .add(&f3)?;
    Ok((f2, f3, f4, f5, combined))
}

/// Residual of `u_ap = U + u_h` at time `t`.
pub fn residual_ap1(spec: &PacketSpec, grid: SpectralGrid, t: f64) -> Result<Residual> {
    let u_low = low_bump(spec, grid)?;
    let high = packet(spec, grid, t)?;
    let f1 = hilbert_dxx(&u_low).add(&self_transport(&u_low))?;
    let (f2, f3, f4, f5, combined) = packet_terms(spec, grid, t, &u_low, &high)?;
    let total = f1.add(&combined)?;
    Ok(Residual {
        total,
        f1: Some(f1),
        f2,
        f3,
        f4,
        f5,
    })
}

/// Residual of `u_ap1` evaluated directly on the lab frame: analytic `∂_t`
/// plus spectral `H∂ₓ²` and `u ∂ₓ u` of the assembled field. Independent of
/// the carrier-frame bookkeeping; limited by the cancellation of the
/// `λ² A` terms.
pub fn direct_residual_ap1(spec: &PacketSpec, grid: SpectralGrid, t: f64) -> Result<Field> {
    let u = low_bump(spec, grid)?.add(&packet(spec, grid, t)?)?;
    packet_time_derivative(spec, grid, t)?
        .add(&hilbert_dxx(&u))?
        .add(&self_transport(&u))
}

/// Residual of the refined ansatz `u_low(t) − A φ_λ cos Θ`, with
/// `Θ = −λ²t + λx − λt·u_low(0,x) + α`.
///
/// `low` may live on a coarser grid of the same length; it is interpolated.
/// The term `(∂_t + H∂ₓ²)u_low + u_low ∂ₓu_low` vanishes for the exact
/// low-frequency solution and is left out (see [`low_defect`]).
///
/// On the support of `φ_λ`, `u_low(0) = −ω/λ`, so `Θ = Φ` there and the
/// packet coincides with `u_h`; the packet terms are therefore shared with
/// [`residual_ap1`], with `U` replaced by `u_low(t)`.
pub fn residual_ap2(
    spec: &PacketSpec,
    grid: SpectralGrid,
    t: f64,
    low: &Trajectory,
) -> Result<Residual> {
    let u_now = resample(low.require(t)?, grid)?;
    let u_init = resample(low.require(0.0)?, grid)?;
    let high = refined_packet(spec, t, &u_init)?;
    let (f2, f3, f4, f5, total) = packet_terms(spec, grid, t, &u_now, &high)?;
    Ok(Residual {
        total,
        f1: None,
        f2,
        f3,
        f4,
        f5,
    })
}

/// `‖(∂_t + H∂ₓ²)u + u uₓ‖_{L²}` of a computed trajectory at sample `t`, with
/// `∂_t` from second-order differences of the samples at `t ± h` (one-sided
/// `t, t+h, t+2h` when `t < h`).
pub fn low_defect(low: &Trajectory, t: f64, h: f64) -> Result<f64> {
    let u = low.require(t)?;
    let dt = if t - h >= -1e-12 {
        let (a, b) = (low.require(t + h)?, low.require((t - h).max(0.0))?);
        a.sub(b)?.scale(0.5 / h)
    } else {
        let (a, b) = (low.require(t + h)?, low.require(t + 2.0 * h)?);
        a.scale(4.0).sub(&u.scale(3.0))?.sub(b)?.scale(0.5 / h)
    };
    let defect = dt.add(&hilbert_dxx(u))?.add(&self_transport(u))?;
    Ok(l2_norm(&defect))
}

/// `[H, env] cos(λx + α) = H(env · cos(λx + α)) − env · sin(λx + α)`.
///
/// The carrier's Hilbert transform is its real-line value `sin(λx + α)`.
pub fn commutator_field(env: &Field, lambda: f64, alpha: f64) -> Field {
    let grid = *env.grid();
    let (cos, sin) = crate::profiles::carrier(lambda, &grid, |_| alpha);
    let modulated = Field::from_parts(
        grid,
        env.values().iter().zip(&cos).map(|(e, c)| e * c).collect(),
    );
    let h = hilbert(&modulated);
    let values = (0..grid.size())
        .map(|j| h.values()[j] - env.values()[j] * sin[j])
        .collect();
    Field::from_parts(grid, values)
}

/// Commutator for the packet envelope `φ_λ` at `t = 0`.
pub fn packet_commutator(spec: &PacketSpec, grid: SpectralGrid) -> Field {
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    commutator_field(&env, spec.lambda, spec.alpha)
}

/// Size of the rounding noise in [`packet_commutator`]: `ε · ‖φ_λ‖_{L²}`.
pub fn commutator_roundoff_floor(spec: &PacketSpec, grid: SpectralGrid) -> f64 {
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    f64::EPSILON * l2_norm(&env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{evolve_low, SolverConfig};

    fn policy_grid(spec: &PacketSpec) -> SpectralGrid {
        let l = (9.0 * spec.width()).ceil();
        let mut n = 1 << 12;
        while std::f64::consts::PI * n as f64 / (2.0 * l) < 4.0 * spec.lambda {
            n *= 2;
        }
        SpectralGrid::new(l, n).unwrap()
    }

    fn spec(lambda: f64, omega: f64) -> PacketSpec {
        PacketSpec::new(lambda, 0.5, 1.0, omega, 0.0).unwrap()
    }

    #[test]
    fn shifted_dispersion_matches_naive_form() {
        for &(k, l) in &[(0.3, 16.0), (-5.0, 16.0), (-20.0, 16.0), (1e-3, 64.0)] {
            let naive = (k + l) * f64::abs(k + l) - l * l;
            assert!((shifted_dispersion(k, l) - naive).abs() < 1e-10 * (1.0 + naive.abs()));
        }
    }

    #[test]
    fn carrier_frame_matches_lab_frame() {
        let s = spec(16.0, 1.0);
        let grid = policy_grid(&s);
        let t = 0.3;
        let env = scaled_profile(&make_bump_pair().phi, &s, grid);
        let lab = {
            let (cos, _) = phase_cos_sin(&s, &grid, t);
            hilbert_dxx(&env.mul(&Field::from_parts(grid, cos)).unwrap())
        };
        let lam = s.lambda;
        let frame = carrier_frame(&s, &env, t, |k| (k + lam) * (k + lam).abs());
        let err = linf_norm(&lab.sub(&frame).unwrap());
        assert!(err < 1e-10 * linf_norm(&lab), "err = {err}");
    }

    #[test]
    fn ap1_parts_sum_to_total_and_f5_vanishes() {
        for omega in [1.0, -1.0] {
            let s = spec(16.0, omega);
            let grid = policy_grid(&s);
            for t in [0.0, 0.5, 1.0] {
                let r = residual_ap1(&s, grid, t).unwrap();
                let n = r.norms();
                assert!(n.sum_defect < 1e-12, "sum defect {}", n.sum_defect);
                assert!(n.f5_linf < 1e-12 * s.amplitude(), "F5 = {}", n.f5_linf);
            }
        }
    }

    #[test]
    fn ap1_agrees_with_direct_evaluation() {
        let s = spec(16.0, 1.0);
        let grid = policy_grid(&s);
        let r = residual_ap1(&s, grid, 0.5).unwrap();
        let direct = direct_residual_ap1(&s, grid, 0.5).unwrap();
        let err = l2_norm(&r.total.sub(&direct).unwrap());
        assert!(err < 1e-8 * l2_norm(&r.total), "err = {err}");
    }

    #[test]
    fn zero_omega_kills_low_terms() {
        let s = spec(16.0, 0.0);
        let grid = policy_grid(&s);
        let r = residual_ap1(&s, grid, 0.5).unwrap();
        assert_eq!(linf_norm(r.f1.as_ref().unwrap()), 0.0);
        assert_eq!(linf_norm(&r.f2), 0.0);
        assert_eq!(linf_norm(&r.f5), 0.0);
        // On the plateau of φ_λ only F3 and F4 remain.
        let sum34 = r.f3.add(&r.f4).unwrap();
        let diff = r.total.sub(&sum34).unwrap();
        assert!(linf_norm(&diff) < 1e-12 * linf_norm(&sum34));
    }

    #[test]
    fn ap2_reduces_to_ap1_when_omega_is_zero() {
        let s = spec(16.0, 0.0);
        let grid = policy_grid(&s);
        let coarse = SpectralGrid::new(grid.half_length(), 1 << 12).unwrap();
        let low = evolve_low(&s, coarse, &SolverConfig::new(vec![0.0, 0.5])).unwrap();
        let a = residual_ap1(&s, grid, 0.5).unwrap();
        let b = residual_ap2(&s, grid, 0.5, &low.trajectory).unwrap();
        assert!(b.f1.is_none());
        assert!(linf_norm(&a.total.sub(&b.total).unwrap()) < 1e-14);
        assert!(residual_ap2(&s, grid, 0.25, &low.trajectory).is_err());
    }

    #[test]
    fn ap2_f5_tracks_low_drift() {
        let s = spec(16.0, 1.0);
        let grid = policy_grid(&s);
        let coarse = SpectralGrid::new(grid.half_length(), 1 << 12).unwrap();
        let low = evolve_low(&s, coarse, &SolverConfig::new(vec![0.0, 1.0])).unwrap();
        let r = residual_ap2(&s, grid, 1.0, &low.trajectory).unwrap();
        let n = r.norms();
        assert!(n.sum_defect < 1e-12);
        let drift = low.diagnostics[1].drift_l2;
        // |F5| ≤ A λ |u_low(t) − u_low(0)| pointwise.
        assert!(n.f5 <= s.amplitude() * s.lambda * drift * (1.0 + 1e-9));
        assert!(n.f5 > 0.0);
        let r1 = residual_ap1(&s, grid, 1.0).unwrap().norms();
        assert!(n.total < r1.total);
    }

    #[test]
    fn low_defect_is_small() {
        let s = spec(16.0, 1.0);
        let grid = SpectralGrid::new((9.0 * s.width()).ceil(), 1 << 12).unwrap();
        let h = 1e-3;
        let low = evolve_low(&s, grid, &SolverConfig::new(vec![0.0, h, 2.0 * h, 0.5 - h, 0.5, 0.5 + h])).unwrap();
        let scale = l2_norm(&crate::solver::pde_rhs(low.trajectory.require(0.5).unwrap()));
        let d = low_defect(&low.trajectory, 0.5, h).unwrap();
        assert!(d < 1e-4 * scale.max(1e-300) + 1e-14, "defect {d}, scale {scale}");
        assert!(low_defect(&low.trajectory, 0.0, h).unwrap() < 1e-4 * scale + 1e-14);
    }

    #[test]
    fn commutator_of_constant_envelope_vanishes() {
        let grid = SpectralGrid::new(100.0, 1 << 12).unwrap();
        let lambda = grid.wavenumber(300);
        let c = commutator_field(&Field::constant(grid, 2.0), lambda, 0.4);
        assert!(linf_norm(&c) < 1e-12);
    }

    #[test]
    fn commutator_decays_and_is_alpha_uniform() {
        let s = spec(8.0, 0.0);
        let grid = policy_grid(&s);
        let norms: Vec<f64> = [0.0, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2]
            .iter()
            .map(|&a| l2_norm(&packet_commutator(&s.with_alpha(a), grid)))
            .collect();
        let env_norm = l2_norm(&scaled_profile(&make_bump_pair().phi, &s, grid));
        for n in &norms {
            assert!(*n < 1e-8 * env_norm);
        }
    }
}
