//! Parameter ladders, scaling fits and verdicts.
//!
//! Each experiment produces [`RunRecord`] rows (the CSV contract) and a list
//! of [`Verdict`]s computed from those rows only, so every verdict number can
//! be traced back to a CSV line.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{
    carrier, make_bump_pair, modulated_bump, packet, scaled_profile, interaction_initial_data,
    PacketSpec, PHI_L2_NORM,
};
use crate::residuals::{
    commutator_roundoff_floor, low_defect, packet_commutator, residual_ap1, residual_ap2,
};
use crate::solver::{evolve, evolve_low, SolverConfig, Trajectory};
use crate::spectral::{
    apply_multiplier, l2_norm, linf_norm, sobolev_norm, Field, NormSpec, SpectralGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    HsnormLimit,
    Commutator,
    Residual,
    Ulow,
    AnsatzError,
    Separation,
    SolitonCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::HsnormLimit,
        Experiment::Commutator,
        Experiment::Residual,
        Experiment::Ulow,
        Experiment::AnsatzError,
        Experiment::Separation,
        Experiment::SolitonCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::HsnormLimit => "hsnorm-limit",
            Experiment::Commutator => "commutator",
            Experiment::Residual => "residual",
            Experiment::Ulow => "ulow",
            Experiment::AnsatzError => "ansatz-error",
            Experiment::Separation => "separation",
            Experiment::SolitonCheck => "soliton-check",
        }
    }

    /// Whether the experiment needs the nonlinear-interaction constraints.
    pub fn is_interaction(self) -> bool {
        matches!(self, Experiment::AnsatzError | Experiment::Separation)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                Error::config(format!(
                    "unknown experiment '{s}' (expected one of: {}, all)",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ansatz {
    Ap1,
    Ap2,
}

impl Ansatz {
    pub fn name(self) -> &'static str {
        match self {
            Ansatz::Ap1 => "ap1",
            Ansatz::Ap2 => "ap2",
        }
    }
}

/// Verdict thresholds. Names double as `--tol-<name>` flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub hsnorm_limit: f64,
    pub hsnorm_alpha: f64,
    pub commutator_slope: f64,
    pub commutator_alpha: f64,
    pub residual_slope: f64,
    pub residual_f5: f64,
    pub residual_sum: f64,
    pub ulow_slope: f64,
    pub ulow_constant: f64,
    pub ansatz_constant: f64,
    pub separation_ratio: f64,
    pub separation_slope: f64,
    pub uniform_bound: f64,
    pub omega_ratio: f64,
    pub soliton_error: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hsnorm_limit: 0.02,
            hsnorm_alpha: 0.01,
            commutator_slope: -4.0,
            commutator_alpha: 0.05,
            residual_slope: 0.3,
            residual_f5: 1e-12,
            residual_sum: 1e-12,
            ulow_slope: 0.2,
            ulow_constant: 0.5,
            ansatz_constant: 0.5,
            separation_ratio: 0.2,
            separation_slope: 0.2,
            uniform_bound: 0.1,
            omega_ratio: 1.0,
            soliton_error: 1e-3,
        }
    }
}

impl Tolerances {
    pub const NAMES: [&'static str; 15] = [
        "hsnorm-limit",
        "hsnorm-alpha",
        "commutator-slope",
        "commutator-alpha",
        "residual-slope",
        "residual-f5",
        "residual-sum",
        "ulow-slope",
        "ulow-constant",
        "ansatz-constant",
        "separation-ratio",
        "separation-slope",
        "uniform-bound",
        "omega-ratio",
        "soliton-error",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "hsnorm-limit" => &mut self.hsnorm_limit,
            "hsnorm-alpha" => &mut self.hsnorm_alpha,
            "commutator-slope" => &mut self.commutator_slope,
            "commutator-alpha" => &mut self.commutator_alpha,
            "residual-slope" => &mut self.residual_slope,
            "residual-f5" => &mut self.residual_f5,
            "residual-sum" => &mut self.residual_sum,
            "ulow-slope" => &mut self.ulow_slope,
            "ulow-constant" => &mut self.ulow_constant,
            "ansatz-constant" => &mut self.ansatz_constant,
            "separation-ratio" => &mut self.separation_ratio,
            "separation-slope" => &mut self.separation_slope,
            "uniform-bound" => &mut self.uniform_bound,
            "omega-ratio" => &mut self.omega_ratio,
            "soliton-error" => &mut self.soliton_error,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::config(format!("tolerance {name} must be finite")));
        }
        let slot = self
            .slot(name)
            .ok_or_else(|| Error::config(format!("unknown tolerance '{name}'")))?;
        *slot = value;
        Ok(())
    }
}

/// Grid selection: `L = ⌈9 λ^{1+δ}⌉` and the smallest power of two `N ≥ 2^12`
/// with `π/Δx ≥ 4λ`, unless overridden. The low-frequency solution runs on
/// its own grid of the same length with `low_size` nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPolicy {
    pub half_length: Option<f64>,
    pub size: Option<usize>,
    pub min_size: usize,
    pub low_size: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            half_length: None,
            size: None,
            min_size: 1 << 12,
            low_size: 1 << 13,
        }
    }
}

impl GridPolicy {
    pub fn half_length_for(&self, spec: &PacketSpec) -> f64 {
        self.half_length
            .unwrap_or_else(|| (9.0 * spec.width()).ceil())
    }

    pub fn packet_grid(&self, spec: &PacketSpec) -> Result<SpectralGrid> {
        let l = self.half_length_for(spec);
        let n = match self.size {
            Some(n) => n,
            None => {
                let mut n = self.min_size;
                while PI * n as f64 / (2.0 * l) < 4.0 * spec.lambda {
                    n *= 2;
                }
                n
            }
        };
        SpectralGrid::new(l, n)
    }

    pub fn low_grid(&self, spec: &PacketSpec) -> Result<SpectralGrid> {
        SpectralGrid::new(self.half_length_for(spec), self.low_size)
    }
}

/// Least-squares fit of `log q` against `log λ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

pub fn fit_slope(lambdas: &[f64], quantities: &[f64]) -> Result<SlopeFit> {
    if lambdas.len() != quantities.len() {
        return Err(Error::config("slope fit needs matching lambda and quantity lists"));
    }
    if lambdas.len() < 3 {
        return Err(Error::config(format!(
            "slope fit needs at least 3 points, got {}",
            lambdas.len()
        )));
    }
    if let Some(q) = quantities.iter().find(|q| !(q.is_finite() && **q > 0.0)) {
        return Err(Error::config(format!(
            "slope fit needs positive quantities, got {q}"
        )));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::config(format!("slope fit needs positive lambdas, got {l}")));
    }
    let points: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(quantities)
        .map(|(l, q)| (l.ln(), q.ln()))
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::config("slope fit needs distinct lambdas"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(SlopeFit {
        points,
        slope,
        intercept,
        residual,
    })
}

/// `log(q₂/q₁) / log(λ₂/λ₁)`.
pub fn local_slope(l1: f64, q1: f64, l2: f64, q2: f64) -> f64 {
    (q2 / q1).ln() / (l2 / l1).ln()
}

/// One CSV row: text labels first, then numbers, in column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub labels: Vec<(&'static str, String)>,
    pub values: Vec<(&'static str, f64)>,
}

impl RunRecord {
    fn new(values: Vec<(&'static str, f64)>) -> Self {
        Self {
            labels: Vec::new(),
            values,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    pub fn label(&self, name: &str) -> Option<&str> {
        self.labels
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| v.as_str())
    }

    fn value(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("record has no column {name}"))
    }

    pub fn columns(&self) -> Vec<&'static str> {
        self.labels
            .iter()
            .map(|(k, _)| *k)
            .chain(self.values.iter().map(|(k, _)| *k))
            .collect()
    }
}

/// Grid, solver and timing information for one evaluated ladder point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointInfo {
    pub label: String,
    pub half_length: f64,
    pub size: usize,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Verdict {
    fn within(criterion: &str, measured: f64, target: f64, tolerance: f64, detail: String) -> Self {
        Self {
            criterion: criterion.to_string(),
            passed: (measured - target).abs() <= tolerance,
            measured,
            target,
            tolerance,
            detail,
        }
    }

    fn at_most(criterion: &str, measured: f64, bound: f64, detail: String) -> Self {
        Self {
            criterion: criterion.to_string(),
            passed: measured <= bound,
            measured,
            target: bound,
            tolerance: 0.0,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub experiment: Experiment,
    pub records: Vec<RunRecord>,
    pub points: Vec<PointInfo>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// Resolved parameters of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub lambdas: Vec<f64>,
    pub delta: f64,
    pub s: f64,
    pub omega: f64,
    pub alphas: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub ansatz: Vec<Ansatz>,
    pub grid: GridPolicy,
    pub dt: Option<f64>,
    pub tolerances: Tolerances,
    /// Step used for the finite-difference defect of the low solution.
    pub defect_step: f64,
    pub soliton_speed: f64,
    pub soliton_half_length: f64,
    pub soliton_size: usize,
}

impl Params {
    /// Reference point `δ = ½, s = 1, ω = 1` with the ladder and time grid
    /// each experiment is designed for.
    pub fn reference(experiment: Experiment) -> Self {
        let lambdas = match experiment {
            Experiment::AnsatzError | Experiment::Separation => vec![16.0, 32.0, 64.0],
            _ => vec![16.0, 32.0, 64.0, 128.0],
        };
        let t_grid = match experiment {
            Experiment::Residual => vec![0.0, 0.5, 1.0],
            Experiment::SolitonCheck => vec![0.0, 0.5, 1.0],
            _ => vec![0.0, 0.25, 0.5, 0.75, 1.0],
        };
        Self {
            lambdas,
            delta: 0.5,
            s: 1.0,
            omega: 1.0,
            alphas: vec![0.0, FRAC_PI_4, FRAC_PI_2],
            t_grid,
            ansatz: vec![Ansatz::Ap1, Ansatz::Ap2],
            grid: GridPolicy::default(),
            dt: None,
            tolerances: Tolerances::default(),
            defect_step: 1e-3,
            soliton_speed: 1.0,
            soliton_half_length: 512.0,
            soliton_size: 1 << 15,
        }
    }

    pub fn spec(&self, lambda: f64, omega: f64, alpha: f64) -> Result<PacketSpec> {
        PacketSpec::new(lambda, self.delta, self.s, omega, alpha)
    }

    /// Checks every ladder point against the experiment's preconditions.
    pub fn validate(&self, experiment: Experiment) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::config("lambda ladder must not be empty"));
        }
        if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("lambda ladder must be strictly increasing"));
        }
        if self.t_grid.is_empty()
            || self.t_grid.windows(2).any(|w| w[0] >= w[1])
            || self.t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite()))
        {
            return Err(Error::config(
                "t-grid must be a non-empty, strictly increasing list of times >= 0",
            ));
        }
        if self.alphas.is_empty() {
            return Err(Error::config("alpha list must not be empty"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config(format!("dt must be positive, got {dt}")));
            }
        }
        if self.defect_step.is_nan() || self.defect_step <= 0.0 {
            return Err(Error::config("defect step must be positive"));
        }
        if experiment == Experiment::SolitonCheck {
            if !(self.soliton_speed > 0.0 && self.soliton_speed.is_finite()) {
                return Err(Error::config("soliton speed must be positive"));
            }
            SpectralGrid::new(self.soliton_half_length, self.soliton_size)?;
            return Ok(());
        }
        let needs_slopes = matches!(
            experiment,
            Experiment::Commutator | Experiment::Residual | Experiment::Ulow
        );
        if needs_slopes && self.lambdas.len() < 3 {
            return Err(Error::config(format!(
                "{experiment} fits scaling slopes and needs at least 3 lambdas"
            )));
        }
        for &lambda in &self.lambdas {
            let spec = self.spec(lambda, self.omega, self.alphas[0])?;
            if experiment.is_interaction() {
                spec.validate_interaction(self.tolerances.omega_ratio)?;
                spec.with_omega(-self.omega)
                    .validate_interaction(self.tolerances.omega_ratio)?;
            }
            let grid = self.grid.packet_grid(&spec)?;
            if grid.half_length() < 9.0 * spec.width() * (1.0 - 1e-12) {
                return Err(Error::config(format!(
                    "L = {} too small for lambda = {lambda}: need L >= 9 lambda^(1+delta)",
                    grid.half_length()
                )));
            }
            if experiment != Experiment::Ulow && grid.max_wavenumber() < 4.0 * lambda {
                return Err(Error::config(format!(
                    "N = {} under-resolves lambda = {lambda} (pi/dx must be >= 4 lambda)",
                    grid.size()
                )));
            }
        }
        Ok(())
    }

    fn solver(&self, times: Vec<f64>) -> SolverConfig {
        let cfg = SolverConfig::new(times);
        match self.dt {
            Some(dt) => cfg.with_dt(dt),
            None => cfg,
        }
    }

    fn largest_lambda(&self) -> f64 {
        *self.lambdas.last().expect("validated ladder")
    }
}

fn point(label: String, grid: &SpectralGrid, start: Instant) -> PointInfo {
    PointInfo {
        label,
        half_length: grid.half_length(),
        size: grid.size(),
        dt: None,
        steps: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

fn solve_point(label: String, grid: &SpectralGrid, traj: &Trajectory, start: Instant) -> PointInfo {
    PointInfo {
        dt: Some(traj.dt),
        steps: Some(traj.steps),
        ..point(label, grid, start)
    }
}

fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    if max == 0.0 {
        0.0
    } else {
        (max - min) / max
    }
}

/// Largest `|C_i − mean| / mean` over a set of constants.
fn mean_deviation(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values
        .iter()
        .map(|v| (v - mean).abs() / mean)
        .fold(0.0, f64::max)
}

fn select<'a>(records: &'a [RunRecord], pred: impl Fn(&RunRecord) -> bool + 'a) -> Vec<&'a RunRecord> {
    records.iter().filter(|r| pred(r)).collect()
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

// ---------------------------------------------------------------------------
// Normalised packet norm

pub fn exp_hsnorm_limit(p: &Params) -> Result<ExperimentOutput> {
    p.validate(Experiment::HsnormLimit)?;
    let target = PHI_L2_NORM / 2f64.sqrt();
    let mut s_values = vec![0.0];
    if p.s != 0.0 {
        s_values.push(p.s);
    }
    let mut records = Vec::new();
    let mut points = Vec::new();
    for &lambda in &p.lambdas {
        for &alpha in &p.alphas {
            let start = Instant::now();
            let spec = p.spec(lambda, 0.0, alpha)?;
            let grid = p.grid.packet_grid(&spec)?;
            let field = modulated_bump(&spec, grid);
            for &s in &s_values {
                let norm = sobolev_norm(&field, NormSpec::new(s)?);
                let normalized = lambda.powf(-0.5 * (1.0 + p.delta) - s) * norm;
                records.push(RunRecord::new(vec![
                    ("lambda", lambda),
                    ("delta", p.delta),
                    ("s", s),
                    ("alpha", alpha),
                    ("L", grid.half_length()),
                    ("N", grid.size() as f64),
                    ("norm_Hs", norm),
                    ("normalized", normalized),
                    ("target", target),
                    ("ratio", normalized / target),
                ]));
            }
            points.push(point(format!("lambda={lambda} alpha={alpha}"), &grid, start));
        }
    }
    let top = p.largest_lambda();
    let mut worst = 0.0f64;
    let mut spread = 0.0f64;
    for &s in &s_values {
        let rows = select(&records, |r| same(r.value("lambda"), top) && same(r.value("s"), s));
        for r in &rows {
            worst = worst.max((r.value("ratio") - 1.0).abs());
        }
        let norms: Vec<f64> = rows.iter().map(|r| r.value("normalized")).collect();
        spread = spread.max(relative_spread(&norms));
    }
    let verdicts = vec![
        Verdict::at_most(
            "hsnorm-limit",
            worst,
            p.tolerances.hsnorm_limit,
            format!("max |normalized/(|phi|_L2/sqrt2) - 1| at lambda = {top} over s in {s_values:?} and all alpha"),
        ),
        Verdict::at_most(
            "hsnorm-alpha",
            spread,
            p.tolerances.hsnorm_alpha,
            format!("max relative spread over alpha at lambda = {top}"),
        ),
    ];
    Ok(ExperimentOutput {
        experiment: Experiment::HsnormLimit,
        records,
        points,
        verdicts,
    })
}

// ---------------------------------------------------------------------------
// Commutator decay

pub fn exp_commutator_decay(p: &Params) -> Result<ExperimentOutput> {
    p.validate(Experiment::Commutator)?;
    let mut records = Vec::new();
    let mut points = Vec::new();
    for &lambda in &p.lambdas {
        for &alpha in &p.alphas {
            let start = Instant::now();
            let spec = p.spec(lambda, 0.0, alpha)?;
            let grid = p.grid.packet_grid(&spec)?;
            let norm = l2_norm(&packet_commutator(&spec, grid));
            let floor = commutator_roundoff_floor(&spec, grid);
            records.push(RunRecord::new(vec![
                ("lambda", lambda),
                ("delta", p.delta),
                ("alpha", alpha),
                ("L", grid.half_length()),
                ("N", grid.size() as f64),
                ("norm_L2", norm),
                ("roundoff_floor", floor),
                ("norm_over_floor", norm / floor),
            ]));
            points.push(point(format!("lambda={lambda} alpha={alpha}"), &grid, start));
        }
    }

    // Local slopes between consecutive ladder points, per alpha.
    let mut slopes_by_alpha: Vec<Vec<(f64, f64)>> = Vec::new();
    for &alpha in &p.alphas {
        let rows = select(&records, |r| same(r.value("alpha"), alpha));
        let slopes = rows
            .windows(2)
            .map(|w| {
                (
                    w[1].value("lambda"),
                    local_slope(
                        w[0].value("lambda"),
                        w[0].value("norm_L2"),
                        w[1].value("lambda"),
                        w[1].value("norm_L2"),
                    ),
                )
            })
            .collect();
        slopes_by_alpha.push(slopes);
    }
    let checkpoint = p
        .lambdas
        .iter()
        .cloned()
        .find(|l| *l >= 64.0)
        .unwrap_or(p.largest_lambda());
    let slope_at = |slopes: &[(f64, f64)], lambda: f64| {
        slopes.iter().find(|(l, _)| same(*l, lambda)).map(|(_, s)| *s)
    };
    let mut worst_checkpoint = f64::NEG_INFINITY;
    let mut still_decreasing = true;
    for slopes in &slopes_by_alpha {
        if let Some(s) = slope_at(slopes, checkpoint) {
            worst_checkpoint = worst_checkpoint.max(s);
        }
        for w in slopes.windows(2) {
            if w[0].0 >= checkpoint && w[1].1 >= w[0].1 {
                still_decreasing = false;
            }
        }
    }
    let last: Vec<f64> = slopes_by_alpha.iter().filter_map(|s| s.last().map(|x| x.1)).collect();
    let mut alpha_spread = 0.0f64;
    for &lambda in &p.lambdas {
        let norms: Vec<f64> = select(&records, |r| same(r.value("lambda"), lambda))
            .iter()
            .map(|r| r.value("norm_L2"))
            .collect();
        alpha_spread = alpha_spread.max(relative_spread(&norms));
    }
    let verdicts = vec![
        Verdict::at_most(
            "commutator-slope",
            worst_checkpoint,
            p.tolerances.commutator_slope,
            format!("max over alpha of the local log-log slope ending at lambda = {checkpoint}"),
        ),
        Verdict {
            criterion: "commutator-still-decreasing".into(),
            passed: still_decreasing,
            measured: last.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            target: worst_checkpoint,
            tolerance: 0.0,
            detail: format!("local slopes beyond lambda = {checkpoint} must keep decreasing; measured = last local slope"),
        },
        Verdict::at_most(
            "commutator-alpha",
            alpha_spread,
            p.tolerances.commutator_alpha,
            "max relative spread of the L2 norm over alpha at fixed lambda".into(),
        ),
    ];
    Ok(ExperimentOutput {
        experiment: Experiment::Commutator,
        records,
        points,
        verdicts,
    })
}

// ---------------------------------------------------------------------------
// Residual scaling

/// Sample times for the low solution: the residual times plus the
/// neighbours needed by the finite-difference defect.
pub fn low_sample_times(t_grid: &[f64], h: f64) -> Vec<f64> {
    let mut times: Vec<f64> = Vec::new();
    for &t in t_grid {
        times.push(t);
        times.push(t + h);
        if t - h >= 0.0 {
            times.push(t - h);
        } else {
            times.push(t + 2.0 * h);
        }
    }
    times.push(0.0);
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    times
}

/// Dominant exponent of the residual bound, `−min(δ, 1−δ)/2 − s`.
pub fn residual_exponent(delta: f64, s: f64) -> f64 {
    -0.5 * delta.min(1.0 - delta) - s
}

pub fn exp_residual_scaling(p: &Params) -> Result<ExperimentOutput> {
    p.validate(Experiment::Residual)?;
    let mut records = Vec::new();
    let mut points = Vec::new();
    for &lambda in &p.lambdas {
        let spec = p.spec(lambda, p.omega, p.alphas[0])?;
        let grid = p.grid.packet_grid(&spec)?;
        let low = if p.ansatz.contains(&Ansatz::Ap2) {
            let start = Instant::now();
            let low_grid = p.grid.low_grid(&spec)?;
            let times = low_sample_times(&p.t_grid, p.defect_step);
            let low = evolve_low(&spec, low_grid, &p.solver(times))?;
            points.push(solve_point(format!("lambda={lambda} low"), &low_grid, &low.trajectory, start));
            Some(low)
        } else {
            None
        };
        for &ansatz in &p.ansatz {
            let start = Instant::now();
            for &t in &p.t_grid {
                let (residual, defect) = match ansatz {
                    Ansatz::Ap1 => (residual_ap1(&spec, grid, t)?, 0.0),
                    Ansatz::Ap2 => {
                        let low = low.as_ref().expect("low solution for ap2");
                        (
                            residual_ap2(&spec, grid, t, &low.trajectory)?,
                            low_defect(&low.trajectory, t, p.defect_step)?,
                        )
                    }
                };
                let n = residual.norms();
                let parts_linf = residual
                    .parts()
                    .iter()
                    .map(|f| linf_norm(f))
                    .fold(0.0, f64::max);
                let mut record = RunRecord::new(vec![
                    ("lambda", lambda),
                    ("delta", p.delta),
                    ("s", p.s),
                    ("omega", p.omega),
                    ("t", t),
                    ("L", grid.half_length()),
                    ("N", grid.size() as f64),
                    ("F_L2", n.total),
                    ("F1_L2", n.f1),
                    ("F2_L2", n.f2),
                    ("F3_L2", n.f3),
                    ("F4_L2", n.f4),
                    ("F5_L2", n.f5),
                    ("F5_Linf", n.f5_linf),
                    ("parts_Linf_max", parts_linf),
                    ("sum_defect", n.sum_defect),
                    ("low_defect_L2", defect),
                ]);
                record.labels.push(("ansatz", ansatz.name().to_string()));
                records.push(record);
            }
            points.push(point(format!("lambda={lambda} {}", ansatz.name()), &grid, start));
        }
    }

    let target = residual_exponent(p.delta, p.s);
    let tol = &p.tolerances;
    let mut verdicts = Vec::new();
    for &ansatz in &p.ansatz {
        let mut worst: Option<(f64, f64)> = None;
        for &t in &p.t_grid {
            let rows = select(&records, |r| r.label("ansatz") == Some(ansatz.name()) && same(r.value("t"), t));
            let lambdas: Vec<f64> = rows.iter().map(|r| r.value("lambda")).collect();
            let totals: Vec<f64> = rows.iter().map(|r| r.value("F_L2")).collect();
            let fit = fit_slope(&lambdas, &totals)?;
            if worst.is_none_or(|(_, s)| (fit.slope - target).abs() > (s - target).abs()) {
                worst = Some((t, fit.slope));
            }
        }
        let (t, slope) = worst.expect("non-empty t grid");
        verdicts.push(Verdict::within(
            &format!("residual-{}-slope", ansatz.name()),
            slope,
            target,
            tol.residual_slope,
            format!("fitted slope of |F|_L2 vs lambda, worst over t (t = {t})"),
        ));
    }
    let ap1_rows = select(&records, |r| r.label("ansatz") == Some("ap1"));
    if !ap1_rows.is_empty() {
        let f5 = ap1_rows
            .iter()
            .map(|r| r.value("F5_Linf") / r.value("parts_Linf_max"))
            .fold(0.0, f64::max);
        verdicts.push(Verdict::at_most(
            "residual-ap1-f5-zero",
            f5,
            tol.residual_f5,
            "max |F5|_inf / max_i |F_i|_inf over the ap1 ladder".into(),
        ));
    }
    let sum = records.iter().map(|r| r.value("sum_defect")).fold(0.0, f64::max);
    verdicts.push(Verdict::at_most(
        "residual-sum",
        sum,
        tol.residual_sum,
        "max |F - sum F_i|_inf / max_i |F_i|_inf".into(),
    ));
    if p.ansatz.contains(&Ansatz::Ap1) && p.ansatz.contains(&Ansatz::Ap2) {
        let mut worst = f64::NEG_INFINITY;
        for r2 in select(&records, |r| r.label("ansatz") == Some("ap2")) {
            let r1 = records
                .iter()
                .find(|r| {
                    r.label("ansatz") == Some("ap1")
                        && same(r.value("lambda"), r2.value("lambda"))
                        && same(r.value("t"), r2.value("t"))
                })
                .expect("matching ap1 row");
            worst = worst.max(r2.value("F_L2") / r1.value("F_L2"));
        }
        verdicts.push(Verdict::at_most(
            "residual-ap2-below-ap1",
            worst,
            1.0,
            "max over (lambda, t) of |F_ap2|_L2 / |F_ap1|_L2".into(),
        ));
    }
    Ok(ExperimentOutput {
        experiment: Experiment::Residual,
        records,
        points,
        verdicts,
    })
}

// ---------------------------------------------------------------------------
// Low-frequency solution bounds

pub fn exp_ulow_bounds(p: &Params) -> Result<ExperimentOutput> {
    p.validate(Experiment::Ulow)?;
    let mut records = Vec::new();
    let mut points = Vec::new();
    for &lambda in &p.lambdas {
        let start = Instant::now();
        let spec = p.spec(lambda, p.omega, 0.0)?;
        let grid = p.grid.low_grid(&spec)?;
        let low = evolve_low(&spec, grid, &p.solver(p.t_grid.clone()))?;
        for d in &low.diagnostics {
            records.push(RunRecord::new(vec![
                ("lambda", lambda),
                ("delta", p.delta),
                ("omega", p.omega),
                ("t", d.time),
                ("L", grid.half_length()),
                ("N", grid.size() as f64),
                ("l2", d.l2),
                ("dx_l2", d.dx_l2),
                ("dxx_l2", d.dxx_l2),
                ("dx_linf", d.dx_linf),
                ("drift_l2", d.drift_l2),
            ]));
        }
        points.push(solve_point(format!("lambda={lambda}"), &grid, &low.trajectory, start));
    }

    let d = p.delta;
    let omega = p.omega.abs();
    let bounds: [(&str, &str, f64); 5] = [
        ("ulow-l2", "l2", -(1.0 - d) / 2.0),
        ("ulow-dx-l2", "dx_l2", -(1.0 - d) / 2.0 - (1.0 + d)),
        ("ulow-dxx-l2", "dxx_l2", -(1.0 - d) / 2.0 - 2.0 * (1.0 + d)),
        ("ulow-dx-linf", "dx_linf", -2.0 - d),
        ("ulow-drift", "drift_l2", -2.0 - d),
    ];
    let slope_checked = ["ulow-l2", "ulow-dx-linf", "ulow-drift"];
    let mut verdicts = Vec::new();
    for (name, column, exponent) in bounds {
        let sups: Vec<f64> = p
            .lambdas
            .iter()
            .map(|&l| {
                select(&records, |r| same(r.value("lambda"), l))
                    .iter()
                    .map(|r| r.value(column))
                    .fold(0.0, f64::max)
            })
            .collect();
        if sups.iter().all(|v| *v == 0.0) {
            verdicts.push(Verdict::at_most(
                &format!("{name}-zero"),
                0.0,
                0.0,
                format!("sup_t {column} vanishes identically (omega = 0)"),
            ));
            continue;
        }
        if slope_checked.contains(&name) {
            let fit = fit_slope(&p.lambdas, &sups)?;
            verdicts.push(Verdict::within(
                &format!("{name}-slope"),
                fit.slope,
                exponent,
                p.tolerances.ulow_slope,
                format!("fitted slope of sup_t {column} vs lambda"),
            ));
        }
        let constants: Vec<f64> = p
            .lambdas
            .iter()
            .zip(&sups)
            .map(|(l, v)| v / (omega * l.powf(exponent)))
            .collect();
        verdicts.push(Verdict::at_most(
            &format!("{name}-constant"),
            mean_deviation(&constants),
            p.tolerances.ulow_constant,
            format!("max |C - mean C| / mean C for C = sup_t {column} / (|omega| lambda^{exponent}); C = {constants:?}"),
        ));
    }
    Ok(ExperimentOutput {
        experiment: Experiment::Ulow,
        records,
        points,
        verdicts,
    })
}

// ---------------------------------------------------------------------------
// Nonlinear interaction: tracking error and separation

/// Error-bound shape `λ^{−min(δ,1−δ)/(4(s+2))} + |ω| λ^{−(1−δ)/2}`.
pub fn ansatz_bound_shape(spec: &PacketSpec) -> f64 {
    let (l, d, s) = (spec.lambda, spec.delta, spec.s);
    l.powf(-d.min(1.0 - d) / (4.0 * (s + 2.0))) + spec.omega.abs() * l.powf(-(1.0 - d) / 2.0)
}

/// `√2 |sin t| ‖φ‖_{L²}`.
pub fn separation_target(t: f64) -> f64 {
    2f64.sqrt() * t.sin().abs() * PHI_L2_NORM
}

/// Difference of the two main terms, `2A sin t · φ_λ sin(λx − λ²t + α)`.
pub fn separation_standin(spec: &PacketSpec, grid: SpectralGrid, t: f64) -> Field {
    let env = scaled_profile(&make_bump_pair().phi, spec, grid);
    let offset = -spec.lambda * spec.lambda * t + spec.alpha;
    let (_, sin) = carrier(spec.lambda, &grid, |_| offset);
    let c = 2.0 * spec.amplitude() * t.sin();
    Field::new(
        grid,
        env.values().iter().zip(&sin).map(|(e, s)| c * e * s).collect(),
    )
    .expect("grid size")
}

/// Both outputs of the shared `ω = ±ω₀` solves.
pub fn exp_interaction(p: &Params) -> Result<(ExperimentOutput, ExperimentOutput)> {
    p.validate(Experiment::AnsatzError)?;
    let ns = NormSpec::new(p.s)?;
    let omegas = [p.omega, -p.omega];
    let mut ansatz_records = Vec::new();
    let mut sep_records = Vec::new();
    let mut points = Vec::new();
    for &lambda in &p.lambdas {
        let mut solutions = Vec::new();
        let mut grid = None;
        for &omega in &omegas {
            let start = Instant::now();
            let spec = p.spec(lambda, omega, p.alphas[0])?;
            let g = p.grid.packet_grid(&spec)?;
            let u0 = interaction_initial_data(&spec, g)?;
            let traj = evolve(&u0, &p.solver(p.t_grid.clone())).map_err(|e| match e {
                Error::Divergence { step, time } => {
                    log::error!("divergence at lambda = {lambda}, omega = {omega}");
                    Error::Divergence { step, time }
                }
                other => other,
            })?;
            let drift = traj.max_drift();
            for sample in &traj.samples {
                let main = packet(&spec, g, sample.time)?;
                let err = sobolev_norm(&sample.field.sub(&main)?, ns);
                let shape = ansatz_bound_shape(&spec);
                ansatz_records.push(RunRecord::new(vec![
                    ("lambda", lambda),
                    ("delta", p.delta),
                    ("s", p.s),
                    ("omega", omega),
                    ("t", sample.time),
                    ("L", g.half_length()),
                    ("N", g.size() as f64),
                    ("error_Hs", err),
                    ("bound_shape", shape),
                    ("constant", err / shape),
                    ("solution_Hs", sobolev_norm(&sample.field, ns)),
                    ("omega_ratio", spec.omega_ratio()),
                    ("mass_drift", drift.mass),
                    ("momentum_drift", drift.momentum),
                    ("energy_drift", drift.energy),
                ]));
            }
            points.push(solve_point(format!("lambda={lambda} omega={omega}"), &g, &traj, start));
            solutions.push((spec, traj));
            grid = Some(g);
        }
        let grid = grid.expect("two solves");
        let (plus_spec, plus) = &solutions[0];
        let (_, minus) = &solutions[1];
        let split = 0.5 * lambda;
        for (a, b) in plus.samples.iter().zip(&minus.samples) {
            let t = a.time;
            let diff = a.field.sub(&b.field)?;
            let high = apply_multiplier(&diff, |k| {
                if k.abs() > split {
                    1.0.into()
                } else {
                    0.0.into()
                }
            });
            let low = diff.sub(&high)?;
            let d = sobolev_norm(&diff, ns);
            let d_high = sobolev_norm(&high, ns);
            let target = separation_target(t);
            let ratio = |x: f64| if target > 0.0 { x / target } else { 0.0 };
            let standin = sobolev_norm(&separation_standin(plus_spec, grid, t), ns);
            sep_records.push(RunRecord::new(vec![
                ("n", lambda.log2()),
                ("lambda", lambda),
                ("t", t),
                ("d_Hs", d),
                ("target", target),
                ("ratio", ratio(d)),
                ("d_high_Hs", d_high),
                ("ratio_high", ratio(d_high)),
                ("d_low_Hs", sobolev_norm(&low, ns)),
                ("standin_Hs", standin),
                ("norm_plus_Hs", sobolev_norm(&a.field, ns)),
                ("norm_minus_Hs", sobolev_norm(&b.field, ns)),
            ]));
        }
    }
    let ansatz = ExperimentOutput {
        experiment: Experiment::AnsatzError,
        verdicts: ansatz_verdicts(p, &ansatz_records),
        records: ansatz_records,
        points: points.clone(),
    };
    let separation = ExperimentOutput {
        experiment: Experiment::Separation,
        verdicts: separation_verdicts(p, &sep_records)?,
        records: sep_records,
        points,
    };
    Ok((ansatz, separation))
}

fn ansatz_verdicts(p: &Params, records: &[RunRecord]) -> Vec<Verdict> {
    let mut monotone = true;
    let mut worst_step = f64::NEG_INFINITY;
    let mut worst_dev = 0.0f64;
    for &omega in &[p.omega, -p.omega] {
        for &t in p.t_grid.iter().filter(|t| **t > 0.0) {
            let rows = select(records, |r| same(r.value("omega"), omega) && same(r.value("t"), t));
            for w in rows.windows(2) {
                let step = w[1].value("error_Hs") / w[0].value("error_Hs");
                worst_step = worst_step.max(step);
                if step >= 1.0 {
                    monotone = false;
                }
            }
            let constants: Vec<f64> = rows.iter().map(|r| r.value("constant")).collect();
            worst_dev = worst_dev.max(mean_deviation(&constants));
        }
    }
    vec![
        Verdict {
            criterion: "ansatz-error-decreasing".into(),
            passed: monotone,
            measured: worst_step,
            target: 1.0,
            tolerance: 0.0,
            detail: "max ratio error(lambda_next)/error(lambda) over omega and t > 0; must stay below 1".into(),
        },
        Verdict::at_most(
            "ansatz-error-constant",
            worst_dev,
            p.tolerances.ansatz_constant,
            "max |C - mean C| / mean C over the ladder, per (omega, t > 0)".into(),
        ),
    ]
}

fn separation_verdicts(p: &Params, records: &[RunRecord]) -> Result<Vec<Verdict>> {
    let top = p.largest_lambda();
    let late = |r: &&RunRecord| r.value("t") > 0.0;
    let top_rows: Vec<&RunRecord> = select(records, |r| same(r.value("lambda"), top))
        .into_iter()
        .filter(late)
        .collect();
    let worst = |col: &str| {
        top_rows
            .iter()
            .map(|r| (r.value(col) - 1.0).abs())
            .fold(0.0, f64::max)
    };
    let mut verdicts = vec![
        Verdict::at_most(
            "separation-law",
            worst("ratio"),
            p.tolerances.separation_ratio,
            format!("max |d(t)/target - 1| at lambda = {top} over t > 0"),
        ),
        Verdict::at_most(
            "separation-law-high-band",
            worst("ratio_high"),
            p.tolerances.separation_ratio,
            format!("same with d restricted to |k| > lambda/2, at lambda = {top}"),
        ),
    ];
    let initial: Vec<&RunRecord> = select(records, |r| r.value("t") == 0.0);
    if initial.len() >= 3 {
        let lambdas: Vec<f64> = initial.iter().map(|r| r.value("lambda")).collect();
        let d0: Vec<f64> = initial.iter().map(|r| r.value("d_Hs")).collect();
        let fit = fit_slope(&lambdas, &d0)?;
        verdicts.push(Verdict::within(
            "separation-initial-slope",
            fit.slope,
            -(1.0 - p.delta) / 2.0,
            p.tolerances.separation_slope,
            "fitted slope of d(0) vs lambda".into(),
        ));
    }
    let sup_at = |lambda: f64| {
        select(records, |r| same(r.value("lambda"), lambda))
            .iter()
            .map(|r| r.value("norm_plus_Hs").max(r.value("norm_minus_Hs")))
            .fold(0.0, f64::max)
    };
    let first = sup_at(p.lambdas[0]);
    let sup = p.lambdas.iter().map(|&l| sup_at(l)).fold(0.0, f64::max);
    verdicts.push(Verdict::at_most(
        "separation-uniform-bound",
        sup / first,
        1.0 + p.tolerances.uniform_bound,
        format!("max over ladder of sup_t |u|_Hs relative to lambda = {}", p.lambdas[0]),
    ));
    Ok(verdicts)
}

// ---------------------------------------------------------------------------
// Travelling-wave check

/// Algebraic solitary wave of `u_t + H u_xx + u u_x = 0` for the Hilbert
/// symbol `−i sgn k`: `u = −4c / (1 + c²(x + ct)²)`, moving left at speed `c`.
pub fn soliton(c: f64, x: f64, t: f64) -> f64 {
    let y = c * (x + c * t);
    -4.0 * c / (1.0 + y * y)
}

pub fn exp_soliton_check(p: &Params) -> Result<ExperimentOutput> {
    p.validate(Experiment::SolitonCheck)?;
    let start = Instant::now();
    let c = p.soliton_speed;
    let l = p.grid.half_length.unwrap_or(p.soliton_half_length);
    let n = p.grid.size.unwrap_or(p.soliton_size);
    let grid = SpectralGrid::new(l, n)?;
    let u0 = Field::from_fn(grid, |x| soliton(c, x, 0.0));
    let traj = evolve(&u0, &p.solver(p.t_grid.clone()))?;
    let drift = traj.max_drift();
    let mut records = Vec::new();
    for sample in &traj.samples {
        let exact = Field::from_fn(grid, |x| soliton(c, x, sample.time));
        let err = sample.field.sub(&exact)?;
        records.push(RunRecord::new(vec![
            ("c", c),
            ("t", sample.time),
            ("L", l),
            ("N", n as f64),
            ("error_L2", l2_norm(&err)),
            ("error_Linf", linf_norm(&err)),
            ("exact_L2", l2_norm(&exact)),
            ("mass_drift", drift.mass),
            ("momentum_drift", drift.momentum),
            ("energy_drift", drift.energy),
        ]));
    }
    let worst = records.iter().map(|r| r.value("error_L2")).fold(0.0, f64::max);
    let verdicts = vec![Verdict::at_most(
        "soliton-shape",
        worst,
        p.tolerances.soliton_error,
        "max over t of the L2 distance to the translated profile".into(),
    )];
    Ok(ExperimentOutput {
        experiment: Experiment::SolitonCheck,
        records,
        points: vec![solve_point(format!("c={c}"), &grid, &traj, start)],
        verdicts,
    })
}

/// Run one experiment by name.
pub fn run_experiment(experiment: Experiment, p: &Params) -> Result<ExperimentOutput> {
    match experiment {
        Experiment::HsnormLimit => exp_hsnorm_limit(p),
        Experiment::Commutator => exp_commutator_decay(p),
        Experiment::Residual => exp_residual_scaling(p),
        Experiment::Ulow => exp_ulow_bounds(p),
        Experiment::AnsatzError => Ok(exp_interaction(p)?.0),
        Experiment::Separation => Ok(exp_interaction(p)?.1),
        Experiment::SolitonCheck => exp_soliton_check(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_laws() {
        let l = [16.0, 32.0, 64.0, 128.0];
        let q: Vec<f64> = l.iter().map(|x: &f64| x.powi(-2)).collect();
        let fit = fit_slope(&l, &q).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        let flat = fit_slope(&l, &[3.0; 4]).unwrap();
        assert!(flat.slope.abs() < 1e-15);
        let two: Vec<f64> = l.iter().map(|x: &f64| x.powi(-1) + x.powi(-3)).collect();
        let s = fit_slope(&l, &two).unwrap().slope;
        assert!(s > -1.3 && s < -1.0, "slope {s}");
    }

    #[test]
    fn slope_rejects_bad_input() {
        assert!(fit_slope(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_slope(&[1.0, 2.0, 4.0], &[1.0, 0.0, 2.0]).is_err());
        assert!(fit_slope(&[1.0, 2.0, 4.0], &[1.0, 2.0]).is_err());
        assert!(fit_slope(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn grid_policy_sizes() {
        let policy = GridPolicy::default();
        let expect = [(16.0, 576.0, 1 << 15), (32.0, 1630.0, 1 << 18), (64.0, 4608.0, 1 << 20), (128.0, 13034.0, 1 << 23)];
        for (lambda, l, n) in expect {
            let spec = PacketSpec::new(lambda, 0.5, 1.0, 1.0, 0.0).unwrap();
            let g = policy.packet_grid(&spec).unwrap();
            assert_eq!(g.half_length(), l, "lambda = {lambda}");
            assert_eq!(g.size(), n, "lambda = {lambda}");
            assert!(g.max_wavenumber() >= 4.0 * lambda);
            let smaller = SpectralGrid::new(l, n / 2).unwrap();
            assert!(smaller.max_wavenumber() < 4.0 * lambda || n / 2 < policy.min_size);
        }
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("nope".parse::<Experiment>().is_err());
    }

    #[test]
    fn tolerances_by_name() {
        let mut t = Tolerances::default();
        for name in Tolerances::NAMES {
            t.set(name, 0.5).unwrap();
        }
        assert_eq!(t.hsnorm_limit, 0.5);
        assert_eq!(t.soliton_error, 0.5);
        assert!(t.set("bogus", 1.0).is_err());
    }

    #[test]
    fn low_sample_times_cover_stencils() {
        let times = low_sample_times(&[0.0, 0.5, 1.0], 1e-3);
        for t in [0.0, 1e-3, 2e-3, 0.499, 0.5, 0.501, 0.999, 1.0, 1.001] {
            assert!(times.iter().any(|x| (x - t).abs() < 1e-12), "missing {t}");
        }
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn interaction_validation_names_constraint() {
        let mut p = Params::reference(Experiment::Separation);
        p.delta = 0.3;
        p.s = 0.5;
        let err = p.validate(Experiment::Separation).unwrap_err().to_string();
        assert!(err.contains("1 - s < delta < 1"), "{err}");
        let mut q = Params::reference(Experiment::Residual);
        q.lambdas = vec![16.0, 32.0];
        assert!(q.validate(Experiment::Residual).is_err());
    }

    #[test]
    fn standin_matches_difference_of_main_terms() {
        let p = Params::reference(Experiment::Separation);
        let spec = p.spec(16.0, 1.0, 0.0).unwrap();
        let grid = p.grid.packet_grid(&spec).unwrap();
        let t = 0.6;
        let diff = packet(&spec, grid, t)
            .unwrap()
            .sub(&packet(&spec.with_omega(-1.0), grid, t).unwrap())
            .unwrap();
        let standin = separation_standin(&spec, grid, t);
        assert!(linf_norm(&diff.sub(&standin).unwrap()) < 1e-14);
        // Envelope norm |phi|/sqrt2 of a fast carrier, doubled and scaled by |sin t|.
        let ns = NormSpec::new(1.0).unwrap();
        let ratio = sobolev_norm(&standin, ns) / separation_target(t);
        assert!((ratio - 1.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn hsnorm_small_ladder() {
        let mut p = Params::reference(Experiment::HsnormLimit);
        p.lambdas = vec![16.0, 32.0];
        let out = exp_hsnorm_limit(&p).unwrap();
        assert_eq!(out.records.len(), 2 * 3 * 2);
        assert!(out.passed(), "{:?}", out.verdicts);
        for r in &out.records {
            assert!(r.values.iter().all(|(_, v)| v.is_finite()));
        }
    }

    #[test]
    fn ulow_zero_omega_is_identically_zero() {
        let mut p = Params::reference(Experiment::Ulow);
        p.omega = 0.0;
        p.lambdas = vec![16.0, 32.0, 64.0];
        p.grid.low_size = 1 << 12;
        let out = exp_ulow_bounds(&p).unwrap();
        for r in &out.records {
            for col in ["l2", "dx_l2", "dxx_l2", "dx_linf", "drift_l2"] {
                assert_eq!(r.get(col), Some(0.0));
            }
        }
        assert!(out.passed());
    }
}
