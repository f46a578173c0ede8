//! The mode equation `u'' + b(t) u' + λ² u = 0`.
//!
//! Cartesian integration works on `(u, v = u')`, renormalized so that long
//! decays keep full relative accuracy; energies are carried as logarithms
//! alongside their values. The polar form integrates `(log ρ, h)` with
//! `θ = λt + h`, where `λu = ρ cos θ` and `u' = -ρ sin θ`:
//!
//! ```text
//! (log ρ)' = -b sin²θ        h' = -(b/2) sin 2θ
//! ```
//!
//! Storing the drift `h` instead of `θ` keeps the phase error absolute even
//! when `θ` itself is large.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damping::{DampingCoefficient, DampingError, Kind};
use crate::ode::{self, DenseRecord, Flow, OdeError, OdeSystem, Step, StepperOptions};

#[derive(Debug, Error)]
pub enum ModeError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Damping(#[from] DampingError),
    #[error("integration failed at lambda = {lambda}: {source}")]
    Integration {
        lambda: f64,
        #[source]
        source: OdeError,
    },
}

impl ModeError {
    /// Last good state `(t, y, log_scale)` when the integrator gave up.
    pub fn last_state(&self) -> Option<(f64, &[f64], f64)> {
        match self {
            ModeError::Integration { source, .. } => match source {
                OdeError::StepUnderflow { t, y, log_scale } | OdeError::NonFinite { t, y, log_scale } => {
                    Some((*t, y.as_slice(), *log_scale))
                }
                _ => None,
            },
            _ => None,
        }
    }
}

fn domain(msg: impl Into<String>) -> ModeError {
    ModeError::Domain(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputGrid {
    /// Log-spaced times; uniform when the start time is zero.
    LogSpaced(usize),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub output_grid: OutputGrid,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 50_000_000,
            output_grid: OutputGrid::LogSpaced(64),
        }
    }
}

impl IntegratorConfig {
    pub fn with_grid(mut self, grid: OutputGrid) -> Self {
        self.output_grid = grid;
        self
    }

    pub fn with_tol(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<(), ModeError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(domain("tolerances must be positive"));
        }
        if self.max_steps == 0 {
            return Err(domain("max_steps must be positive"));
        }
        match &self.output_grid {
            OutputGrid::LogSpaced(0) => Err(domain("points per decade must be positive")),
            OutputGrid::Explicit(ts) if ts.len() < 2 => Err(domain("output grid needs at least 2 points")),
            _ => Ok(()),
        }
    }

    pub(crate) fn stepper(&self, rescale: bool) -> StepperOptions {
        let mut o = StepperOptions::new(self.rel_tol, self.abs_tol);
        o.max_steps = self.max_steps;
        o.rescale = rescale;
        o
    }

    /// Options for the polar form, whose components are a logarithm and a phase.
    pub(crate) fn polar_stepper(&self) -> StepperOptions {
        let mut o = self.stepper(false);
        o.absolute = true;
        o
    }

    /// Output times on `[t0, t_end]`.
    pub fn output_times(&self, t0: f64, t_end: f64) -> Result<Vec<f64>, ModeError> {
        self.validate()?;
        match &self.output_grid {
            OutputGrid::LogSpaced(ppd) => {
                if t0 > 0.0 {
                    let decades = (t_end / t0).log10();
                    let n = ((*ppd as f64 * decades).ceil() as usize + 1).max(2);
                    Ok(crate::damping::log_grid(t0, t_end, n))
                } else {
                    let n = (*ppd).max(1) + 1;
                    let mut g: Vec<f64> = (0..n).map(|i| t0 + (t_end - t0) * i as f64 / (n - 1) as f64).collect();
                    g[n - 1] = t_end;
                    Ok(g)
                }
            }
            OutputGrid::Explicit(ts) => {
                if ts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(domain("explicit output times must be strictly increasing"));
                }
                if ts[0] < t0 || *ts.last().unwrap() > t_end {
                    return Err(domain(format!(
                        "explicit output times must lie in [{t0}, {t_end}]"
                    )));
                }
                Ok(ts.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    pub lambda: f64,
}

impl ModeState {
    pub fn energy(&self) -> f64 {
        self.v * self.v + self.lambda * self.lambda * self.u * self.u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarState {
    pub t: f64,
    pub rho: f64,
    pub log_rho: f64,
    /// Unwrapped phase.
    pub theta: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest `|h'| - b/2` seen at accepted steps (polar runs only).
    pub max_drift_excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    pub lambda: f64,
    /// Cartesian states; reconstructed from `(ρ, θ)` for polar runs.
    pub samples: Vec<ModeState>,
    /// Empty for Cartesian runs.
    pub polar: Vec<PolarState>,
    pub energy: Vec<f64>,
    pub log_energy: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl ModeTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn is_polar(&self) -> bool {
        !self.polar.is_empty()
    }

    /// `(t, E)` pairs.
    pub fn energy_samples(&self) -> Vec<(f64, f64)> {
        self.samples.iter().zip(&self.energy).map(|(s, &e)| (s.t, e)).collect()
    }

    /// `(t, log E)` pairs.
    pub fn log_energy_samples(&self) -> Vec<(f64, f64)> {
        self.samples.iter().zip(&self.log_energy).map(|(s, &e)| (s.t, e)).collect()
    }

    /// `t,u,v,energy` or `t,rho,theta,h,energy`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        if self.is_polar() {
            writeln!(w, "t,rho,theta,h,energy")?;
            for (p, e) in self.polar.iter().zip(&self.energy) {
                writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", p.t, p.rho, p.theta, p.h, e)?;
            }
        } else {
            writeln!(w, "t,u,v,energy")?;
            for (s, e) in self.samples.iter().zip(&self.energy) {
                writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", s.t, s.u, s.v, e)?;
            }
        }
        Ok(())
    }
}

struct Cartesian<'a> {
    b: &'a DampingCoefficient,
    l2: f64,
}

impl OdeSystem<2> for Cartesian<'_> {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 2], dy: &mut [f64; 2]) {
        dy[0] = y[1];
        dy[1] = -self.b.eval(t) * y[1] - self.l2 * y[0];
    }
}

/// Both basis solutions side by side: `(u₁, v₁, u₂, v₂)`.
struct Basis<'a> {
    b: &'a DampingCoefficient,
    l2: f64,
}

impl OdeSystem<4> for Basis<'_> {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 4], dy: &mut [f64; 4]) {
        let b = self.b.eval(t);
        dy[0] = y[1];
        dy[1] = -b * y[1] - self.l2 * y[0];
        dy[2] = y[3];
        dy[3] = -b * y[3] - self.l2 * y[2];
    }
}

/// `(log ρ, h)` with `θ = λt + h`.
pub(crate) struct Polar<'a> {
    pub b: &'a DampingCoefficient,
    pub lambda: f64,
}

impl OdeSystem<2> for Polar<'_> {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 2], dy: &mut [f64; 2]) {
        let b = self.b.eval(t);
        let (s, c) = (self.lambda * t + y[1]).sin_cos();
        dy[0] = -b * s * s;
        dy[1] = -b * s * c;
    }
}

fn check_problem(b: &DampingCoefficient, lambda: f64, t0: f64, t_end: f64) -> Result<(), ModeError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(domain(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
        return Err(domain(format!("need t_end > t0, got [{t0}, {t_end}]")));
    }
    if t0 < b.t0() && !(b.kind() == Kind::Constant && t0 >= 0.0) {
        return Err(domain(format!("start time {t0} precedes the coefficient's t0 = {}", b.t0())));
    }
    if t_end > b.valid_until() {
        return Err(DampingError::OutOfRange {
            t: t_end,
            t0: b.t0(),
            valid_until: b.valid_until(),
        }
        .into());
    }
    Ok(())
}

fn integration_error(lambda: f64) -> impl Fn(OdeError) -> ModeError {
    move |source| ModeError::Integration { lambda, source }
}

/// Samples every output time covered by `step` into `out` via `f`.
fn sample_step<const N: usize, T>(
    step: &Step<N>,
    times: &[f64],
    next: &mut usize,
    out: &mut Vec<T>,
    mut f: impl FnMut(f64, [f64; N], f64) -> T,
) {
    while *next < times.len() && times[*next] <= step.t1 {
        let t = times[*next];
        out.push(f(t, step.eval(t), step.log_scale));
        *next += 1;
    }
}

fn cartesian_record(lambda: f64, t: f64, y: [f64; 2], log_scale: f64) -> (ModeState, f64, f64) {
    let scale = log_scale.exp();
    let e_norm = y[1] * y[1] + lambda * lambda * y[0] * y[0];
    let state = ModeState {
        t,
        u: y[0] * scale,
        v: y[1] * scale,
        lambda,
    };
    (state, e_norm * scale * scale, e_norm.ln() + 2.0 * log_scale)
}

/// Integrates the mode from `(u0, v0)` at `t0` to `t_end`.
pub fn integrate_mode(
    b: &DampingCoefficient,
    lambda: f64,
    u0: f64,
    v0: f64,
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<ModeTrajectory, ModeError> {
    check_problem(b, lambda, t0, t_end)?;
    if !(u0.is_finite() && v0.is_finite()) {
        return Err(domain("initial data must be finite"));
    }
    let times = cfg.output_times(t0, t_end)?;
    let sys = Cartesian { b, l2: lambda * lambda };
    let mut next = 0;
    let mut rows = Vec::with_capacity(times.len());
    let out = ode::integrate(&sys, t0, [u0, v0], t_end, b.breakpoints(), cfg.stepper(true), |step| {
        sample_step(step, &times, &mut next, &mut rows, |t, y, ls| cartesian_record(lambda, t, y, ls));
        Flow::Continue
    })
    .map_err(integration_error(lambda))?;
    if rows.is_empty() {
        // zero data: the renormalized run has nothing to scale
        rows = times.iter().map(|&t| cartesian_record(lambda, t, [0.0, 0.0], 0.0)).collect();
    }
    let mut samples = Vec::with_capacity(rows.len());
    let mut energy = Vec::with_capacity(rows.len());
    let mut log_energy = Vec::with_capacity(rows.len());
    for (s, e, le) in rows {
        samples.push(s);
        energy.push(e);
        log_energy.push(le);
    }
    Ok(ModeTrajectory {
        lambda,
        samples,
        polar: Vec::new(),
        energy,
        log_energy,
        meta: TrajectoryMeta {
            accepted: out.stats.accepted,
            rejected: out.stats.rejected,
            rhs_evals: out.stats.rhs_evals,
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
            max_drift_excess: 0.0,
        },
    })
}

/// `(ρ, θ)` with `λu = ρ cos θ`, `u' = -ρ sin θ`.
pub fn polar_from_data(lambda: f64, u0: f64, v0: f64) -> (f64, f64) {
    let x = lambda * u0;
    (x.hypot(v0), (-v0).atan2(x))
}

fn check_polar(lambda: f64, rho0: f64, theta0: f64) -> Result<(), ModeError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(format!(
            "polar form needs lambda > 0 (got {lambda}); use the Cartesian integrator"
        )));
    }
    if !(rho0 > 0.0 && rho0.is_finite() && theta0.is_finite()) {
        return Err(domain("polar data needs rho0 > 0 and finite theta0"));
    }
    Ok(())
}

/// Integrates the polar form from `(ρ0, θ0)`.
pub fn integrate_polar(
    b: &DampingCoefficient,
    lambda: f64,
    rho0: f64,
    theta0: f64,
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<ModeTrajectory, ModeError> {
    check_polar(lambda, rho0, theta0)?;
    check_problem(b, lambda, t0, t_end)?;
    let times = cfg.output_times(t0, t_end)?;
    let sys = Polar { b, lambda };
    let mut next = 0;
    let mut polar = Vec::with_capacity(times.len());
    let mut drift_excess: f64 = 0.0;
    let y0 = [rho0.ln(), theta0 - lambda * t0];
    let out = ode::integrate(&sys, t0, y0, t_end, b.breakpoints(), cfg.polar_stepper(), |step| {
        let mut dy = [0.0; 2];
        let tc = step.t1.next_down().max(step.t0);
        sys.rhs(tc, &step.eval(tc), &mut dy);
        drift_excess = drift_excess.max(dy[1].abs() - 0.5 * b.eval(tc));
        sample_step(step, &times, &mut next, &mut polar, |t, y, _| PolarState {
            t,
            rho: y[0].exp(),
            log_rho: y[0],
            theta: lambda * t + y[1],
            h: y[1],
        });
        Flow::Continue
    })
    .map_err(integration_error(lambda))?;
    let samples = polar
        .iter()
        .map(|p| {
            let (s, c) = p.theta.sin_cos();
            ModeState {
                t: p.t,
                u: p.rho * c / lambda,
                v: -p.rho * s,
                lambda,
            }
        })
        .collect();
    let energy = polar.iter().map(|p| p.rho * p.rho).collect();
    let log_energy = polar.iter().map(|p| 2.0 * p.log_rho).collect();
    Ok(ModeTrajectory {
        lambda,
        samples,
        polar,
        energy,
        log_energy,
        meta: TrajectoryMeta {
            accepted: out.stats.accepted,
            rejected: out.stats.rejected,
            rhs_evals: out.stats.rhs_evals,
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
            max_drift_excess: drift_excess,
        },
    })
}

/// Polar solution kept as a dense record for evaluation at arbitrary times.
#[derive(Debug, Clone)]
pub struct DensePolar {
    pub lambda: f64,
    record: DenseRecord<2>,
}

impl DensePolar {
    /// `(log ρ, θ)` at `t`.
    pub fn eval(&self, t: f64) -> Option<(f64, f64)> {
        self.record.eval(t).map(|(y, _)| (y[0], self.lambda * t + y[1]))
    }

    pub fn t_end(&self) -> f64 {
        self.record.t_end()
    }

    /// Step endpoints, a natural quadrature partition.
    pub fn knots(&self) -> Vec<f64> {
        let s = self.record.steps();
        let mut k: Vec<f64> = s.iter().map(|s| s.t0).collect();
        if let Some(l) = s.last() {
            k.push(l.t1);
        }
        k
    }
}

pub fn integrate_polar_dense(
    b: &DampingCoefficient,
    lambda: f64,
    rho0: f64,
    theta0: f64,
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<DensePolar, ModeError> {
    check_polar(lambda, rho0, theta0)?;
    check_problem(b, lambda, t0, t_end)?;
    let sys = Polar { b, lambda };
    let mut record = DenseRecord::default();
    ode::integrate(&sys, t0, [rho0.ln(), theta0 - lambda * t0], t_end, b.breakpoints(), cfg.polar_stepper(), |step| {
        record.push(step);
        Flow::Continue
    })
    .map_err(integration_error(lambda))?;
    Ok(DensePolar { lambda, record })
}

/// Exact solution for constant damping `b ≡ b0`.
pub fn constant_oracle(b0: f64, lambda: f64, u0: f64, v0: f64, t0: f64, t: f64) -> ModeState {
    let tau = t - t0;
    let beta = 0.5 * b0;
    let l2 = lambda * lambda;
    let disc = (beta - lambda) * (beta + lambda);
    let (u, v) = if disc < 0.0 {
        let omega = (-disc).sqrt();
        let decay = (-beta * tau).exp();
        let (s, c) = (omega * tau).sin_cos();
        let sw = s / omega;
        (
            decay * (u0 * c + (v0 + beta * u0) * sw),
            decay * (v0 * c - (beta * v0 + l2 * u0) * sw),
        )
    } else if disc == 0.0 {
        let decay = (-beta * tau).exp();
        let k = v0 + beta * u0;
        (decay * (u0 + k * tau), decay * (v0 - beta * k * tau))
    } else {
        // roots -mu_slow and -mu_slow - 2 kappa
        let kappa = disc.sqrt();
        let mu_slow = l2 / (beta + kappa);
        let slow = (-mu_slow * tau).exp();
        let c = slow * 0.5 * (1.0 + (-2.0 * kappa * tau).exp());
        let s = slow * -(-2.0 * kappa * tau).exp_m1() / (2.0 * kappa);
        (c * u0 + s * (v0 + beta * u0), c * v0 - s * (beta * v0 + l2 * u0))
    };
    ModeState { t, u, v, lambda }
}

/// First time after `t0` where `u'` vanishes, or `None` if none before `t_end`.
pub fn find_t1(
    b: &DampingCoefficient,
    lambda: f64,
    u0: f64,
    v0: f64,
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>, ModeError> {
    check_problem(b, lambda, t0, t_end)?;
    if !(v0 != 0.0 && v0.is_finite() && u0.is_finite()) {
        return Err(domain("find_t1 needs finite data with v0 != 0"));
    }
    let sys = Cartesian { b, l2: lambda * lambda };
    let sign0 = v0.signum();
    let mut found = None;
    ode::integrate(&sys, t0, [u0, v0], t_end, b.breakpoints(), cfg.stepper(true), |step| {
        if step.y1[1] * sign0 > 0.0 {
            return Flow::Continue;
        }
        let tol = cfg.abs_tol * (-step.log_scale).exp();
        found = Some(refine_zero(step, sign0, tol));
        Flow::Stop
    })
    .map_err(integration_error(lambda))?;
    Ok(found)
}

/// Bisection for the sign change of `v` inside an accepted step.
fn refine_zero(step: &Step<2>, sign0: f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (step.t0, step.t1);
    if step.y1[1] == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = step.eval(mid)[1];
        if v.abs() <= tol {
            return mid;
        }
        if v * sign0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solution operator at one time: `state(t) = exp(log_scale) · m · state(t0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator {
    pub t: f64,
    /// Rows are `(u, v)`, columns correspond to data `(1, 0)` and `(0, 1)`.
    pub m: [[f64; 2]; 2],
    pub log_scale: f64,
}

impl Propagator {
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let s = self.log_scale.exp();
        [[self.m[0][0] * s, self.m[0][1] * s], [self.m[1][0] * s, self.m[1][1] * s]]
    }

    pub fn apply(&self, u0: f64, v0: f64) -> (f64, f64) {
        let m = self.matrix();
        (m[0][0] * u0 + m[0][1] * v0, m[1][0] * u0 + m[1][1] * v0)
    }

    /// `log sup E(t) / (wu u0² + wv v0²)` over all data, with `E = v² + λ² u²`:
    /// the largest generalized eigenvalue of `Mᵀ diag(λ², 1) M` against `diag(wu, wv)`.
    pub fn log_energy_gain(&self, lambda: f64, wu: f64, wv: f64) -> f64 {
        let (su, sv) = (1.0 / wu.sqrt(), 1.0 / wv.sqrt());
        let m = self.m;
        let a = lambda * m[0][0] * su;
        let b = lambda * m[0][1] * sv;
        let c = m[1][0] * su;
        let d = m[1][1] * sv;
        let fro = a * a + b * b + c * c + d * d;
        let det = (a * d - b * c).abs();
        let disc = ((fro - 2.0 * det) * (fro + 2.0 * det)).max(0.0);
        (0.5 * (fro + disc.sqrt())).ln() + 2.0 * self.log_scale
    }
}

/// Propagators at every time of `times` (ascending, first time ≥ `t0`).
pub fn propagator_curve(
    b: &DampingCoefficient,
    lambda: f64,
    t0: f64,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Propagator>, ModeError> {
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times[0] < t0 {
        return Err(domain("propagator times must be ascending and not precede t0"));
    }
    let t_end = *times.last().unwrap();
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    let pack = |t: f64, y: [f64; 4], log_scale: f64| Propagator {
        t,
        m: [[y[0], y[2]], [y[1], y[3]]],
        log_scale,
    };
    while next < times.len() && times[next] == t0 {
        out.push(pack(t0, [1.0, 0.0, 0.0, 1.0], 0.0));
        next += 1;
    }
    if next == times.len() {
        return Ok(out);
    }
    check_problem(b, lambda, t0, t_end)?;
    let sys = Basis { b, l2: lambda * lambda };
    ode::integrate(&sys, t0, [1.0, 0.0, 0.0, 1.0], t_end, b.breakpoints(), cfg.stepper(true), |step| {
        sample_step(step, times, &mut next, &mut out, pack);
        Flow::Continue
    })
    .map_err(integration_error(lambda))?;
    Ok(out)
}

/// The 2×2 solution operator from `t0` to `t`.
pub fn mode_propagator(
    b: &DampingCoefficient,
    lambda: f64,
    t0: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<[[f64; 2]; 2], ModeError> {
    Ok(propagator_curve(b, lambda, t0, &[t], cfg)?[0].matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damping::{log_grid, make_pinched_random, PinchedRandomSpec, Scheme};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn undamped_energy_is_conserved() {
        let b = DampingCoefficient::constant(0.0, 0.0).unwrap();
        let tr = integrate_mode(&b, 1.0, 0.0, 1.0, 1.0, 100.0, &cfg()).unwrap();
        for e in &tr.energy {
            assert!((e - 1.0).abs() < 1e-8, "{e}");
        }
    }

    #[test]
    fn stationary_solution_at_zero_frequency() {
        let b = DampingCoefficient::scale_invariant(1.0, 1.0).unwrap();
        let tr = integrate_mode(&b, 0.0, 1.0, 0.0, 1.0, 1e4, &cfg()).unwrap();
        assert!(tr.samples.iter().all(|s| s.u == 1.0 && s.v == 0.0));
        assert!(tr.energy.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn constant_damping_matches_oracle() {
        let b = DampingCoefficient::constant(1.0, 0.0).unwrap();
        let tr = integrate_mode(&b, 10.0, 0.0, 1.0, 1.0, 11.0, &cfg()).unwrap();
        for s in &tr.samples {
            let o = constant_oracle(1.0, 10.0, 0.0, 1.0, 1.0, s.t);
            let scale = o.energy().sqrt();
            assert!((s.v - o.v).abs() <= 1e-8 * scale && (10.0 * (s.u - o.u)).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn oracle_closed_forms() {
        let s = constant_oracle(0.0, 1.0, 0.0, 1.0, 0.0, FRAC_PI_2);
        assert!((s.u - 1.0).abs() < 1e-15 && s.v.abs() < 1e-15);
        let s = constant_oracle(2.0, 1.0, 1.0, -1.0, 0.0, 1.0);
        let e = (-1.0f64).exp();
        assert!((s.u - e).abs() < 1e-16 && (s.v + e).abs() < 1e-16);
    }

    #[test]
    fn oracle_is_continuous_across_critical_damping() {
        let c = constant_oracle(2.0, 1.0, 0.3, 0.7, 0.0, 2.5);
        for b0 in [2.0 - 1e-9, 2.0 + 1e-9] {
            let s = constant_oracle(b0, 1.0, 0.3, 0.7, 0.0, 2.5);
            assert!((s.u - c.u).abs() < 1e-8 && (s.v - c.v).abs() < 1e-8);
        }
    }

    #[test]
    fn energy_is_non_increasing() {
        let b = make_pinched_random(
            &PinchedRandomSpec {
                m: 0.5,
                big_m: 1.5,
                segment_count: 40,
                seed: 9,
                scheme: Scheme::PiecewiseConstant,
            },
            1.0,
        )
        .unwrap();
        let c = cfg();
        let tr = integrate_mode(&b, 1.0, 0.3, 1.0, 1.0, 1e4, &c).unwrap();
        for w in tr.energy.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 10.0 * c.rel_tol));
        }
    }

    #[test]
    fn polar_rejects_zero_frequency() {
        let b = DampingCoefficient::scale_invariant(1.0, 1.0).unwrap();
        assert!(matches!(integrate_polar(&b, 0.0, 1.0, 0.0, 1.0, 2.0, &cfg()), Err(ModeError::Domain(_))));
    }

    #[test]
    fn undamped_polar_phase_advances_linearly() {
        let b = DampingCoefficient::constant(0.0, 0.0).unwrap();
        let tr = integrate_polar(&b, 1.0, 1.0, 0.0, 0.0, 50.0, &cfg()).unwrap();
        for p in &tr.polar {
            assert!((p.rho - 1.0).abs() < 1e-12 && (p.theta - p.t).abs() < 1e-12);
        }
    }

    #[test]
    fn polar_matches_cartesian_for_scale_invariant_damping() {
        let b = DampingCoefficient::scale_invariant(1.0, 1.0).unwrap();
        let (rho, theta) = polar_from_data(1.0, 0.0, 1.0);
        let p = integrate_polar(&b, 1.0, rho, theta, 1.0, 1e4, &cfg()).unwrap();
        let c = integrate_mode(&b, 1.0, 0.0, 1.0, 1.0, 1e4, &cfg()).unwrap();
        for (a, b) in p.energy.iter().zip(&c.energy) {
            assert!((a - b).abs() / a <= 1e-6);
        }
        for (a, b) in p.samples.iter().zip(&c.samples) {
            let s = a.energy().sqrt();
            assert!((a.u - b.u).abs() <= 1e-6 * s && (a.v - b.v).abs() <= 1e-6 * s);
        }
        assert!(p.meta.max_drift_excess <= 1e-12);
    }

    #[test]
    fn polar_log_amplitude_tracks_constant_damping_rate() {
        let b = DampingCoefficient::constant(0.5, 0.0).unwrap();
        let tr = integrate_polar(&b, 2.0, 1.0, 0.3, 0.0, 400.0, &cfg()).unwrap();
        let last = tr.polar.last().unwrap();
        let slope = last.log_rho / last.t;
        assert!((slope + 0.25).abs() < 2e-3, "{slope}");
    }

    #[test]
    fn quarter_period_propagator_is_a_rotation() {
        let b = DampingCoefficient::constant(0.0, 0.0).unwrap();
        let m = mode_propagator(&b, 1.0, 0.0, FRAC_PI_2, &cfg()).unwrap();
        let want = [[0.0, 1.0], [-1.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[i][j] - want[i][j]).abs() < 1e-9);
            }
        }
        let id = mode_propagator(&DampingCoefficient::scale_invariant(2.0, 1.0).unwrap(), 3.0, 1.0, 1.0, &cfg()).unwrap();
        assert_eq!(id, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn propagator_matches_oracle_columns() {
        let b = DampingCoefficient::constant(1.0, 0.0).unwrap();
        let m = mode_propagator(&b, 10.0, 0.0, 1.0, &cfg()).unwrap();
        let c0 = constant_oracle(1.0, 10.0, 1.0, 0.0, 0.0, 1.0);
        let c1 = constant_oracle(1.0, 10.0, 0.0, 1.0, 0.0, 1.0);
        assert!((m[0][0] - c0.u).abs() < 1e-8 && (m[1][0] - c0.v).abs() < 1e-8);
        assert!((m[0][1] - c1.u).abs() < 1e-8 && (m[1][1] - c1.v).abs() < 1e-8);
    }

    #[test]
    fn find_t1_cosine_zero() {
        let b = DampingCoefficient::constant(0.0, 0.0).unwrap();
        let t1 = find_t1(&b, 1.0, 0.0, 1.0, 0.0, 10.0, &cfg()).unwrap().unwrap();
        assert!((t1 - FRAC_PI_2).abs() < 1e-8);
    }

    #[test]
    fn find_t1_overdamped_turning_point() {
        // u' = c (mu1 e^{-mu1 t} - mu2 e^{-mu2 t}) vanishes once
        let b = DampingCoefficient::constant(3.0, 0.0).unwrap();
        let (mu1, mu2) = ((3.0 + 5f64.sqrt()) / 2.0, (3.0 - 5f64.sqrt()) / 2.0);
        let want = (mu1 / mu2).ln() / (mu1 - mu2);
        let t1 = find_t1(&b, 1.0, 0.0, 1.0, 0.0, 100.0, &cfg()).unwrap().unwrap();
        assert!((t1 - want).abs() < 1e-8, "{t1} vs {want}");
        // data launched downhill with u0 > 0 never turns
        assert_eq!(find_t1(&b, 1.0, 1.0, -0.1, 0.0, 100.0, &cfg()).unwrap(), None);
    }

    #[test]
    fn output_grid_shapes() {
        let g = IntegratorConfig::default().output_times(1.0, 1e4).unwrap();
        assert_eq!(g.len(), 257);
        assert_eq!((g[0], g[256]), (1.0, 1e4));
        let g = IntegratorConfig::default().output_times(0.0, PI).unwrap();
        assert_eq!(g.len(), 65);
        let bad = IntegratorConfig::default().with_grid(OutputGrid::Explicit(vec![1.0]));
        assert!(bad.validate().is_err());
        let lg = log_grid(1.0, 10.0, 3);
        assert!(IntegratorConfig::default().with_grid(OutputGrid::Explicit(lg)).output_times(2.0, 10.0).is_err());
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let b = DampingCoefficient::constant(0.0, 0.0).unwrap();
        let c = cfg().with_grid(OutputGrid::Explicit(vec![0.0, 1.0]));
        let tr = integrate_mode(&b, 1.0, 0.0, 1.0, 0.0, 1.0, &c).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,u,v,energy"));
        let row: Vec<f64> = lines.nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row[0], 1.0);
        assert!((row[1] - 1f64.sin()).abs() < 1e-10);
    }
}
