//! Decay-rate estimation and theorem-bound verification.
//!
//! Rates are fitted on the upper envelope of `log E` against `log t`, ten
//! points per decade, over the last 60% of decades. Bound checks compare energies with
//! explicit right-hand sides pointwise on a time grid.

use std::fmt::Write as _;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damping::{
    log_grid, make_fast_oscillation, make_open_problem, make_pinched_random, make_table1_coefficient,
    DampingCoefficient, DampingError, PinchedRandomSpec, RateDescriptor, Scheme, Table1Row,
};
use crate::modeode::{find_t1, integrate_mode, propagator_curve, IntegratorConfig, ModeError, OutputGrid};
use crate::oscint::{check_gamma_inequality, gamma_fn, lemma_examples, mu, OscintError};
use crate::spectral::{energy_norm_curve, EnergyNormCurve, SpectralError, SpectralModel};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Damping(#[from] DampingError),
    #[error(transparent)]
    Quadrature(#[from] OscintError),
}

fn domain(msg: impl Into<String>) -> AnalysisError {
    AnalysisError::Domain(msg.into())
}

/// Envelope bins per decade of time.
pub const BINS_PER_DECADE: f64 = 10.0;
/// Fraction of decades discarded at the start of the run.
pub const DISCARD_FRACTION: f64 = 0.4;
/// Fewest envelope points a fit accepts.
pub const MIN_ENVELOPE_POINTS: usize = 8;

/// `E(t) ≈ prefactor · t^{-exponent}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS of the log residuals.
    pub residual: f64,
    pub window: (f64, f64),
    pub envelope_points: usize,
    /// `(t, log E)` of the envelope points used in the fit.
    pub envelope: Vec<(f64, f64)>,
}

fn fit_err(msg: impl Into<String>) -> AnalysisError {
    AnalysisError::Fit(msg.into())
}

/// Fits a power law to `(t, E)` samples.
pub fn fit_decay_exponent(samples: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<DecayFit, AnalysisError> {
    if let Some(&(t, e)) = samples.iter().find(|(_, e)| !(*e > 0.0 && e.is_finite())) {
        return Err(fit_err(format!("energy must be positive and finite, got {e} at t = {t}")));
    }
    let logs: Vec<(f64, f64)> = samples.iter().map(|&(t, e)| (t, e.ln())).collect();
    fit_decay_exponent_log(&logs, window)
}

/// As [`fit_decay_exponent`] for `(t, log E)` samples, which cannot underflow.
pub fn fit_decay_exponent_log(samples: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<DecayFit, AnalysisError> {
    if samples.len() < 2 {
        return Err(fit_err("need at least two samples"));
    }
    if samples.iter().any(|&(t, l)| !(t > 0.0 && t.is_finite() && l.is_finite())) {
        return Err(fit_err("samples need positive times and finite log energies"));
    }
    if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(fit_err("sample times must be strictly increasing"));
    }
    let (first, last) = (samples[0].0, samples[samples.len() - 1].0);
    let decades = (last / first).log10();
    if decades < 2.0 {
        return Err(fit_err(format!("time span covers {decades:.3} decades, need at least 2")));
    }
    let (lo, hi) = match window {
        Some((lo, hi)) => {
            if !(lo >= first && hi <= last && hi > lo) {
                return Err(fit_err(format!("window [{lo}, {hi}] outside the sample span [{first}, {last}]")));
            }
            (lo, hi)
        }
        None => (first * 10f64.powf(DISCARD_FRACTION * decades), last),
    };
    let envelope = upper_envelope(samples, lo, hi);
    if envelope.len() < MIN_ENVELOPE_POINTS {
        return Err(fit_err(format!(
            "only {} envelope points in [{lo}, {hi}], need {MIN_ENVELOPE_POINTS}",
            envelope.len()
        )));
    }
    let xs: Vec<f64> = envelope.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = envelope.iter().map(|p| p.1).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    Ok(DecayFit {
        exponent: -slope,
        prefactor: intercept.exp(),
        residual,
        window: (lo, hi),
        envelope_points: envelope.len(),
        envelope,
    })
}

/// Upper concave hull of `(log t, log E)` over `[lo, hi]`, sampled at the
/// centres of `1/BINS_PER_DECADE`-decade bins. The hull rests on the peaks of
/// an oscillating energy and coincides with an exact power law.
pub fn upper_envelope(samples: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .map(|&(t, l)| (t.ln(), l))
        .collect();
    if pts.len() < 2 {
        return Vec::new();
    }
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop `a` unless it lies strictly above the chord from `o` to `p`
            if (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let (x0, x1) = (hull[0].0, hull[hull.len() - 1].0);
    let width = std::f64::consts::LN_10 / BINS_PER_DECADE;
    let nbins = (((x1 - x0) / width).round() as usize).max(1);
    let step = (x1 - x0) / nbins as f64;
    let mut out = Vec::with_capacity(nbins);
    let mut j = 0;
    for k in 0..nbins {
        let x = x0 + (k as f64 + 0.5) * step;
        while j + 2 < hull.len() && hull[j + 1].0 < x {
            j += 1;
        }
        let (a, b) = (hull[j], hull[j + 1]);
        let y = if b.0 > a.0 { a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0) } else { a.1.max(b.1) };
        out.push((x.exp(), y));
    }
    out
}

/// Slope and intercept of the least-squares line.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Pearson correlation of two equally long series.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Largest `(t, log E)` in each `1/BINS_PER_DECADE`-decade bin of `[lo, hi]`.
pub fn bin_maxima(samples: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut current = None;
    for &(t, l) in samples.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        let bin = ((t / lo).log10() * BINS_PER_DECADE).floor() as i64;
        if current != Some(bin) {
            current = Some(bin);
            out.push((t, l));
        } else if let Some(last) = out.last_mut() {
            if l > last.1 {
                *last = (t, l);
            }
        }
    }
    out
}

/// Relative slack allowed on theorem bounds.
pub const BOUND_SLACK: f64 = 1e-3;

/// Pointwise comparison of an energy with a theorem bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    /// Configuration the bound was checked on.
    pub label: String,
    /// Largest observed/allowed ratio.
    pub max_ratio: f64,
    pub worst_t: f64,
    pub pass: bool,
}

impl BoundReport {
    fn from_log_ratios(bound_name: &str, label: String, times: &[f64], log_ratios: &[f64]) -> Self {
        let (mut worst, mut worst_t) = (f64::NEG_INFINITY, times.first().copied().unwrap_or(f64::NAN));
        for (&t, &l) in times.iter().zip(log_ratios) {
            if l > worst || l.is_nan() {
                worst = l;
                worst_t = t;
            }
        }
        let max_ratio = worst.exp();
        BoundReport {
            bound_name: bound_name.into(),
            label,
            max_ratio,
            worst_t,
            pass: max_ratio <= 1.0 + BOUND_SLACK,
        }
    }

    /// Worst of several reports under one name.
    pub fn combine(bound_name: &str, label: String, reports: &[BoundReport]) -> Self {
        let worst = reports.iter().max_by(|a, b| a.max_ratio.total_cmp(&b.max_ratio));
        BoundReport {
            bound_name: bound_name.into(),
            label,
            max_ratio: worst.map_or(0.0, |r| r.max_ratio),
            worst_t: worst.map_or(f64::NAN, |r| r.worst_t),
            pass: reports.iter().all(|r| r.pass),
        }
    }
}

/// Initial data for a single-mode bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "data", rename_all = "snake_case")]
pub enum ModeData {
    Pair { u0: f64, v0: f64 },
    /// Supremum over all data, from the propagator.
    Worst,
}

impl ModeData {
    fn label(&self) -> String {
        match self {
            ModeData::Pair { u0, v0 } => format!("data=({u0},{v0})"),
            ModeData::Worst => "data=worst".into(),
        }
    }
}

fn check_grid(t0: f64, t_grid: &[f64]) -> Result<(), AnalysisError> {
    if t_grid.len() < 2 || t_grid[0] < t0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("time grid needs two or more increasing times at or after t0"));
    }
    Ok(())
}

/// `log E(t) - log(wu u0² + wv v0²)` on the grid; for [`ModeData::Worst`] the
/// supremum over data.
fn log_energy_gain(
    b: &DampingCoefficient,
    lambda: f64,
    data: ModeData,
    wu: f64,
    wv: f64,
    t_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, AnalysisError> {
    let t0 = b.t0();
    check_grid(t0, t_grid)?;
    match data {
        ModeData::Pair { u0, v0 } => {
            let q = wu * u0 * u0 + wv * v0 * v0;
            if q == 0.0 {
                return Ok(vec![f64::NEG_INFINITY; t_grid.len()]);
            }
            let c = cfg.clone().with_grid(OutputGrid::Explicit(t_grid.to_vec()));
            let tr = integrate_mode(b, lambda, u0, v0, t0, *t_grid.last().unwrap(), &c)?;
            Ok(tr.log_energy.iter().map(|l| l - q.ln()).collect())
        }
        ModeData::Worst => {
            let ps = propagator_curve(b, lambda, t0, t_grid, cfg)?;
            Ok(ps.iter().map(|p| p.log_energy_gain(lambda, wu, wv)).collect())
        }
    }
}

/// Checks `E(t) ≤ K(t) (wu u0² + wv v0²)` with `log K` given.
#[allow(clippy::too_many_arguments)]
fn bound_check(
    name: &str,
    label: String,
    b: &DampingCoefficient,
    lambda: f64,
    data: ModeData,
    (wu, wv): (f64, f64),
    log_k: impl Fn(f64) -> f64,
    t_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<BoundReport, AnalysisError> {
    let gains = log_energy_gain(b, lambda, data, wu, wv, t_grid, cfg)?;
    let ratios: Vec<f64> = t_grid.iter().zip(&gains).map(|(&t, g)| g - log_k(t)).collect();
    Ok(BoundReport::from_log_ratios(name, format!("{label} lambda={lambda} {}", data.label()), t_grid, &ratios))
}

/// `m/t ≤ b(t) ≤ M/t` sampled on `n` log-spaced points of `[t0, t_end]`.
fn check_pinched(b: &DampingCoefficient, m: f64, big_m: f64, t_end: f64, n: usize) -> Result<(), AnalysisError> {
    let t0 = b.t0();
    for t in log_grid(t0, t_end.max(t0 * (1.0 + 1e-12)), n) {
        let bt = b.try_eval(t)? * t;
        if bt < m * (1.0 - 1e-12) || bt > big_m * (1.0 + 1e-12) {
            return Err(domain(format!("t b(t) = {bt} at t = {t} leaves [{m}, {big_m}]")));
        }
    }
    Ok(())
}

/// `E(t) ≤ e^{m(M+8)} {4 v0² + (λ² + 2/t0²) u0²} (t0/t)^μ`, `μ = min(m, 2)`,
/// with `m`, `M` taken from the coefficient's envelope.
pub fn verify_prop_main_1(
    b: &DampingCoefficient,
    lambda: f64,
    data: ModeData,
    t_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<BoundReport, AnalysisError> {
    let env = b
        .envelope()
        .ok_or_else(|| domain("general-oscillation bound needs a coefficient with an m/t..M/t envelope"))?;
    if !(lambda >= 0.0) {
        return Err(domain(format!("lambda must be non-negative, got {lambda}")));
    }
    let (m, big_m, t0) = (env.lower, env.upper, b.t0());
    let mu = mu(m);
    bound_check(
        "general_oscillations",
        b.label(),
        b,
        lambda,
        data,
        (lambda * lambda + 2.0 / (t0 * t0), 4.0),
        |t| m * (big_m + 8.0) + mu * (t0 / t).ln(),
        t_grid,
        cfg,
    )
}

/// `B = 3r / (α t0^α)`.
pub fn big_b(r: f64, alpha: f64, t0: f64) -> f64 {
    3.0 * r / (alpha * t0.powf(alpha))
}

/// `log Γ2` for `b = (a + r sin(t^α))/t`.
pub fn log_gamma2(a: f64, r: f64, alpha: f64, t0: f64) -> f64 {
    a * (a + r + 8.0) + 2.5 * r * (a + r + 4.0) + big_b(r, alpha, t0) + r * 3f64.ln() / (alpha - 1.0)
}

/// `log Γ4` for `b = (a + r sin(t^α))/t` at frequency `λ`.
pub fn log_gamma4(a: f64, r: f64, alpha: f64, lambda: f64, t0: f64) -> f64 {
    (2.0 * a * (a + r + 8.0) + 5.0 * r * (a + r + 4.0)) / (2.0 * lambda * t0)
        + big_b(r, alpha, t0)
        + r * 3f64.ln() / (alpha - 1.0)
}

/// `E(t) ≤ Γ2 {4 e^{2B} v0² + (λ² + 2/t0²) u0²} (t0/t)^μ`, `μ = min(a, 2)`,
/// for `b = (a + r sin(t^α))/t` with `t0 = t_grid[0]`.
pub fn verify_prop_main_2(
    a: f64,
    r: f64,
    alpha: f64,
    lambda: f64,
    data: ModeData,
    t_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<BoundReport, AnalysisError> {
    let t0 = *t_grid.first().ok_or_else(|| domain("empty time grid"))?;
    let b = make_fast_oscillation(a, r, alpha, t0)?;
    if !(lambda >= 0.0) {
        return Err(domain(format!("lambda must be non-negative, got {lambda}")));
    }
    let (mu, log_g2, bb) = (mu(a), log_gamma2(a, r, alpha, t0), big_b(r, alpha, t0));
    bound_check(
        "fast_oscillations",
        b.label(),
        &b,
        lambda,
        data,
        (lambda * lambda + 2.0 / (t0 * t0), 4.0 * (2.0 * bb).exp()),
        |t| log_g2 + mu * (t0 / t).ln(),
        t_grid,
        cfg,
    )
}

/// `E(t) ≤ exp(m(M+8)/(λ t0)) (v0² + λ² u0²) (t0/t)^m`; the pinching is
/// checked on the run before integrating.
pub fn verify_hyperbolic(
    b: &DampingCoefficient,
    m: f64,
    big_m: f64,
    lambda: f64,
    data: ModeData,
    t_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<BoundReport, AnalysisError> {
    if !(lambda > 0.0) {
        return Err(domain(format!("hyperbolic bound needs lambda > 0, got {lambda}")));
    }
    if !(m > 0.0 && big_m >= m) {
        return Err(domain(format!("need M >= m > 0, got m = {m}, M = {big_m}")));
    }
    let t0 = b.t0();
    check_grid(t0, t_grid)?;
    check_pinched(b, m, big_m, *t_grid.last().unwrap(), 10_000)?;
    let c = m * (big_m + 8.0) / (lambda * t0);
    bound_check(
        "hyperbolic",
        format!("{} m={m} M={big_m}", b.label()),
        b,
        lambda,
        data,
        (lambda * lambda, 1.0),
        |t| c + m * (t0 / t).ln(),
        t_grid,
        cfg,
    )
}

/// `E(t) ≤ Γ4 (v0² + λ² u0²) (t0/t)^a` for `b = (a + r sin(t^α))/t`, `t0 = t_grid[0]`.
pub fn verify_hyp_alpha(
    a: f64,
    r: f64,
    alpha: f64,
    lambda: f64,
    data: ModeData,
    t_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<BoundReport, AnalysisError> {
    let t0 = *t_grid.first().ok_or_else(|| domain("empty time grid"))?;
    let b = make_fast_oscillation(a, r, alpha, t0)?;
    if !(lambda > 0.0) {
        return Err(domain(format!("hyperbolic bound needs lambda > 0, got {lambda}")));
    }
    let log_g4 = log_gamma4(a, r, alpha, lambda, t0);
    bound_check(
        "fast_oscillations_hyperbolic",
        b.label(),
        &b,
        lambda,
        data,
        (lambda * lambda, 1.0),
        |t| log_g4 + a * (t0 / t).ln(),
        t_grid,
        cfg,
    )
}

/// Both halves of the parabolic-regime estimate around the turning time `t1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicSplitReport {
    /// First zero of the velocity of the solution launched by `(0, v0)`;
    /// `None` when it does not occur before the end of the grid.
    pub t1: Option<f64>,
    pub before: BoundReport,
    pub after: Option<BoundReport>,
    pub pass: bool,
}

/// Checks, for `b = b1 + b2` with `b1 ≥ m/t` and `|∫ b2| ≤ B`,
/// `E(t) ≤ 2λ²u0² + 2e^{2B} v0² {(t0/t)^{2m} + λ² γ(m,t0,t)²}` up to `t1` and
/// `E(t) ≤ 2λ²u0² + 2e^{2B} v0² λ² γ(m,t0,t1)²` after it.
#[allow(clippy::too_many_arguments)]
pub fn verify_parabolic_split(
    b: &DampingCoefficient,
    m: f64,
    big_b: f64,
    lambda: f64,
    u0: f64,
    v0: f64,
    t_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<ParabolicSplitReport, AnalysisError> {
    if !(lambda > 0.0) {
        return Err(domain(format!("parabolic split needs lambda > 0, got {lambda}")));
    }
    if !(m > 0.0 && big_b >= 0.0) {
        return Err(domain(format!("need m > 0 and B >= 0, got m = {m}, B = {big_b}")));
    }
    let t0 = b.t0();
    check_grid(t0, t_grid)?;
    let t_end = *t_grid.last().unwrap();
    let t1 = if v0 == 0.0 {
        Some(t0)
    } else {
        find_t1(b, lambda, 0.0, v0, t0, t_end, cfg)?
    };
    let c = cfg.clone().with_grid(OutputGrid::Explicit(t_grid.to_vec()));
    let energy = integrate_mode(b, lambda, u0, v0, t0, t_end, &c)?.energy;
    let l2 = lambda * lambda;
    let (e1, e2) = (2.0 * l2 * u0 * u0, 2.0 * (2.0 * big_b).exp() * v0 * v0);
    let label = format!("{} m={m} B={big_b} lambda={lambda} data=({u0},{v0})", b.label());
    let split = t1.unwrap_or(f64::INFINITY);
    let (mut tb, mut rb, mut ta, mut ra) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let after_rhs = match t1 {
        Some(t1) => e1 + e2 * l2 * gamma_fn(m, t0, t1)?.powi(2),
        None => f64::NAN,
    };
    for (&t, &e) in t_grid.iter().zip(&energy) {
        if t <= split {
            let rhs = e1 + e2 * ((t0 / t).powf(2.0 * m) + l2 * gamma_fn(m, t0, t)?.powi(2));
            tb.push(t);
            rb.push(log_ratio(e, rhs));
        } else {
            ta.push(t);
            ra.push(log_ratio(e, after_rhs));
        }
    }
    let before = BoundReport::from_log_ratios("parabolic_before", label.clone(), &tb, &rb);
    let after = (!ta.is_empty()).then(|| BoundReport::from_log_ratios("parabolic_after", label, &ta, &ra));
    let pass = before.pass && after.as_ref().map_or(true, |r| r.pass);
    Ok(ParabolicSplitReport { t1, before, after, pass })
}

fn log_ratio(e: f64, rhs: f64) -> f64 {
    if e == 0.0 {
        f64::NEG_INFINITY
    } else {
        e.ln() - rhs.ln()
    }
}

/// Per-mode decay exponents for `b = m/t` on a model with `min λ_k > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoerciveReport {
    pub m: f64,
    pub lambdas: Vec<f64>,
    pub exponents: Vec<f64>,
    pub min_exponent: f64,
}

/// Fits the single-mode energy exponent of every mode for `b = m/t`, data `(0, 1)`.
pub fn coercive_exponents(
    model: &SpectralModel,
    m: f64,
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<CoerciveReport, AnalysisError> {
    if !model.coercive() {
        return Err(domain("coercive check needs all mode frequencies positive"));
    }
    let b = DampingCoefficient::scale_invariant(m, t0)?;
    let c = cfg.clone().with_grid(OutputGrid::LogSpaced(200));
    let lambdas: Vec<f64> = model.modes().iter().map(|md| md.lambda).collect();
    let exponents = lambdas
        .par_iter()
        .map(|&l| {
            let tr = integrate_mode(&b, l, 0.0, 1.0, t0, t_end, &c)?;
            Ok(fit_decay_exponent_log(&tr.log_energy_samples(), None)?.exponent)
        })
        .collect::<Result<Vec<f64>, AnalysisError>>()?;
    let min_exponent = exponents.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CoerciveReport {
        m,
        lambdas,
        exponents,
        min_exponent,
    })
}

/// Samples per decade of the `𝓔(t)` curves behind the table.
pub const TABLE_POINTS_PER_DECADE: usize = 50;
/// Correlation with `1/log t` required of logarithmic rows.
pub const LOG_CORRELATION_MIN: f64 = 0.99;
/// Fraction of `𝓔(10 t0)` that rows without decay must keep.
pub const NO_DECAY_FRACTION: f64 = 0.5;

/// Time span of a row: four decades, three for `b = t`, two for `b = c t^q`
/// whose stiffness grows with the damping.
pub fn table1_horizon(row: Table1Row) -> (f64, f64) {
    let t0 = row.default_t0();
    let decades = match row {
        Table1Row::Linear => 3.0,
        Table1Row::InverseIntegrableTail { .. } => 2.0,
        _ => 4.0,
    };
    (t0, t0 * 10f64.powf(decades))
}

/// Tolerance on fitted exponents: 0.05 for `m/t` with `m < 2`, 0.1 otherwise.
pub fn table1_tolerance(row: Table1Row) -> f64 {
    match row {
        Table1Row::HyperbolicScaleInvariant { .. } => 0.05,
        _ => 0.1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum RowCheck {
    Exponent { expected: f64, fitted: f64, tolerance: f64, residual: f64 },
    /// Correlation of the binned maxima of `𝓔` with `1/log t` over the fit window.
    InverseLog { correlation: f64 },
    /// `min 𝓔(t) / 𝓔(10 t0)` for `t ≥ 10 t0`.
    NoDecay { reference: f64, min_ratio: f64 },
}

impl RowCheck {
    fn measure(&self) -> (&'static str, f64, f64) {
        match *self {
            RowCheck::Exponent { fitted, tolerance, .. } => ("exponent", fitted, tolerance),
            RowCheck::InverseLog { correlation } => ("corr_inv_log", correlation, LOG_CORRELATION_MIN),
            RowCheck::NoDecay { min_ratio, .. } => ("min_ratio", min_ratio, NO_DECAY_FRACTION),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Entry {
    pub row: String,
    pub coefficient: String,
    pub predicted: RateDescriptor,
    pub span: (f64, f64),
    pub check: RowCheck,
    pub pass: bool,
    #[serde(skip)]
    pub curve: Option<EnergyNormCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub entries: Vec<Table1Entry>,
}

impl Table1Report {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let header = ["row", "coefficient", "predicted", "span", "measure", "value", "target", "pass"];
        let rows: Vec<[String; 8]> = self
            .entries
            .iter()
            .map(|e| {
                let (measure, value, target) = e.check.measure();
                let target = match e.check {
                    RowCheck::Exponent { expected, tolerance, .. } => format!("{expected} ± {tolerance}"),
                    _ => format!(">= {target}"),
                };
                [
                    e.row.clone(),
                    e.coefficient.clone(),
                    e.predicted.to_string(),
                    format!("[{:.4}, {:.4e}]", e.span.0, e.span.1),
                    measure.into(),
                    format!("{value:.4}"),
                    target,
                    if e.pass { "yes" } else { "NO" }.into(),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(&header.map(String::from));
        for r in &rows {
            line(r);
        }
        out
    }

    /// `row,coefficient,predicted,t0,t_end,measure,value,target,pass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "row,coefficient,predicted,t0,t_end,measure,value,target,pass")?;
        for e in &self.entries {
            let (measure, value, target) = e.check.measure();
            let target = match e.check {
                RowCheck::Exponent { expected, .. } => expected,
                _ => target,
            };
            writeln!(
                w,
                "{},{},{},{:.16e},{:.16e},{},{:.16e},{},{}",
                e.row, e.coefficient, e.predicted, e.span.0, e.span.1, measure, value, target, e.pass
            )?;
        }
        Ok(())
    }
}

/// Computes `𝓔(t)` for each row over its horizon and compares with the predicted rate.
pub fn reproduce_table1(
    rows: &[Table1Row],
    model: &SpectralModel,
    cfg: &IntegratorConfig,
) -> Result<Table1Report, AnalysisError> {
    let mut entries = Vec::with_capacity(rows.len());
    for &row in rows {
        row.validate()?;
        let (t0, t_end) = table1_horizon(row);
        let b = make_table1_coefficient(row, t0)?;
        let n = ((t_end / t0).log10() * TABLE_POINTS_PER_DECADE as f64).round() as usize + 1;
        let curve = energy_norm_curve(model, &b, &log_grid(t0, t_end, n), cfg)?;
        let samples = curve.log_samples();
        let predicted = row.predicted_rate();
        let (check, pass) = match predicted {
            RateDescriptor::Power { exponent } => {
                let fit = fit_decay_exponent_log(&samples, None)?;
                let tolerance = table1_tolerance(row);
                let pass = (fit.exponent - exponent).abs() <= tolerance;
                (
                    RowCheck::Exponent {
                        expected: exponent,
                        fitted: fit.exponent,
                        tolerance,
                        residual: fit.residual,
                    },
                    pass,
                )
            }
            RateDescriptor::InverseLog => {
                let decades = (t_end / t0).log10();
                let lo = t0 * 10f64.powf(DISCARD_FRACTION * decades);
                let maxima = bin_maxima(&samples, lo, t_end);
                let inv: Vec<f64> = maxima.iter().map(|p| 1.0 / p.0.ln()).collect();
                let e: Vec<f64> = maxima.iter().map(|p| p.1.exp()).collect();
                let correlation = correlation(&inv, &e);
                (RowCheck::InverseLog { correlation }, correlation >= LOG_CORRELATION_MIN)
            }
            RateDescriptor::NoDecay => {
                let t_ref = 10.0 * t0;
                let i_ref = samples.partition_point(|p| p.0 < t_ref * (1.0 - 1e-12));
                let reference = samples[i_ref].1;
                let min_log = samples[i_ref..].iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let min_ratio = (min_log - reference).exp();
                (
                    RowCheck::NoDecay {
                        reference: reference.exp(),
                        min_ratio,
                    },
                    min_ratio >= NO_DECAY_FRACTION,
                )
            }
        };
        entries.push(Table1Entry {
            row: row.name(),
            coefficient: b.label(),
            predicted,
            span: (t0, t_end),
            check,
            pass,
            curve: Some(curve),
        });
    }
    Ok(Table1Report { entries })
}

/// Per-seed result of the open-problem exploration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenProblemSeed {
    pub seed: u64,
    /// `sup_t 𝓔(t) (t/t0)^m`.
    pub sup_ratio: f64,
    pub worst_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenProblemSummary {
    pub m: f64,
    pub big_m: f64,
    pub t0: f64,
    pub t_end: f64,
    pub seeds: Vec<OpenProblemSeed>,
    pub max_sup_ratio: f64,
}

/// Records `sup_t 𝓔(t) (t/t0)^m` for random coefficients with
/// `m/t ≤ b(t) ≤ M/t^{m-1}`; evidence only.
#[allow(clippy::too_many_arguments)]
pub fn explore_open_problem(
    m: f64,
    big_m: f64,
    seeds: &[u64],
    segments: u32,
    model: &SpectralModel,
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<OpenProblemSummary, AnalysisError> {
    if !(t_end > t0) {
        return Err(domain(format!("need t_end > t0, got [{t0}, {t_end}]")));
    }
    let n = ((t_end / t0).log10() * 20.0).round() as usize + 1;
    let grid = log_grid(t0, t_end, n.max(2));
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let b = make_open_problem(m, big_m, segments, seed, Scheme::PiecewiseConstant, t0)?;
        let curve = energy_norm_curve(model, &b, &grid, cfg)?;
        let (mut sup, mut worst_t) = (f64::NEG_INFINITY, t0);
        for (&t, &l) in curve.times.iter().zip(&curve.log_values) {
            let v = l + m * (t / t0).ln();
            if v > sup {
                sup = v;
                worst_t = t;
            }
        }
        out.push(OpenProblemSeed {
            seed,
            sup_ratio: sup.exp(),
            worst_t,
        });
    }
    let max_sup_ratio = out.iter().map(|s| s.sup_ratio).fold(0.0, f64::max);
    Ok(OpenProblemSummary {
        m,
        big_m,
        t0,
        t_end,
        seeds: out,
        max_sup_ratio,
    })
}

/// Names accepted by [`run_suite`].
pub const SUITES: [&str; 6] = ["gamma", "lemmas", "general", "fast", "parabolic", "hyperbolic"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub reports: Vec<BoundReport>,
    pub pass: bool,
}

/// Frequencies of the general-oscillation suite.
pub fn general_suite_lambdas() -> Vec<f64> {
    log_grid(1e-3, 10.0, 16)
}

/// `(m, M)` pairs of the general-oscillation suite.
pub const GENERAL_PAIRS: [(f64, f64); 3] = [(0.5, 1.5), (1.0, 3.0), (2.0, 4.0)];

/// `(a, r, α, t_end)` of the fast-oscillation suite; `α = 2` stops at `10³`.
pub const FAST_CONFIGS: [(f64, f64, f64, f64); 4] =
    [(1.0, 1.0, 2.0, 1e3), (2.0, 1.0, 1.5, 1e4), (3.0, 1.0, 1.5, 1e4), (1.0, 0.0, 2.0, 1e3)];

fn pinched(m: f64, big_m: f64, seed: u64) -> Result<DampingCoefficient, AnalysisError> {
    Ok(make_pinched_random(
        &PinchedRandomSpec {
            m,
            big_m,
            segment_count: 32,
            seed,
            scheme: Scheme::PiecewiseConstant,
        },
        1.0,
    )?)
}

/// Worst-data bound over several frequencies, one report per coefficient.
fn sweep(
    name: &str,
    label: String,
    lambdas: &[f64],
    check: impl Fn(f64) -> Result<BoundReport, AnalysisError> + Sync,
) -> Result<BoundReport, AnalysisError> {
    let parts = lambdas.par_iter().map(|&l| check(l)).collect::<Result<Vec<_>, _>>()?;
    Ok(BoundReport::combine(name, label, &parts))
}

/// Runs one named verification suite; `seeds` random coefficients per `(m, M)`.
pub fn run_suite(name: &str, seeds: u64, cfg: &IntegratorConfig) -> Result<SuiteReport, AnalysisError> {
    let reports = match name {
        "gamma" => {
            let m_grid: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
            let g = check_gamma_inequality(&m_grid, &log_grid(0.1, 10.0, 20), &log_grid(0.1, 1e4, 50))?;
            vec![BoundReport {
                bound_name: "gamma".into(),
                label: format!("m in [0.1, 5] x t0 in [0.1, 10] x t in [0.1, 1e4], {} points", g.points),
                max_ratio: g.max_ratio,
                worst_t: g.worst.2,
                pass: g.pass,
            }]
        }
        "lemmas" => lemma_examples()?
            .into_iter()
            .map(|(label, r)| BoundReport {
                bound_name: format!("lemma_{}", label.split(' ').next().unwrap_or("")),
                label,
                max_ratio: r.max_ratio,
                worst_t: r.worst_t,
                pass: r.pass,
            })
            .collect(),
        "general" => {
            let grid = log_grid(1.0, 1e4, 64);
            let lambdas = general_suite_lambdas();
            let mut out = Vec::new();
            for (m, big_m) in GENERAL_PAIRS {
                for seed in 0..seeds {
                    let b = pinched(m, big_m, seed)?;
                    out.push(sweep("general_oscillations", format!("{} modes=16", b.label()), &lambdas, |l| {
                        verify_prop_main_1(&b, l, ModeData::Worst, &grid, cfg)
                    })?);
                }
            }
            let b = DampingCoefficient::scale_invariant(1.0, 1.0)?;
            out.push(verify_prop_main_1(&b, 1.0, ModeData::Pair { u0: 0.0, v0: 1.0 }, &grid, cfg)?);
            out.push(verify_prop_main_1(&b, 0.0, ModeData::Pair { u0: 1.0, v0: 0.0 }, &grid, cfg)?);
            out
        }
        "fast" => {
            let lambdas = [0.01, 0.1, 1.0, 10.0];
            let mut out = Vec::new();
            for (a, r, alpha, t_end) in FAST_CONFIGS {
                let grid = log_grid(1.0, t_end, 64);
                let label = format!("a={a} r={r} alpha={alpha}");
                out.push(sweep("fast_oscillations", label.clone(), &lambdas, |l| {
                    verify_prop_main_2(a, r, alpha, l, ModeData::Worst, &grid, cfg)
                })?);
                out.push(sweep("fast_oscillations_hyperbolic", label, &lambdas, |l| {
                    verify_hyp_alpha(a, r, alpha, l, ModeData::Worst, &grid, cfg)
                })?);
            }
            out
        }
        "parabolic" => {
            let grid = log_grid(1.0, 1e4, 200);
            let cases = [
                (DampingCoefficient::scale_invariant(1.0, 1.0)?, 1.0, 0.0),
                (make_fast_oscillation(2.0, 1.0, 1.5, 1.0)?, 2.0, big_b(1.0, 1.5, 1.0)),
            ];
            let mut out = Vec::new();
            for (b, m, bb) in &cases {
                for lambda in [0.01, 1.0] {
                    for (u0, v0) in [(0.3, 1.0), (1.0, 0.0), (0.0, -1.0)] {
                        let r = verify_parabolic_split(b, *m, *bb, lambda, u0, v0, &grid, cfg)?;
                        out.push(r.before);
                        out.extend(r.after);
                    }
                }
            }
            out
        }
        "hyperbolic" => {
            let grid = log_grid(1.0, 1e4, 64);
            let mut out = Vec::new();
            let unit = ModeData::Pair { u0: 0.0, v0: 1.0 };
            let b1 = DampingCoefficient::scale_invariant(1.0, 1.0)?;
            out.push(verify_hyperbolic(&b1, 1.0, 1.0, 10.0, unit, &grid, cfg)?);
            let b3 = DampingCoefficient::scale_invariant(3.0, 1.0)?;
            out.push(verify_hyperbolic(&b3, 3.0, 3.0, 1.0, unit, &grid, cfg)?);
            for seed in 0..seeds {
                let b = pinched(1.0, 3.0, seed)?;
                out.push(sweep("hyperbolic", b.label(), &[0.1, 1.0, 10.0], |l| {
                    verify_hyperbolic(&b, 1.0, 3.0, l, ModeData::Worst, &grid, cfg)
                })?);
            }
            out
        }
        other => return Err(domain(format!("unknown suite `{other}`, expected one of {}", SUITES.join(", ")))),
    };
    let pass = reports.iter().all(|r| r.pass);
    Ok(SuiteReport {
        name: name.into(),
        reports,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damping::log_grid;

    #[test]
    fn exact_power_law() {
        let s: Vec<(f64, f64)> = log_grid(1.0, 1e4, 400).into_iter().map(|t| (t, t.powi(-2))).collect();
        let f = fit_decay_exponent(&s, None).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-10, "{}", f.exponent);
        assert!((f.prefactor - 1.0).abs() < 1e-8);
    }

    #[test]
    fn oscillating_power_law() {
        let s: Vec<(f64, f64)> = (0..2_000_000)
            .map(|i| 1.0 + i as f64 * 0.005)
            .map(|t| (t, (2.0 + t.cos()) / t))
            .collect();
        let f = fit_decay_exponent(&s, None).unwrap();
        assert!((f.exponent - 1.0).abs() < 0.02, "{}", f.exponent);
    }

    #[test]
    fn constant_energy() {
        let s: Vec<(f64, f64)> = log_grid(1.0, 1e3, 200).into_iter().map(|t| (t, 0.7)).collect();
        assert_eq!(fit_decay_exponent(&s, None).unwrap().exponent, 0.0);
    }

    #[test]
    fn short_span_and_bad_energy_are_rejected() {
        let s: Vec<(f64, f64)> = log_grid(1.0, 50.0, 200).into_iter().map(|t| (t, 1.0 / t)).collect();
        assert!(fit_decay_exponent(&s, None).is_err());
        let mut s: Vec<(f64, f64)> = log_grid(1.0, 1e3, 200).into_iter().map(|t| (t, 1.0 / t)).collect();
        s[10].1 = 0.0;
        assert!(fit_decay_exponent(&s, None).is_err());
    }
}
