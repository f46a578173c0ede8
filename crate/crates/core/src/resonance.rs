//! Resonant damping `b(t) = (a + r cos 2η(t))/t`, where `η` solves
//!
//! ```text
//! η' = λ - (a + r cos 2η) sin 2η / (2t),    η(t0) = π/2.
//! ```
//!
//! The drift `g = η - λt` is integrated instead of `η` and tabulated at the
//! accepted steps together with `g'` and `g''`, so `b` is read back through a
//! quintic Hermite interpolant. Steps are capped at a fraction of the period
//! `π/λ` so the interpolation error stays far below the integration tolerance.

use std::f64::consts::FRAC_PI_2;
use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{fit_decay_exponent_log, AnalysisError, DecayFit};
use crate::damping::{
    log_grid, CoefficientParams, CoefficientSpec, DampingCoefficient, DampingError, Envelope, Kind, ProfileFn,
};
use crate::modeode::{integrate_mode, integrate_polar, IntegratorConfig, ModeError, OutputGrid};
use crate::ode::{self, Flow, OdeError, OdeSystem, StepperOptions};
use crate::oscint::{cumulative_quad, dyadic_report, CauchyReport, OscintError};

#[derive(Debug, Error)]
pub enum ResonanceError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("eta equation failed: {0}")]
    Eta(#[from] OdeError),
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error(transparent)]
    Damping(#[from] DampingError),
    #[error(transparent)]
    Quadrature(#[from] OscintError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("resonant coefficient leaves its pinching band at t = {t}: t b(t) = {tb}")]
    Pinching { t: f64, tb: f64 },
}

fn domain(msg: impl Into<String>) -> ResonanceError {
    ResonanceError::Domain(msg.into())
}

/// Default construction horizon in units of `t0`.
pub const DEFAULT_SPAN: f64 = 1e6;
/// Step cap near `t0`, as a fraction of `π/λ`.
const STEP_FRACTION: f64 = 1.0 / 32.0;
/// Points in the pinching scan run at build time.
const BUILD_SCAN_POINTS: usize = 10_000;

/// `g' = -F(η)/(2t)` with `F(η) = (a + r cos 2η) sin 2η`.
struct Drift {
    a: f64,
    r: f64,
    lambda: f64,
}

impl Drift {
    fn f(&self, eta: f64) -> f64 {
        let (s2, c2) = (2.0 * eta).sin_cos();
        (self.a + self.r * c2) * s2
    }

    fn df(&self, eta: f64) -> f64 {
        2.0 * self.a * (2.0 * eta).cos() + 2.0 * self.r * (4.0 * eta).cos()
    }

    /// `(g', g'')` at `(t, g)`.
    fn derivatives(&self, t: f64, g: f64) -> (f64, f64) {
        let eta = self.lambda * t + g;
        let f = self.f(eta);
        let d1 = -f / (2.0 * t);
        let d2 = -self.df(eta) * (self.lambda + d1) / (2.0 * t) + f / (2.0 * t * t);
        (d1, d2)
    }
}

impl OdeSystem<1> for Drift {
    fn rhs(&self, t: f64, y: &[f64; 1], dy: &mut [f64; 1]) {
        dy[0] = -self.f(self.lambda * t + y[0]) / (2.0 * t);
    }
}

/// Tabulated `η` with quintic Hermite interpolation of the drift.
#[derive(Debug)]
struct EtaTable {
    a: f64,
    r: f64,
    lambda: f64,
    t: Vec<f64>,
    g: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl EtaTable {
    fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    fn drift(&self, t: f64) -> Option<f64> {
        let n = self.t.len();
        if !(t >= self.t[0] && t <= self.t[n - 1]) {
            return None;
        }
        let i = self.t.partition_point(|&x| x <= t).clamp(1, n - 1) - 1;
        let h = self.t[i + 1] - self.t[i];
        let s = (t - self.t[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let (s4, s5) = (s3 * s, s3 * s2);
        let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
        let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
        let h2 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
        let h5 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
        let h4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
        let h3 = 0.5 * (s3 - 2.0 * s4 + s5);
        Some(
            self.g[i] * h0
                + h * self.d1[i] * h1
                + h * h * self.d2[i] * h2
                + self.g[i + 1] * h5
                + h * self.d1[i + 1] * h4
                + h * h * self.d2[i + 1] * h3,
        )
    }

    fn b(&self, t: f64) -> Option<f64> {
        let eta = self.lambda * t + self.drift(t)?;
        Some((self.a + self.r * (2.0 * eta).cos()) / t)
    }
}

impl ProfileFn for EtaTable {
    fn eval(&self, t: f64) -> f64 {
        self.b(t).unwrap_or(f64::NAN)
    }

    fn valid_until(&self) -> f64 {
        self.t_end()
    }
}

/// The resonant coefficient together with its `η` table.
#[derive(Debug, Clone)]
pub struct ResonantDamping {
    pub a: f64,
    pub r: f64,
    pub lambda_star: f64,
    pub t0: f64,
    pub t_end: f64,
    table: Arc<EtaTable>,
}

impl ResonantDamping {
    /// `η(t)`, or an out-of-range error beyond the table.
    pub fn eta(&self, t: f64) -> Result<f64, DampingError> {
        Ok(self.lambda_star * t + self.drift(t)?)
    }

    /// `η(t) - λt`.
    pub fn drift(&self, t: f64) -> Result<f64, DampingError> {
        self.table.drift(t).ok_or(DampingError::OutOfRange {
            t,
            t0: self.t0,
            valid_until: self.t_end,
        })
    }

    pub fn b_eval(&self, t: f64) -> Result<f64, DampingError> {
        self.table.b(t).ok_or(DampingError::OutOfRange {
            t,
            t0: self.t0,
            valid_until: self.t_end,
        })
    }

    /// Number of table nodes.
    pub fn nodes(&self) -> usize {
        self.table.t.len()
    }

    pub fn spec(&self) -> CoefficientSpec {
        CoefficientSpec::new(
            CoefficientParams::Resonant {
                a: self.a,
                r: self.r,
                lambda_star: self.lambda_star,
                t_end: self.t_end,
            },
            self.t0,
        )
    }

    /// The coefficient as a [`DampingCoefficient`] with envelope `(a - r, a + r)`.
    pub fn coefficient(&self) -> DampingCoefficient {
        DampingCoefficient::from_profile(
            Kind::Resonant,
            self.table.clone(),
            self.t0,
            Some(Envelope {
                lower: self.a - self.r,
                upper: self.a + self.r,
            }),
            Some(self.spec()),
        )
        .expect("validated at build time")
    }

    /// Largest violation of `(a - r)/t ≤ b(t) ≤ (a + r)/t` on a log grid of `n` points.
    pub fn pinching_violation(&self, n: usize) -> (f64, f64) {
        let mut worst = (0.0, self.t0);
        for t in log_grid(self.t0, self.t_end, n) {
            let tb = t * self.table.eval(t);
            let v = (self.a - self.r - tb).max(tb - self.a - self.r);
            if v > worst.0 || v.is_nan() {
                worst = (v, t);
            }
        }
        worst
    }

    /// `t,eta,b` on the given times.
    pub fn write_eta_csv<W: Write>(&self, mut w: W, times: &[f64]) -> io::Result<()> {
        writeln!(w, "t,eta,b")?;
        for &t in times {
            let (eta, b) = match (self.eta(t), self.b_eval(t)) {
                (Ok(e), Ok(b)) => (e, b),
                _ => return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("t = {t} outside the table"))),
            };
            writeln!(w, "{t:.16e},{eta:.16e},{b:.16e}")?;
        }
        Ok(())
    }
}

/// Solves the `η` equation on `[t0, t_end]` and tabulates it.
pub fn build_resonant(
    a: f64,
    r: f64,
    lambda_star: f64,
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<ResonantDamping, ResonanceError> {
    if !(r > 0.0 && a >= r && a.is_finite()) {
        return Err(domain(format!("need a >= r > 0, got a = {a}, r = {r}")));
    }
    if !(lambda_star > 0.0 && lambda_star.is_finite()) {
        return Err(domain(format!("lambda_star must be positive, got {lambda_star}")));
    }
    if !(t0 > 0.0 && t_end > t0 && t_end.is_finite()) {
        return Err(domain(format!("need 0 < t0 < t_end, got [{t0}, {t_end}]")));
    }
    cfg.validate()?;
    let sys = Drift { a, r, lambda: lambda_star };
    let h_cap = STEP_FRACTION * std::f64::consts::PI / lambda_star;
    let mut t = Vec::new();
    let mut g = Vec::new();
    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    let mut push = |tt: f64, gg: f64| {
        let (a1, a2) = sys.derivatives(tt, gg);
        t.push(tt);
        g.push(gg);
        d1.push(a1);
        d2.push(a2);
    };
    let g0 = FRAC_PI_2 - lambda_star * t0;
    push(t0, g0);
    // Geometric blocks [t0 2^k, t0 2^{k+1}] with cap h_cap (2^k)^{1/6}: the
    // interpolation error of the drift then stays flat in t.
    let mut lo = t0;
    let mut y = [g0];
    let mut k = 0;
    while lo < t_end {
        let hi = (t0 * 2f64.powi(k + 1)).min(t_end);
        let mut opts = StepperOptions::new(cfg.rel_tol, cfg.abs_tol);
        opts.max_steps = cfg.max_steps;
        opts.max_step = h_cap * 2f64.powf(k as f64 / 6.0);
        let out = ode::integrate(&sys, lo, y, hi, &[], opts, |step| {
            push(step.t1, step.y1[0]);
            Flow::Continue
        })?;
        y = out.y;
        lo = hi;
        k += 1;
    }
    let table = EtaTable {
        a,
        r,
        lambda: lambda_star,
        t,
        g,
        d1,
        d2,
    };
    let rd = ResonantDamping {
        a,
        r,
        lambda_star,
        t0,
        t_end,
        table: Arc::new(table),
    };
    let (v, at) = rd.pinching_violation(BUILD_SCAN_POINTS);
    if !(v <= 1e-12 * (a + r)) {
        return Err(ResonanceError::Pinching {
            t: at,
            tb: at * rd.table.eval(at),
        });
    }
    Ok(rd)
}

/// Builds any coefficient spec, including the resonant kind.
pub fn coefficient_from_spec(spec: &CoefficientSpec, cfg: &IntegratorConfig) -> Result<DampingCoefficient, ResonanceError> {
    match &spec.params {
        CoefficientParams::Resonant { a, r, lambda_star, t_end } => {
            Ok(build_resonant(*a, *r, *lambda_star, spec.t0, *t_end, cfg)?.coefficient())
        }
        _ => Ok(spec.build()?),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEtaReport {
    pub max_deviation: f64,
    pub worst_t: f64,
    pub theta_t0: f64,
    pub eta_t0: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Tolerance of the `θ ≡ η` identity.
pub const THETA_ETA_TOL: f64 = 1e-6;

/// Integrates the polar phase under the resonant `b` from `θ(t0) = π/2` and
/// compares it with `η`.
///
/// `θ0 = π/2` corresponds to the data `(u, u') = (0, -1)`; the phase equation
/// is `π`-periodic, so the data `(0, 1)` gives the same `θ` up to `π`.
pub fn verify_theta_equals_eta(rd: &ResonantDamping, cfg: &IntegratorConfig) -> Result<ThetaEtaReport, ResonanceError> {
    let b = rd.coefficient();
    let cfg = cfg.clone().with_grid(OutputGrid::LogSpaced(256));
    let tr = integrate_polar(&b, rd.lambda_star, 1.0, FRAC_PI_2, rd.t0, rd.t_end, &cfg)?;
    let mut worst = (0.0f64, rd.t0);
    for p in &tr.polar {
        let d = (p.h - rd.drift(p.t)?).abs();
        if d > worst.0 || d.is_nan() {
            worst = (d, p.t);
        }
    }
    Ok(ThetaEtaReport {
        max_deviation: worst.0,
        worst_t: worst.1,
        theta_t0: tr.polar[0].theta,
        eta_t0: rd.eta(rd.t0)?,
        samples: tr.polar.len(),
        pass: worst.0 <= THETA_ETA_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitBReport {
    /// Dyadic monitoring of `(t0/t)^a exp(∫ b)`.
    pub cauchy: CauchyReport,
    pub limit_estimate: f64,
    pub last_difference: f64,
    pub pass: bool,
}

/// `(t0/t)^a exp(∫_{t0}^t b) = exp(r ∫ cos(2η)/s)` at `t = 2^k t0`.
pub fn verify_limit_b(rd: &ResonantDamping, dyads: usize) -> Result<LimitBReport, ResonanceError> {
    let t_max = rd.t0 * 2f64.powi(dyads as i32);
    if t_max > rd.t_end * (1.0 + 1e-12) {
        return Err(DampingError::OutOfRange {
            t: t_max,
            t0: rd.t0,
            valid_until: rd.t_end,
        }
        .into());
    }
    let t_max = t_max.min(rd.t_end);
    let marks: Vec<f64> = (0..=dyads).map(|k| (rd.t0 * 2f64.powi(k as i32)).min(t_max)).collect();
    let table = &rd.table;
    let f = |s: f64| (2.0 * (table.lambda * s + table.drift(s).unwrap_or(f64::NAN))).cos() / s;
    let hint = |s: f64| 2.0 * table.lambda + (rd.a + rd.r) / s;
    let pi = cumulative_quad(f, rd.t0, t_max, &marks, 1e-10, Some(&hint))?;
    let r = rd.r;
    let cauchy = dyadic_report(&pi, rd.t0, dyads, |v| (r * v).exp());
    Ok(LimitBReport {
        limit_estimate: cauchy.limit_estimate,
        last_difference: cauchy.last_difference,
        pass: cauchy.pass && cauchy.limit_estimate.is_finite() && cauchy.limit_estimate > 0.0,
        cauchy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonantDecay {
    pub fit: DecayFit,
    /// `a - r/2`.
    pub predicted_exponent: f64,
    /// Infimum of `E(t) (t/t0)^{a - r/2}` over the run.
    pub gamma3_estimate: f64,
    /// Minimum of the normalized energy over `[t0, 10 t0]`.
    pub first_decade_min: f64,
    /// Minimum of the normalized energy after `10 t0`.
    pub later_min: f64,
    /// `later_min ≥ 0.9 · first_decade_min`.
    pub lower_bound_pass: bool,
    /// `(t, log E)` of the run.
    #[serde(skip)]
    pub log_energy: Vec<(f64, f64)>,
}

/// Output density of the resonant and contrast runs.
pub const DECAY_POINTS_PER_DECADE: usize = 400;

/// Energy of the mode `λ = λ*` with data `(0, 1)` under the resonant `b`.
pub fn measure_resonant_decay(rd: &ResonantDamping, cfg: &IntegratorConfig) -> Result<ResonantDecay, ResonanceError> {
    let b = rd.coefficient();
    let cfg = cfg.clone().with_grid(OutputGrid::LogSpaced(DECAY_POINTS_PER_DECADE));
    let tr = integrate_mode(&b, rd.lambda_star, 0.0, 1.0, rd.t0, rd.t_end, &cfg)?;
    let samples = tr.log_energy_samples();
    let fit = fit_decay_exponent_log(&samples, None)?;
    let q = rd.a - 0.5 * rd.r;
    let normalized: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(t, le)| (t, (le + q * (t / rd.t0).ln()).exp()))
        .collect();
    let split = 10.0 * rd.t0;
    let min_of = |pred: &dyn Fn(f64) -> bool| {
        normalized
            .iter()
            .filter(|(t, _)| pred(*t))
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
    };
    let first_decade_min = min_of(&|t| t <= split);
    let later_min = min_of(&|t| t > split);
    Ok(ResonantDecay {
        fit,
        predicted_exponent: q,
        gamma3_estimate: first_decade_min.min(later_min),
        first_decade_min,
        later_min,
        lower_bound_pass: later_min >= 0.9 * first_decade_min,
        log_energy: samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastDecay {
    pub fit: DecayFit,
    /// `(t, log E)` of the run.
    #[serde(skip)]
    pub log_energy: Vec<(f64, f64)>,
}

/// Same mode and data under `b = a/t`.
pub fn contrast_decay(rd: &ResonantDamping, cfg: &IntegratorConfig) -> Result<ContrastDecay, ResonanceError> {
    let b = DampingCoefficient::scale_invariant(rd.a, rd.t0)?;
    let cfg = cfg.clone().with_grid(OutputGrid::LogSpaced(DECAY_POINTS_PER_DECADE));
    let tr = integrate_mode(&b, rd.lambda_star, 0.0, 1.0, rd.t0, rd.t_end, &cfg)?;
    let log_energy = tr.log_energy_samples();
    Ok(ContrastDecay {
        fit: fit_decay_exponent_log(&log_energy, None)?,
        log_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn initial_value_of_b() {
        let rd = build_resonant(1.0, 0.5, 1.0, 1.0, 100.0, &cfg()).unwrap();
        assert!((rd.b_eval(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(rd.eta(1.0).unwrap(), FRAC_PI_2);
    }

    #[test]
    fn vanishing_amplitude_gives_a_over_t() {
        let rd = build_resonant(1.0, 1e-12, 1.0, 1.0, 1e3, &cfg()).unwrap();
        for t in log_grid(1.0, 1e3, 1000) {
            let b = rd.b_eval(t).unwrap();
            assert!((b * t - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn drift_stays_within_integrated_bound() {
        let rd = build_resonant(1.0, 0.5, 1.0, 1.0, 1e4, &cfg()).unwrap();
        let g0 = rd.drift(1.0).unwrap();
        for t in log_grid(1.0, 1e4, 5000) {
            assert!((rd.drift(t).unwrap() - g0).abs() <= 0.75 * t.ln() + 1e-9);
        }
    }

    #[test]
    fn interpolant_matches_dense_reintegration() {
        let rd = build_resonant(1.0, 0.5, 1.0, 1.0, 200.0, &cfg()).unwrap();
        let sys = Drift { a: 1.0, r: 0.5, lambda: 1.0 };
        let mut worst: f64 = 0.0;
        let mut opts = StepperOptions::new(1e-13, 1e-15);
        opts.max_step = 0.01;
        ode::integrate(&sys, 1.0, [FRAC_PI_2 - 1.0], 200.0, &[], opts, |step| {
            let tm = 0.5 * (step.t0 + step.t1);
            worst = worst.max((step.eval(tm)[0] - rd.drift(tm).unwrap()).abs());
            Flow::Continue
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn lookups_beyond_the_table_fail() {
        let rd = build_resonant(1.0, 0.5, 1.0, 1.0, 10.0, &cfg()).unwrap();
        assert!(matches!(rd.b_eval(10.5), Err(DampingError::OutOfRange { .. })));
        let b = rd.coefficient();
        assert!(integrate_mode(&b, 1.0, 0.0, 1.0, 1.0, 20.0, &cfg()).is_err());
    }

    #[test]
    fn hypothesis_is_enforced() {
        assert!(matches!(build_resonant(1.0, 2.0, 1.0, 1.0, 10.0, &cfg()), Err(ResonanceError::Domain(_))));
        assert!(matches!(build_resonant(1.0, 0.0, 1.0, 1.0, 10.0, &cfg()), Err(ResonanceError::Domain(_))));
    }

    #[test]
    fn limit_quantity_is_one_without_oscillation() {
        let rd = build_resonant(1.0, 1e-12, 1.0, 1.0, 1024.0, &cfg()).unwrap();
        let rep = verify_limit_b(&rd, 10).unwrap();
        assert!(rep.cauchy.dyad_values.iter().all(|v| (v - 1.0).abs() < 1e-11));
    }

    #[test]
    fn spec_builds_resonant_kind() {
        let spec = CoefficientSpec::new(
            CoefficientParams::Resonant {
                a: 1.0,
                r: 0.5,
                lambda_star: 1.0,
                t_end: 50.0,
            },
            1.0,
        );
        let b = coefficient_from_spec(&spec, &cfg()).unwrap();
        assert_eq!(b.kind(), Kind::Resonant);
        assert_eq!(b.valid_until(), 50.0);
        let back = CoefficientSpec::from_json(&b.spec().unwrap().to_json()).unwrap();
        assert_eq!(&back, b.spec().unwrap());
    }
}
