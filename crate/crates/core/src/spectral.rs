//! Discrete spectral model of `A`: modes `λ_k` with weights `w_k`.
//!
//! Energies of PDE solutions are weighted sums over modes. The energy operator
//! norm `𝓔(t)` is computed per mode from the 2×2 propagator as a generalized
//! eigenvalue, which is exact for a discrete model.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damping::{log_grid, DampingCoefficient};
use crate::modeode::{integrate_mode, propagator_curve, IntegratorConfig, ModeError, OutputGrid, Propagator};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("mode {index} (lambda = {lambda}): {source}")]
    Mode {
        index: usize,
        lambda: f64,
        #[source]
        source: ModeError,
    },
    #[error("invalid spectral model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn domain(msg: impl Into<String>) -> SpectralError {
    SpectralError::Domain(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub lambda: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct SpectralModel {
    modes: Vec<Mode>,
    /// Smallest frequency.
    lambda0: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    modes: Vec<Mode>,
}

impl TryFrom<ModelFile> for SpectralModel {
    type Error = SpectralError;
    fn try_from(f: ModelFile) -> Result<Self, SpectralError> {
        SpectralModel::new(f.modes)
    }
}

impl From<SpectralModel> for ModelFile {
    fn from(m: SpectralModel) -> Self {
        ModelFile { modes: m.modes }
    }
}

impl Default for SpectralModel {
    /// 64 log-spaced unit-weight modes in `[1e-3, 1e2]`.
    fn default() -> Self {
        Self::log_spaced(64, 1e-3, 1e2).expect("valid default model")
    }
}

impl SpectralModel {
    /// Sorts the modes by frequency.
    pub fn new(mut modes: Vec<Mode>) -> Result<Self, SpectralError> {
        if modes.is_empty() {
            return Err(domain("spectral model has no modes"));
        }
        for m in &modes {
            if !(m.lambda >= 0.0 && m.lambda.is_finite()) {
                return Err(domain(format!("mode frequency must be finite and non-negative, got {}", m.lambda)));
            }
            if !(m.weight > 0.0 && m.weight.is_finite()) {
                return Err(domain(format!("mode weight must be positive, got {}", m.weight)));
            }
        }
        modes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        let lambda0 = modes[0].lambda;
        Ok(Self { modes, lambda0 })
    }

    /// `n` unit-weight modes log-spaced on `[lo, hi]`.
    pub fn log_spaced(n: usize, lo: f64, hi: f64) -> Result<Self, SpectralError> {
        if n == 0 || !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(domain(format!("need n >= 1 and 0 < lo <= hi, got n = {n}, [{lo}, {hi}]")));
        }
        let lambdas = if n == 1 { vec![lo] } else { log_grid(lo, hi, n) };
        Self::new(lambdas.into_iter().map(|lambda| Mode { lambda, weight: 1.0 }).collect())
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `min λ_k > 0`.
    pub fn coercive(&self) -> bool {
        self.lambda0 > 0.0
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SpectralError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Per-mode data `(u0_k, v0_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
}

/// `|u0|²`, `|A^{1/2} u0|²`, `|u1|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataNorms {
    pub u0_sq: f64,
    pub a_half_u0_sq: f64,
    pub u1_sq: f64,
}

impl DataNorms {
    /// `|u1|² + |A^{1/2} u0|² + |u0|²`.
    pub fn constraint(&self) -> f64 {
        self.u1_sq + self.a_half_u0_sq + self.u0_sq
    }
}

impl InitialData {
    pub fn zeros(n: usize) -> Self {
        Self {
            u0: vec![0.0; n],
            v0: vec![0.0; n],
        }
    }

    pub fn check(&self, model: &SpectralModel) -> Result<(), SpectralError> {
        if self.u0.len() != model.len() || self.v0.len() != model.len() {
            return Err(domain(format!(
                "data has {}/{} entries, model has {} modes",
                self.u0.len(),
                self.v0.len(),
                model.len()
            )));
        }
        if self.u0.iter().chain(&self.v0).any(|x| !x.is_finite()) {
            return Err(domain("initial data must be finite"));
        }
        Ok(())
    }

    pub fn norms(&self, model: &SpectralModel) -> DataNorms {
        let mut n = DataNorms {
            u0_sq: 0.0,
            a_half_u0_sq: 0.0,
            u1_sq: 0.0,
        };
        for ((m, u), v) in model.modes.iter().zip(&self.u0).zip(&self.v0) {
            n.u0_sq += m.weight * u * u;
            n.a_half_u0_sq += m.weight * m.lambda * m.lambda * u * u;
            n.u1_sq += m.weight * v * v;
        }
        n
    }

    /// Rescales to unit constraint norm.
    pub fn normalized(&self, model: &SpectralModel) -> Result<Self, SpectralError> {
        let c = self.norms(model).constraint();
        if !(c > 0.0) {
            return Err(domain("cannot normalize zero data"));
        }
        let s = 1.0 / c.sqrt();
        Ok(Self {
            u0: self.u0.iter().map(|x| x * s).collect(),
            v0: self.v0.iter().map(|x| x * s).collect(),
        })
    }
}

fn mode_error(index: usize, lambda: f64) -> impl Fn(ModeError) -> SpectralError {
    move |source| SpectralError::Mode { index, lambda, source }
}

fn check_times(t0: f64, times: &[f64]) -> Result<(), SpectralError> {
    if times.is_empty() || times[0] < t0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("time grid must be non-empty, strictly increasing and start at or after t0"));
    }
    Ok(())
}

/// `E_u(t) = Σ w_k (v_k² + λ_k² u_k²)` on `t_grid`, integrating from `b.t0()`.
pub fn synthesize_energy(
    model: &SpectralModel,
    data: &InitialData,
    b: &DampingCoefficient,
    t_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, SpectralError> {
    data.check(model)?;
    let t0 = b.t0();
    check_times(t0, t_grid)?;
    let t_end = *t_grid.last().unwrap();
    let per_mode: Vec<Result<Option<Vec<f64>>, SpectralError>> = model
        .modes
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            let (u0, v0) = (data.u0[k], data.v0[k]);
            if u0 == 0.0 && v0 == 0.0 {
                return Ok(None);
            }
            if t_end == t0 {
                return Ok(Some(vec![v0 * v0 + m.lambda * m.lambda * u0 * u0]));
            }
            let c = cfg.clone().with_grid(OutputGrid::Explicit(t_grid.to_vec()));
            let tr = integrate_mode(b, m.lambda, u0, v0, t0, t_end, &c).map_err(mode_error(k, m.lambda))?;
            Ok(Some(tr.energy))
        })
        .collect();
    let mut total = vec![0.0; t_grid.len()];
    for (k, e) in per_mode.into_iter().enumerate() {
        if let Some(e) = e? {
            for (acc, x) in total.iter_mut().zip(e) {
                *acc += model.modes[k].weight * x;
            }
        }
    }
    Ok(total)
}

/// `log sup E(t)` over data with `|u0|² + |A^{1/2}u0|² + |u1|² = 1`, for one mode.
pub fn mode_energy_gain_log(lambda: f64, p: &Propagator) -> f64 {
    p.log_energy_gain(lambda, lambda * lambda + 1.0, 1.0)
}

/// `𝓔(t)` on a time grid, with the mode attaining the maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyNormCurve {
    pub times: Vec<f64>,
    pub log_values: Vec<f64>,
    pub argmax_mode: Vec<usize>,
}

impl EnergyNormCurve {
    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|l| l.exp()).collect()
    }

    pub fn log_samples(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.log_values.iter().copied()).collect()
    }

    /// `t,energy_norm`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,energy_norm")?;
        for (t, l) in self.times.iter().zip(&self.log_values) {
            writeln!(w, "{:.16e},{:.16e}", t, l.exp())?;
        }
        Ok(())
    }
}

/// `𝓔(t)` at every time of `times`, propagating from `b.t0()`.
pub fn energy_norm_curve(
    model: &SpectralModel,
    b: &DampingCoefficient,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<EnergyNormCurve, SpectralError> {
    let t0 = b.t0();
    check_times(t0, times)?;
    let per_mode: Vec<Result<Vec<f64>, SpectralError>> = model
        .modes
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            let ps = propagator_curve(b, m.lambda, t0, times, cfg).map_err(mode_error(k, m.lambda))?;
            Ok(ps.iter().map(|p| mode_energy_gain_log(m.lambda, p)).collect())
        })
        .collect();
    let mut log_values = vec![f64::NEG_INFINITY; times.len()];
    let mut argmax_mode = vec![0; times.len()];
    for (k, v) in per_mode.into_iter().enumerate() {
        for (i, x) in v?.into_iter().enumerate() {
            if x > log_values[i] {
                log_values[i] = x;
                argmax_mode[i] = k;
            }
        }
    }
    Ok(EnergyNormCurve {
        times: times.to_vec(),
        log_values,
        argmax_mode,
    })
}

/// `𝓔(t)` at one time.
pub fn energy_operator_norm(
    model: &SpectralModel,
    b: &DampingCoefficient,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, SpectralError> {
    Ok(energy_norm_curve(model, b, &[t], cfg)?.log_values[0].exp())
}

/// Unit-norm velocity data spread uniformly over the modes with `|λ - λ*| ≤ s`.
pub fn build_resonant_pde_data(model: &SpectralModel, lambda_star: f64, s: f64) -> Result<InitialData, SpectralError> {
    if !(s >= 0.0 && lambda_star.is_finite()) {
        return Err(domain("half-width must be non-negative"));
    }
    let band: Vec<usize> = (0..model.len())
        .filter(|&k| (model.modes[k].lambda - lambda_star).abs() <= s)
        .collect();
    if band.is_empty() {
        return Err(domain(format!("no mode within {s} of lambda = {lambda_star}")));
    }
    let mass: f64 = band.iter().map(|&k| model.modes[k].weight).sum();
    let mut data = InitialData::zeros(model.len());
    for &k in &band {
        data.v0[k] = 1.0 / mass.sqrt();
    }
    Ok(data)
}
