//! Oscillating integrals `∫ trig(·)/s ds` and the explicit bounds they obey.
//!
//! Quadrature is adaptive Gauss–Kronrod (7/15 points) on panels seeded from
//! a local frequency hint, so that no initial panel spans more than a quarter
//! of the local period. Partial integrals at many upper limits come from one
//! cumulative pass; "the limit exists" claims are monitored on dyadic windows.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OscintError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("tolerance {tol:e} not reached: estimate {estimate} with error bound {error_bound:e}")]
    NotConverged { estimate: f64, error_bound: f64, tol: f64 },
}

// Kronrod abscissae (descending) and weights; Gauss weights for the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Subdivision budget per call.
pub const MAX_PANELS: usize = 1 << 22;

/// Kronrod value and `|K - G|`.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = hl * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * hl, ((k - g) * hl).abs())
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then(other.a.total_cmp(&self.a))
    }
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

fn splittable(p: &Panel) -> bool {
    let mid = 0.5 * (p.a + p.b);
    mid > p.a && mid < p.b && (p.b - p.a) > 1e-13 * p.a.abs().max(p.b.abs())
}

/// Global adaptive refinement of an initial partition.
fn adapt<F: Fn(f64) -> f64>(f: &F, edges: &[f64], tol: f64, budget: usize) -> (f64, f64, usize) {
    let mut heap: BinaryHeap<Panel> = edges
        .windows(2)
        .map(|w| {
            let (value, error) = gk15(f, w[0], w[1]);
            Panel { a: w[0], b: w[1], value, error }
        })
        .collect();
    let mut done = Vec::new();
    let mut err_total: f64 = heap.iter().map(|p| p.error).sum();
    while err_total > tol && heap.len() + done.len() < budget {
        let Some(p) = heap.pop() else { break };
        if !splittable(&p) {
            done.push(p);
            continue;
        }
        let mid = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(f, p.a, mid);
        let (v2, e2) = gk15(f, mid, p.b);
        heap.push(Panel { a: p.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: p.b, value: v2, error: e2 });
        err_total += e1 + e2 - p.error;
        if err_total < 0.0 || heap.len() % 4096 == 0 {
            err_total = heap.iter().chain(&done).map(|p| p.error).sum();
        }
    }
    let mut all: Vec<Panel> = heap.into_vec();
    all.extend(done);
    all.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut s = Neumaier::default();
    let mut e = 0.0;
    for p in &all {
        s.add(p.value);
        e += p.error;
    }
    (s.value(), e, all.len())
}

/// Panel edges on `[a, b]`: each panel at most a quarter of the local period
/// `2π/ω(t)` and at most as long as its left end (so `1/s` stays resolved).
fn seed_edges(a: f64, b: f64, hint: Option<&(dyn Fn(f64) -> f64 + Sync)>) -> Vec<f64> {
    let mut edges = vec![a];
    let mut t = a;
    while t < b {
        let mut w = if t > 0.0 { t } else { b - a };
        if let Some(omega) = hint {
            let om = omega(t).abs();
            if om > 0.0 && om.is_finite() {
                w = w.min(FRAC_PI_2 / om);
            }
        }
        let next = t + w;
        // avoid a sliver at the end
        t = if next >= b || b - next < 0.25 * w { b } else { next };
        edges.push(t);
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// `∫_{t0}^{t} f` to absolute tolerance `tol`.
pub fn osc_quad<F: Fn(f64) -> f64 + Sync>(f: F, t0: f64, t: f64, tol: f64) -> Result<QuadResult, OscintError> {
    osc_quad_hinted(f, t0, t, tol, None)
}

/// As [`osc_quad`], with a dominant angular frequency `ω(t)` of the integrand.
pub fn osc_quad_hinted<F: Fn(f64) -> f64 + Sync>(
    f: F,
    t0: f64,
    t: f64,
    tol: f64,
    hint: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<QuadResult, OscintError> {
    osc_quad_budget(f, t0, t, tol, hint, MAX_PANELS)
}

/// As [`osc_quad_hinted`] with an explicit panel budget.
pub fn osc_quad_budget<F: Fn(f64) -> f64 + Sync>(
    f: F,
    t0: f64,
    t: f64,
    tol: f64,
    hint: Option<&(dyn Fn(f64) -> f64 + Sync)>,
    max_panels: usize,
) -> Result<QuadResult, OscintError> {
    if !(t0.is_finite() && t.is_finite() && tol > 0.0) {
        return Err(OscintError::Domain(format!("need finite limits and tol > 0, got [{t0}, {t}], tol {tol}")));
    }
    if t == t0 {
        return Ok(QuadResult { value: 0.0, error: 0.0, panels: 0 });
    }
    if t < t0 {
        let r = osc_quad_budget(f, t, t0, tol, hint, max_panels)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }
    let edges = seed_edges(t0, t, hint);
    let (value, error, panels) = adapt(&f, &edges, tol, max_panels.max(2 * edges.len()));
    if !(error <= tol) {
        return Err(OscintError::NotConverged {
            estimate: value,
            error_bound: error,
            tol,
        });
    }
    Ok(QuadResult { value, error, panels })
}

/// Partial integrals `∫_{t0}^{τ} f` at every knot `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialIntegral {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub error: f64,
}

impl PartialIntegral {
    /// Value at a knot (exact match required).
    pub fn at(&self, t: f64) -> Option<f64> {
        let i = self.knots.partition_point(|&k| k < t);
        (i < self.knots.len() && self.knots[i] == t).then(|| self.values[i])
    }

    /// Extreme values over knots in `[lo, hi]`.
    pub fn range_on(&self, lo: f64, hi: f64, map: impl Fn(f64) -> f64) -> (f64, f64) {
        let i0 = self.knots.partition_point(|&k| k < lo);
        let i1 = self.knots.partition_point(|&k| k <= hi);
        self.values[i0..i1]
            .iter()
            .map(|&v| map(v))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

/// Cumulative integral on `[t0, t_end]` with `marks` forced as knots.
///
/// Panels are integrated independently (in parallel) to a share of `tol`
/// proportional to their length, then prefix-summed in order.
pub fn cumulative_quad<F: Fn(f64) -> f64 + Sync>(
    f: F,
    t0: f64,
    t_end: f64,
    marks: &[f64],
    tol: f64,
    hint: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<PartialIntegral, OscintError> {
    if !(t0.is_finite() && t_end.is_finite() && t_end >= t0 && tol > 0.0) {
        return Err(OscintError::Domain(format!("need t0 <= t_end and tol > 0, got [{t0}, {t_end}]")));
    }
    if marks.iter().any(|&m| m < t0 || m > t_end) {
        return Err(OscintError::Domain("marks must lie inside the integration window".into()));
    }
    let mut stops: Vec<f64> = marks.iter().copied().chain([t0, t_end]).collect();
    stops.sort_by(|a, b| a.total_cmp(b));
    stops.dedup();
    let mut knots = vec![t0];
    for w in stops.windows(2) {
        let e = seed_edges(w[0], w[1], hint);
        knots.extend_from_slice(&e[1..]);
    }
    let span = (t_end - t0).max(f64::MIN_POSITIVE);
    let pieces: Vec<(f64, f64, usize)> = knots
        .par_windows(2)
        .map(|w| {
            let local = tol * (w[1] - w[0]) / span;
            adapt(&f, w, local.max(1e-300), 1 << 16)
        })
        .collect();
    let mut values = Vec::with_capacity(knots.len());
    values.push(0.0);
    let mut s = Neumaier::default();
    let mut error = 0.0;
    for (v, e, _) in &pieces {
        s.add(*v);
        error += e;
        values.push(s.value());
    }
    if !(error <= tol) {
        return Err(OscintError::NotConverged {
            estimate: s.value(),
            error_bound: error,
            tol,
        });
    }
    Ok(PartialIntegral { knots, values, error })
}

/// Monitoring of a partial-integral family on the windows `[2^k t0, 2^{k+1} t0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    /// Value at `2^k t0`, `k = 0..=dyads`.
    pub dyad_values: Vec<f64>,
    /// `max - min` of the value over each dyadic window.
    pub window_oscillation: Vec<f64>,
    /// `|value(2^K t0) - value(2^{K-1} t0)|`.
    pub last_difference: f64,
    /// Midpoint of the last window's range.
    pub limit_estimate: f64,
    pub burn_in: usize,
    pub slack: f64,
    /// Window oscillations decrease (within slack) after the burn-in.
    pub pass: bool,
}

pub const CAUCHY_BURN_IN: usize = 4;
pub const CAUCHY_SLACK: f64 = 0.1;

/// Dyadic-window report of `map(∫_{t0}^τ f)`; `pi` must carry every `2^k t0` as a knot.
pub fn dyadic_report(pi: &PartialIntegral, t0: f64, dyads: usize, map: impl Fn(f64) -> f64) -> CauchyReport {
    let marks: Vec<f64> = (0..=dyads).map(|k| t0 * 2f64.powi(k as i32)).collect();
    let dyad_values: Vec<f64> = marks.iter().map(|&t| map(pi.at(t).unwrap_or(f64::NAN))).collect();
    let mut window_oscillation = Vec::with_capacity(dyads);
    let mut last_range = (f64::NAN, f64::NAN);
    for w in marks.windows(2) {
        let r = pi.range_on(w[0], w[1], &map);
        window_oscillation.push(r.1 - r.0);
        last_range = r;
    }
    let pass = window_oscillation.iter().all(|v| v.is_finite())
        && window_oscillation
            .windows(2)
            .skip(CAUCHY_BURN_IN)
            .all(|w| w[1] <= (1.0 + CAUCHY_SLACK) * w[0] + 1e-15);
    let n = dyad_values.len();
    CauchyReport {
        last_difference: if n >= 2 { (dyad_values[n - 1] - dyad_values[n - 2]).abs() } else { 0.0 },
        limit_estimate: 0.5 * (last_range.0 + last_range.1),
        dyad_values,
        window_oscillation,
        burn_in: CAUCHY_BURN_IN,
        slack: CAUCHY_SLACK,
        pass,
    }
}

/// Result of a lemma bound scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub bound: f64,
    pub max_ratio: f64,
    pub worst_t: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cauchy: Option<CauchyReport>,
    /// Window where `α s^{α-1} ∈ [λ, 3λ]`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stationary_window: Option<(f64, f64)>,
}

/// Default quadrature tolerance for bound scans.
pub const SCAN_TOL: f64 = 1e-10;
/// Points of the precondition scans.
pub const PRECONDITION_POINTS: usize = 20_000;

fn scan_grid(t0: f64, t_end: f64, extra: &[f64]) -> Vec<f64> {
    let mut g = if t_end > t0 {
        crate::damping::log_grid(t0, t_end, PRECONDITION_POINTS)
    } else {
        vec![t0]
    };
    g.extend_from_slice(extra);
    g
}

fn check_grid(t0: f64, t_grid: &[f64]) -> Result<f64, OscintError> {
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(OscintError::Domain(format!("t0 must be positive, got {t0}")));
    }
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t >= t0 && t.is_finite())) {
        return Err(OscintError::Domain("t_grid must be non-empty with every t >= t0".into()));
    }
    Ok(t_grid.iter().copied().fold(t0, f64::max))
}

fn ratio_scan(pi: &PartialIntegral, t_grid: &[f64], bound: f64) -> (f64, f64) {
    let mut worst = (0.0, t_grid[0]);
    for &t in t_grid {
        let r = pi.at(t).unwrap_or(f64::NAN).abs() / bound;
        if r > worst.0 || r.is_nan() {
            worst = (r, t);
        }
    }
    worst
}

/// `cos`/`sin` combination in the numerator `trig(φ) · trig(ψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrigPair {
    CosCos,
    CosSin,
    SinCos,
    SinSin,
}

impl TrigPair {
    fn eval(self, phi: f64, psi: f64) -> f64 {
        match self {
            TrigPair::CosCos => phi.cos() * psi.cos(),
            TrigPair::CosSin => phi.cos() * psi.sin(),
            TrigPair::SinCos => phi.sin() * psi.cos(),
            TrigPair::SinSin => phi.sin() * psi.sin(),
        }
    }
}

type Fn3 = Box<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>;
type Fn2 = Box<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// Phase `φ` with `(φ, φ', φ'')`, modulation `ψ` with `(ψ, ψ')`, and the
/// constants `|φ'| ≥ φ0`, `|ψ'| ≤ Ψ0/t` on the window `[t0, T]`.
pub struct PhaseAmplitudeSpec {
    pub phi: Fn3,
    pub psi: Fn2,
    pub phi0: f64,
    pub psi0: f64,
    pub window: (f64, f64),
}

impl std::fmt::Debug for PhaseAmplitudeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhaseAmplitudeSpec")
            .field("phi0", &self.phi0)
            .field("psi0", &self.psi0)
            .field("window", &self.window)
            .finish_non_exhaustive()
    }
}

impl PhaseAmplitudeSpec {
    /// Grid scan of `φ'' ≥ 0`, `|φ'| ≥ φ0`, `|ψ'| ≤ Ψ0/t`.
    pub fn check(&self, extra: &[f64]) -> Result<(), OscintError> {
        let (t0, t1) = self.window;
        for t in scan_grid(t0, t1, extra) {
            let (_, d1, d2) = (self.phi)(t);
            let (_, p1) = (self.psi)(t);
            if d2 < -1e-12 * (1.0 + d1.abs()) {
                return Err(OscintError::Precondition(format!("phi'' = {d2} < 0 at t = {t}")));
            }
            if d1.abs() < self.phi0 * (1.0 - 1e-12) {
                return Err(OscintError::Precondition(format!("|phi'| = {} < phi0 = {} at t = {t}", d1.abs(), self.phi0)));
            }
            if p1.abs() * t > self.psi0 * (1.0 + 1e-12) + 1e-300 {
                return Err(OscintError::Precondition(format!("|psi'| t = {} > Psi0 = {} at t = {t}", p1.abs() * t, self.psi0)));
            }
        }
        Ok(())
    }
}

/// Bound `|∫ trig(φ) trig(ψ)/s| ≤ (4 + Ψ0)/(φ0 t0)` on the grid.
pub fn check_lemma_int_phi_psi(spec: &PhaseAmplitudeSpec, pair: TrigPair, t_grid: &[f64]) -> Result<LemmaReport, OscintError> {
    let t0 = spec.window.0;
    let t_max = check_grid(t0, t_grid)?;
    if t_max > spec.window.1 {
        return Err(OscintError::Domain(format!("grid reaches {t_max}, beyond the window end {}", spec.window.1)));
    }
    if !(spec.phi0 > 0.0 && spec.psi0 >= 0.0) {
        return Err(OscintError::Domain("phi0 must be positive and Psi0 non-negative".into()));
    }
    spec.check(t_grid)?;
    let f = |s: f64| pair.eval((spec.phi)(s).0, (spec.psi)(s).0) / s;
    let hint = |s: f64| (spec.phi)(s).1.abs() + (spec.psi)(s).1.abs();
    let pi = cumulative_quad(f, t0, t_max, t_grid, SCAN_TOL, Some(&hint))?;
    let bound = (4.0 + spec.psi0) / (spec.phi0 * t0);
    let (max_ratio, worst_t) = ratio_scan(&pi, t_grid, bound);
    Ok(LemmaReport {
        bound,
        max_ratio,
        worst_t,
        pass: max_ratio <= 1.0,
        cauchy: None,
        stationary_window: None,
    })
}

fn check_h<H: Fn(f64) -> (f64, f64)>(h: &H, h0: f64, t0: f64, t_max: f64, extra: &[f64]) -> Result<(), OscintError> {
    if !(h0 >= 0.0 && h0.is_finite()) {
        return Err(OscintError::Domain(format!("H0 must be non-negative, got {h0}")));
    }
    for t in scan_grid(t0, t_max, extra) {
        let d = h(t).1;
        if d.abs() * t > h0 * (1.0 + 1e-12) + 1e-300 {
            return Err(OscintError::Precondition(format!("|h'(t)| t = {} exceeds H0 = {h0} at t = {t}", d.abs() * t)));
        }
    }
    Ok(())
}

fn dyad_marks(t0: f64, t_max: f64) -> Vec<f64> {
    let k = ((t_max / t0).log2().floor().max(0.0)) as i32;
    (0..=k).map(|j| t0 * 2f64.powi(j)).collect()
}

/// Bound `|∫ cos(nλs + n h(s))/s| ≤ 2(H0 + 4)/(λ t0)` on the grid, plus
/// dyadic-window convergence of the partial integrals.
pub fn check_lemma_osc_int<H: Fn(f64) -> (f64, f64) + Sync>(
    h: H,
    h0: f64,
    lambda: f64,
    n: u32,
    t0: f64,
    t_grid: &[f64],
) -> Result<LemmaReport, OscintError> {
    let t_max = check_grid(t0, t_grid)?;
    if !(lambda > 0.0 && lambda.is_finite()) || n == 0 {
        return Err(OscintError::Domain("lambda must be positive and n a positive integer".into()));
    }
    check_h(&h, h0, t0, t_max, t_grid)?;
    let nf = n as f64;
    let f = |s: f64| (nf * (lambda * s + h(s).0)).cos() / s;
    let hint = |s: f64| nf * (lambda + h0 / s);
    let dyads = dyad_marks(t0, t_max);
    let marks: Vec<f64> = t_grid.iter().chain(&dyads).copied().collect();
    let pi = cumulative_quad(f, t0, t_max, &marks, SCAN_TOL, Some(&hint))?;
    let bound = 2.0 * (h0 + 4.0) / (lambda * t0);
    let (max_ratio, worst_t) = ratio_scan(&pi, t_grid, bound);
    let cauchy = dyadic_report(&pi, t0, dyads.len() - 1, |v| v);
    Ok(LemmaReport {
        bound,
        max_ratio,
        worst_t,
        pass: max_ratio <= 1.0 && cauchy.pass,
        cauchy: Some(cauchy),
        stationary_window: None,
    })
}

/// `[t1*, t2*]` where `α s^{α-1}` runs over `[λ, 3λ]`.
pub fn stationary_window(lambda: f64, alpha: f64) -> (f64, f64) {
    let e = 1.0 / (alpha - 1.0);
    ((lambda / alpha).powf(e), (3.0 * lambda / alpha).powf(e))
}

/// Bound `|∫ sin(s^α) cos(2λs + 2h(s))/s| ≤ 5(H0 + 2)/(λ t0) + log 3/(α - 1)`.
pub fn check_lemma_s_alpha<H: Fn(f64) -> (f64, f64) + Sync>(
    h: H,
    h0: f64,
    lambda: f64,
    alpha: f64,
    t0: f64,
    t_grid: &[f64],
) -> Result<LemmaReport, OscintError> {
    let t_max = check_grid(t0, t_grid)?;
    if !(lambda > 0.0 && lambda.is_finite()) || !(alpha > 1.0 && alpha.is_finite()) {
        return Err(OscintError::Domain("need lambda > 0 and alpha > 1".into()));
    }
    check_h(&h, h0, t0, t_max, t_grid)?;
    let f = |s: f64| s.powf(alpha).sin() * (2.0 * (lambda * s + h(s).0)).cos() / s;
    let hint = |s: f64| alpha * s.powf(alpha - 1.0) + 2.0 * (lambda + h0 / s);
    let pi = cumulative_quad(f, t0, t_max, t_grid, SCAN_TOL, Some(&hint))?;
    let bound = 5.0 * (h0 + 2.0) / (lambda * t0) + 3f64.ln() / (alpha - 1.0);
    let (max_ratio, worst_t) = ratio_scan(&pi, t_grid, bound);
    Ok(LemmaReport {
        bound,
        max_ratio,
        worst_t,
        pass: max_ratio <= 1.0,
        cauchy: None,
        stationary_window: Some(stationary_window(lambda, alpha)),
    })
}

/// The reference configurations of the three lemma checks, labelled.
pub fn lemma_examples() -> Result<Vec<(String, LemmaReport)>, OscintError> {
    use crate::damping::log_grid;
    let mut out = Vec::new();
    let linear = PhaseAmplitudeSpec {
        phi: Box::new(|s| (10.0 * s, 10.0, 0.0)),
        psi: Box::new(|_| (0.0, 0.0)),
        phi0: 10.0,
        psi0: 0.0,
        window: (1.0, 1e4),
    };
    let g = log_grid(1.0, 1e4, 64);
    out.push(("int_phi_psi phi=10s psi=0 cos*sin".into(), check_lemma_int_phi_psi(&linear, TrigPair::CosSin, &g)?));
    let log_mod = PhaseAmplitudeSpec {
        phi: Box::new(|s| (2.0 * s, 2.0, 0.0)),
        psi: Box::new(|s| (s.ln(), 1.0 / s)),
        phi0: 2.0,
        psi0: 1.0,
        window: (1.0, 1e4),
    };
    for pair in [TrigPair::CosCos, TrigPair::CosSin, TrigPair::SinCos, TrigPair::SinSin] {
        let r = check_lemma_int_phi_psi(&log_mod, pair, &g)?;
        out.push((format!("int_phi_psi phi=2s psi=log s {pair:?}"), r));
    }
    let quadratic = PhaseAmplitudeSpec {
        phi: Box::new(|s| (s * s + 2.0 * s, 2.0 * s + 2.0, 2.0)),
        psi: Box::new(|s| (0.5 * s.ln(), 0.5 / s)),
        phi0: 4.0,
        psi0: 0.5,
        window: (1.0, 1e3),
    };
    let r = check_lemma_int_phi_psi(&quadratic, TrigPair::CosCos, &log_grid(1.0, 1e3, 64))?;
    out.push(("int_phi_psi phi=s^2+2s psi=log(s)/2 cos*cos".into(), r));
    for n in [2, 4] {
        let r = check_lemma_osc_int(|_| (0.0, 0.0), 0.0, 1.0, n, 1.0, &g)?;
        out.push((format!("osc_int h=0 lambda=1 n={n}"), r));
        let r = check_lemma_osc_int(|s: f64| (s.ln(), 1.0 / s), 1.0, 1.0, n, 1.0, &g)?;
        out.push((format!("osc_int h=log t lambda=1 n={n}"), r));
    }
    let r = check_lemma_osc_int(|_| (0.0, 0.0), 0.0, 100.0, 2, 1.0, &log_grid(1.0, 1e2, 64))?;
    out.push(("osc_int h=0 lambda=100 n=2".into(), r));
    let r = check_lemma_s_alpha(|_| (0.0, 0.0), 0.0, 1.0, 2.0, 1.0, &log_grid(1.0, 1e3, 64))?;
    out.push(("s_alpha h=0 lambda=1 alpha=2".into(), r));
    let r = check_lemma_s_alpha(|s: f64| (0.5 * s.ln(), 0.5 / s), 0.5, 2.0, 3.0, 1.0, &log_grid(1.0, 1e2, 64))?;
    out.push(("s_alpha h=log(t)/2 lambda=2 alpha=3".into(), r));
    Ok(out)
}

/// `γ(m, t0, t) = ∫_{t0}^{t} (t0/s)^m ds`.
pub fn gamma_fn(m: f64, t0: f64, t: f64) -> Result<f64, OscintError> {
    if !(m > 0.0 && m.is_finite() && t0 > 0.0 && t0.is_finite() && t.is_finite()) {
        return Err(OscintError::Domain(format!("gamma needs m > 0 and t0 > 0, got m = {m}, t0 = {t0}")));
    }
    if t < t0 {
        return Err(OscintError::Domain(format!("gamma needs t >= t0, got t = {t} < t0 = {t0}")));
    }
    Ok(gamma_unchecked(m, t0, t))
}

pub(crate) fn gamma_unchecked(m: f64, t0: f64, t: f64) -> f64 {
    let l = (t / t0).ln();
    let k = 1.0 - m;
    if k.abs() < 1e-8 {
        t0 * l
    } else {
        t0 * (k * l).exp_m1() / k
    }
}

/// `μ = min(m, 2)`.
pub fn mu(m: f64) -> f64 {
    m.min(2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub points: usize,
    pub skipped: usize,
    /// Largest `LHS / RHS`.
    pub max_ratio: f64,
    /// `(m, t0, t)` attaining it.
    pub worst: (f64, f64, f64),
    pub pass: bool,
}

/// `(t0/t)² γ(m, t0, t)² ≤ t0² (t0/t)^μ` over the grid product; pairs with `t < t0` are skipped.
pub fn check_gamma_inequality(m_grid: &[f64], t0_grid: &[f64], t_grid: &[f64]) -> Result<GammaReport, OscintError> {
    let cells: Vec<(f64, f64)> = m_grid.iter().flat_map(|&m| t0_grid.iter().map(move |&t0| (m, t0))).collect();
    let parts: Vec<Result<(usize, usize, f64, (f64, f64, f64)), OscintError>> = cells
        .par_iter()
        .map(|&(m, t0)| {
            let (mut pts, mut skip, mut worst, mut at) = (0, 0, 0.0f64, (m, t0, t0));
            for &t in t_grid {
                if t < t0 {
                    skip += 1;
                    continue;
                }
                let g = gamma_fn(m, t0, t)?;
                let r = t0 / t;
                let lhs = r * r * g * g;
                let rhs = t0 * t0 * r.powf(mu(m));
                let ratio = lhs / rhs;
                pts += 1;
                if ratio > worst {
                    worst = ratio;
                    at = (m, t0, t);
                }
            }
            Ok((pts, skip, worst, at))
        })
        .collect();
    let mut rep = GammaReport {
        points: 0,
        skipped: 0,
        max_ratio: 0.0,
        worst: (f64::NAN, f64::NAN, f64::NAN),
        pass: true,
    };
    for p in parts {
        let (pts, skip, worst, at) = p?;
        rep.points += pts;
        rep.skipped += skip;
        if pts > 0 && (worst > rep.max_ratio || rep.worst.0.is_nan()) {
            rep.max_ratio = worst;
            rep.worst = at;
        }
    }
    rep.pass = rep.max_ratio <= 1.0 + 1e-12;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damping::log_grid;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + h * i as f64;
            s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        s * h / 3.0
    }

    #[test]
    fn logarithm() {
        let r = osc_quad(|s| 1.0 / s, 1.0, E, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_interval() {
        let r = osc_quad(|s| s.exp(), 1.0, 1.0, 1e-12).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn oscillatory_matches_composite_simpson() {
        let f = |s: f64| (2.0 * s).cos() / s;
        let reference = simpson(f, 1.0, 100.0, 1_000_000);
        let r = osc_quad(f, 1.0, 100.0, 1e-10).unwrap();
        assert!((r.value - reference).abs() < 1e-8, "{} vs {reference}", r.value);
        let hint = |_: f64| 2.0;
        let h = osc_quad_hinted(f, 1.0, 100.0, 1e-10, Some(&hint)).unwrap();
        assert!((h.value - reference).abs() < 1e-8);
    }

    #[test]
    fn budget_exhaustion_reports_best_estimate() {
        let err = osc_quad_budget(|s: f64| (1.0 / s).sin() / s.sqrt(), 0.0, 1.0, 1e-300, None, 1000).unwrap_err();
        match err {
            OscintError::NotConverged { estimate, error_bound, .. } => {
                assert!(estimate.is_finite() && error_bound.is_finite());
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn cumulative_matches_direct_quadrature() {
        let f = |s: f64| (3.0 * s + s.ln()).sin() / s;
        let marks = [2.0, 7.5, 30.0];
        let hint = |s: f64| 3.0 + 1.0 / s;
        let pi = cumulative_quad(f, 1.0, 40.0, &marks, 1e-11, Some(&hint)).unwrap();
        for &t in marks.iter().chain(&[40.0]) {
            let direct = osc_quad(f, 1.0, t, 1e-12).unwrap().value;
            assert!((pi.at(t).unwrap() - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn int_phi_psi_vanishing_integrand() {
        let spec = PhaseAmplitudeSpec {
            phi: Box::new(|s| (10.0 * s, 10.0, 0.0)),
            psi: Box::new(|_| (0.0, 0.0)),
            phi0: 10.0,
            psi0: 0.0,
            window: (1.0, 100.0),
        };
        let r = check_lemma_int_phi_psi(&spec, TrigPair::CosSin, &log_grid(1.0, 100.0, 16)).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn int_phi_psi_rejects_false_constants() {
        let spec = PhaseAmplitudeSpec {
            phi: Box::new(|s| (2.0 * s, 2.0, 0.0)),
            psi: Box::new(|s| (s.ln(), 1.0 / s)),
            phi0: 2.0,
            psi0: 0.5,
            window: (1.0, 100.0),
        };
        let e = check_lemma_int_phi_psi(&spec, TrigPair::CosSin, &[10.0]).unwrap_err();
        assert!(matches!(e, OscintError::Precondition(_)));
    }

    #[test]
    fn osc_int_without_drift_is_bounded_and_convergent() {
        let r = check_lemma_osc_int(|_| (0.0, 0.0), 0.0, 1.0, 2, 1.0, &log_grid(1.0, 1e3, 64)).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.bound, 8.0);
        let c = r.cauchy.unwrap();
        assert!(c.pass && c.last_difference < 1e-2);
    }

    #[test]
    fn osc_int_large_frequency_has_small_ratio() {
        let r = check_lemma_osc_int(|_| (0.0, 0.0), 0.0, 100.0, 2, 1.0, &log_grid(1.0, 1e2, 64)).unwrap();
        assert!(r.pass && r.max_ratio < 0.2, "{}", r.max_ratio);
    }

    #[test]
    fn stationary_window_for_quadratic_phase() {
        let (a, b) = stationary_window(1.0, 2.0);
        assert!((a - 0.5).abs() < 1e-15 && (b - 1.5).abs() < 1e-15);
    }

    #[test]
    fn gamma_closed_forms() {
        assert!((gamma_fn(1.0, 1.0, E).unwrap() - 1.0).abs() < 1e-15);
        assert!((gamma_fn(2.0, 1.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        for m in [0.3, 1.0, 2.0, 5.0] {
            assert_eq!(gamma_fn(m, 3.0, 3.0).unwrap(), 0.0);
        }
        assert!(gamma_fn(1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn gamma_is_continuous_at_one() {
        let g1 = gamma_fn(1.0, 2.0, 50.0).unwrap();
        for eps in [1e-6, 1e-7, 1e-9, 1e-12] {
            for m in [1.0 - eps, 1.0 + eps] {
                let g = gamma_fn(m, 2.0, 50.0).unwrap();
                assert!((g - g1).abs() <= 50.0 * eps, "eps {eps}: {g} vs {g1}");
            }
        }
    }

    #[test]
    fn gamma_inequality_examples() {
        let g = gamma_fn(2.0, 1.0, 10.0).unwrap();
        assert!((0.1 * g - 0.09).abs() < 1e-15);
        let r = check_gamma_inequality(&[2.0, 4.0], &[1.0], &[1.0, 10.0, 1e3]).unwrap();
        assert!(r.pass && r.points == 6 && r.skipped == 0);
    }

    proptest! {
        #[test]
        fn quadrature_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, k in 0.5f64..6.0, p in 0.0f64..2.0) {
            let tol = 1e-10;
            let f = |s: f64| (k * s).sin() / s;
            let g = |s: f64| s.powf(-p) * (s.ln() + 1.0);
            let qf = osc_quad(f, 1.0, 30.0, tol).unwrap().value;
            let qg = osc_quad(g, 1.0, 30.0, tol).unwrap().value;
            let qs = osc_quad(|s| a * f(s) + b * g(s), 1.0, 30.0, tol).unwrap().value;
            prop_assert!((qs - (a * qf + b * qg)).abs() <= 2.0 * tol);
        }
    }
}
