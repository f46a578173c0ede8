//! Damping coefficients `b(t)`.
//!
//! A [`DampingCoefficient`] is a pure evaluation object: closed form or
//! table-backed, never a sample array, so integrators can evaluate it at any
//! adaptive stage. Each coefficient carries its start time `t0`, an optional
//! scale-invariant envelope `m_env/t <= b(t) <= M_env/t`, the breakpoints of any
//! piecewise structure, and the serializable spec it was built from.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Random breakpoints are drawn log-uniformly over `[t0, t0 * 10^RANDOM_SPAN_DECADES]`.
pub const RANDOM_SPAN_DECADES: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DampingError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("coefficient requested at t = {t}, outside its table range [{t0}, {valid_until}]")]
    OutOfRange { t: f64, t0: f64, valid_until: f64 },
    #[error("coefficient kind `{0}` must be constructed through its dedicated builder")]
    NeedsBuilder(&'static str),
}

fn domain(msg: impl Into<String>) -> DampingError {
    DampingError::Domain(msg.into())
}

/// A table-backed or user-supplied profile.
pub trait ProfileFn: Send + Sync + fmt::Debug {
    fn eval(&self, t: f64) -> f64;

    /// Times where the profile (or one of its derivatives) jumps.
    fn breakpoints(&self) -> &[f64] {
        &[]
    }

    /// Last time at which the profile is defined.
    fn valid_until(&self) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Constant,
    PowerLaw,
    LogModel,
    FastOscillation,
    PinchedRandom,
    Resonant,
    Custom,
}

/// `m_env/t <= b(t) <= M_env/t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    PiecewiseConstant,
    PiecewiseLinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinchedRandomSpec {
    pub m: f64,
    pub big_m: f64,
    pub segment_count: u32,
    pub seed: u64,
    pub scheme: Scheme,
}

/// Serializable description of a coefficient: `{"kind", "params", "t0", "seed"?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(flatten)]
    pub params: CoefficientParams,
    pub t0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum CoefficientParams {
    Constant {
        b0: f64,
    },
    /// `c / t^p`.
    PowerLaw {
        c: f64,
        p: f64,
    },
    /// `c / (t log t)`.
    LogModel {
        c: f64,
    },
    FastOscillation {
        a: f64,
        r: f64,
        alpha: f64,
    },
    PinchedRandom {
        m: f64,
        #[serde(rename = "M")]
        big_m: f64,
        segments: u32,
        #[serde(default)]
        scheme: Scheme,
    },
    Resonant {
        a: f64,
        r: f64,
        lambda_star: f64,
        t_end: f64,
    },
    /// Random coefficient between `m/t` and `M/t^(m-1)`.
    OpenProblem {
        m: f64,
        #[serde(rename = "M")]
        big_m: f64,
        segments: u32,
        #[serde(default)]
        scheme: Scheme,
    },
    /// User-defined piecewise constant `b`: `values[i]` on `[breaks[i-1], breaks[i])`.
    Piecewise {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
}

impl CoefficientSpec {
    pub fn new(params: CoefficientParams, t0: f64) -> Self {
        Self { params, t0, seed: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("coefficient spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Builds every kind except `resonant`, which needs an ODE solve
    /// (see `resonance::coefficient_from_spec`).
    pub fn build(&self) -> Result<DampingCoefficient, DampingError> {
        let t0 = self.t0;
        let seed = self.seed.unwrap_or(0);
        match &self.params {
            CoefficientParams::Constant { b0 } => DampingCoefficient::constant(*b0, t0),
            CoefficientParams::PowerLaw { c, p } => DampingCoefficient::power_law(*c, *p, t0),
            CoefficientParams::LogModel { c } => DampingCoefficient::log_model(*c, t0),
            CoefficientParams::FastOscillation { a, r, alpha } => make_fast_oscillation(*a, *r, *alpha, t0),
            CoefficientParams::PinchedRandom { m, big_m, segments, scheme } => make_pinched_random(
                &PinchedRandomSpec {
                    m: *m,
                    big_m: *big_m,
                    segment_count: *segments,
                    seed,
                    scheme: *scheme,
                },
                t0,
            ),
            CoefficientParams::OpenProblem { m, big_m, segments, scheme } => {
                make_open_problem(*m, *big_m, *segments, seed, *scheme, t0)
            }
            CoefficientParams::Piecewise { breaks, values } => make_piecewise(breaks, values, t0),
            CoefficientParams::Resonant { .. } => Err(DampingError::NeedsBuilder("resonant")),
        }
    }
}

#[derive(Debug, Clone)]
enum Profile {
    Constant { b0: f64 },
    PowerLaw { c: f64, p: f64 },
    LogModel { c: f64 },
    FastOscillation { a: f64, r: f64, alpha: f64 },
    Table(Arc<dyn ProfileFn>),
}

/// Evaluable damping coefficient `b : [t0, ∞) -> [0, ∞)`.
#[derive(Debug, Clone)]
pub struct DampingCoefficient {
    kind: Kind,
    profile: Profile,
    t0: f64,
    envelope: Option<Envelope>,
    spec: Option<CoefficientSpec>,
}

fn check_t0(t0: f64) -> Result<(), DampingError> {
    if t0.is_finite() && t0 > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("t0 must be positive and finite, got {t0}")))
    }
}

fn check_finite(name: &str, v: f64) -> Result<(), DampingError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite, got {v}")))
    }
}

impl DampingCoefficient {
    /// `b ≡ b0`. The only kind that accepts `t0 = 0`.
    pub fn constant(b0: f64, t0: f64) -> Result<Self, DampingError> {
        check_finite("b0", b0)?;
        if b0 < 0.0 {
            return Err(domain(format!("b0 must be non-negative, got {b0}")));
        }
        if !(t0.is_finite() && t0 >= 0.0) {
            return Err(domain(format!("t0 must be non-negative, got {t0}")));
        }
        Ok(Self {
            kind: Kind::Constant,
            profile: Profile::Constant { b0 },
            t0,
            envelope: None,
            spec: Some(CoefficientSpec::new(CoefficientParams::Constant { b0 }, t0)),
        })
    }

    /// `b(t) = c / t^p`; `m/t` is `c = m, p = 1` and carries the exact envelope `(m, m)`.
    pub fn power_law(c: f64, p: f64, t0: f64) -> Result<Self, DampingError> {
        check_t0(t0)?;
        check_finite("c", c)?;
        check_finite("p", p)?;
        if c < 0.0 {
            return Err(domain(format!("c must be non-negative, got {c}")));
        }
        let envelope = (p == 1.0).then_some(Envelope { lower: c, upper: c });
        Ok(Self {
            kind: Kind::PowerLaw,
            profile: Profile::PowerLaw { c, p },
            t0,
            envelope,
            spec: Some(CoefficientSpec::new(CoefficientParams::PowerLaw { c, p }, t0)),
        })
    }

    /// `b(t) = m / t`.
    pub fn scale_invariant(m: f64, t0: f64) -> Result<Self, DampingError> {
        Self::power_law(m, 1.0, t0)
    }

    /// `b(t) = c / (t log t)`, defined for `t0 > 1`.
    pub fn log_model(c: f64, t0: f64) -> Result<Self, DampingError> {
        check_t0(t0)?;
        check_finite("c", c)?;
        if t0 <= 1.0 {
            return Err(domain(format!("1/(t log t) needs t0 > 1, got {t0}")));
        }
        if c < 0.0 {
            return Err(domain(format!("c must be non-negative, got {c}")));
        }
        Ok(Self {
            kind: Kind::LogModel,
            profile: Profile::LogModel { c },
            t0,
            envelope: None,
            spec: Some(CoefficientSpec::new(CoefficientParams::LogModel { c }, t0)),
        })
    }

    /// Wraps a table-backed profile (resonant tables, user functions).
    pub fn from_profile(
        kind: Kind,
        profile: Arc<dyn ProfileFn>,
        t0: f64,
        envelope: Option<Envelope>,
        spec: Option<CoefficientSpec>,
    ) -> Result<Self, DampingError> {
        check_t0(t0)?;
        if let Some(e) = envelope {
            if !(e.lower >= 0.0 && e.upper >= e.lower) {
                return Err(domain(format!("invalid envelope ({}, {})", e.lower, e.upper)));
            }
        }
        Ok(Self {
            kind,
            profile: Profile::Table(profile),
            t0,
            envelope,
            spec,
        })
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn envelope(&self) -> Option<Envelope> {
        self.envelope
    }

    pub fn spec(&self) -> Option<&CoefficientSpec> {
        self.spec.as_ref()
    }

    pub fn breakpoints(&self) -> &[f64] {
        match &self.profile {
            Profile::Table(f) => f.breakpoints(),
            _ => &[],
        }
    }

    pub fn valid_until(&self) -> f64 {
        match &self.profile {
            Profile::Table(f) => f.valid_until(),
            _ => f64::INFINITY,
        }
    }

    /// Evaluates `b(t)`. No range check; see [`Self::try_eval`].
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match &self.profile {
            Profile::Constant { b0 } => *b0,
            Profile::PowerLaw { c, p } => {
                if *p == 1.0 {
                    c / t
                } else {
                    c * t.powf(-p)
                }
            }
            Profile::LogModel { c } => c / (t * t.ln()),
            Profile::FastOscillation { a, r, alpha } => (a + r * t.powf(*alpha).sin()) / t,
            Profile::Table(f) => f.eval(t),
        }
    }

    pub fn try_eval(&self, t: f64) -> Result<f64, DampingError> {
        self.check_range(t)?;
        Ok(self.eval(t))
    }

    /// Errors unless `[t0, t]` lies inside the coefficient's domain.
    pub fn check_range(&self, t: f64) -> Result<(), DampingError> {
        let until = self.valid_until();
        if t < self.t0 || t > until || !t.is_finite() {
            return Err(DampingError::OutOfRange {
                t,
                t0: self.t0,
                valid_until: until,
            });
        }
        Ok(())
    }

    /// Short human-readable label.
    pub fn label(&self) -> String {
        match &self.profile {
            Profile::Constant { b0 } => format!("{b0}"),
            Profile::PowerLaw { c, p } => {
                if *p == 1.0 {
                    format!("{c}/t")
                } else if *p == -1.0 {
                    format!("{c}*t")
                } else {
                    format!("{c}/t^{p}")
                }
            }
            Profile::LogModel { c } => format!("{c}/(t log t)"),
            Profile::FastOscillation { a, r, alpha } => format!("({a}+{r} sin(t^{alpha}))/t"),
            Profile::Table(_) => format!("{:?}", self.kind).to_lowercase(),
        }
    }
}

/// The rows of the classical decay-rate table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "row", rename_all = "snake_case")]
pub enum Table1Row {
    /// `c/t^q` with `q > 1`: integrable tail, no decay.
    IntegrableTail { c: f64, q: f64 },
    /// `1/(t log t)`: decay `1/log t`.
    InverseLog,
    /// `m/t` with `m ∈ (0, 2)`: decay `1/t^m`.
    HyperbolicScaleInvariant { m: f64 },
    /// `m/t` with `m >= 2`: decay `1/t^2`.
    ParabolicScaleInvariant { m: f64 },
    /// `1/t^p` with `p ∈ (-1, 1)`: decay `1/t^(p+1)`.
    PowerLaw { p: f64 },
    /// `t`: decay `1/log t`.
    Linear,
    /// `c t^q` with `q > 1`: `1/b` integrable, no decay.
    InverseIntegrableTail { c: f64, q: f64 },
}

/// Predicted decay of the energy-operator norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rate", rename_all = "snake_case")]
pub enum RateDescriptor {
    NoDecay,
    InverseLog,
    Power { exponent: f64 },
}

impl fmt::Display for RateDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateDescriptor::NoDecay => write!(f, "no decay"),
            RateDescriptor::InverseLog => write!(f, "1/log t"),
            RateDescriptor::Power { exponent } => write!(f, "1/t^{exponent}"),
        }
    }
}

impl Table1Row {
    /// `m/t` sorted into the hyperbolic or parabolic row.
    pub fn scale_invariant(m: f64) -> Self {
        if m < 2.0 {
            Table1Row::HyperbolicScaleInvariant { m }
        } else {
            Table1Row::ParabolicScaleInvariant { m }
        }
    }

    /// All seven rows with their default parameters.
    pub fn all() -> Vec<Table1Row> {
        vec![
            Table1Row::IntegrableTail { c: 1.0, q: 2.0 },
            Table1Row::InverseLog,
            Table1Row::HyperbolicScaleInvariant { m: 1.0 },
            Table1Row::ParabolicScaleInvariant { m: 3.0 },
            Table1Row::PowerLaw { p: 0.5 },
            Table1Row::Linear,
            Table1Row::InverseIntegrableTail { c: 1.0, q: 2.0 },
        ]
    }

    /// Parses `tail`, `tlogt`, `mt:<m>`, `tp:<p>`, `t`, `invtail`, optionally
    /// with `:<c>:<q>` for the tails.
    pub fn parse(s: &str) -> Result<Self, DampingError> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64, DampingError> {
            parts
                .get(i)
                .ok_or_else(|| domain(format!("row `{s}` is missing a parameter")))?
                .parse::<f64>()
                .map_err(|_| domain(format!("row `{s}` has a non-numeric parameter")))
        };
        let row = match parts[0] {
            "tail" => {
                if parts.len() > 1 {
                    Table1Row::IntegrableTail { c: num(1)?, q: num(2)? }
                } else {
                    Table1Row::IntegrableTail { c: 1.0, q: 2.0 }
                }
            }
            "tlogt" => Table1Row::InverseLog,
            "mt" => Table1Row::scale_invariant(num(1)?),
            "tp" => Table1Row::PowerLaw { p: num(1)? },
            "t" => Table1Row::Linear,
            "invtail" => {
                if parts.len() > 1 {
                    Table1Row::InverseIntegrableTail { c: num(1)?, q: num(2)? }
                } else {
                    Table1Row::InverseIntegrableTail { c: 1.0, q: 2.0 }
                }
            }
            other => return Err(domain(format!("unknown table row `{other}`"))),
        };
        row.validate()?;
        Ok(row)
    }

    pub fn name(&self) -> String {
        match self {
            Table1Row::IntegrableTail { c, q } => format!("tail:{c}:{q}"),
            Table1Row::InverseLog => "tlogt".into(),
            Table1Row::HyperbolicScaleInvariant { m } | Table1Row::ParabolicScaleInvariant { m } => {
                format!("mt:{m}")
            }
            Table1Row::PowerLaw { p } => format!("tp:{p}"),
            Table1Row::Linear => "t".into(),
            Table1Row::InverseIntegrableTail { c, q } => format!("invtail:{c}:{q}"),
        }
    }

    pub fn validate(&self) -> Result<(), DampingError> {
        match *self {
            Table1Row::IntegrableTail { c, q } | Table1Row::InverseIntegrableTail { c, q } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(domain(format!("tail constant c must be positive, got {c}")));
                }
                if !(q > 1.0 && q.is_finite()) {
                    return Err(domain(format!("tail exponent q must exceed 1, got {q}")));
                }
            }
            Table1Row::HyperbolicScaleInvariant { m } => {
                if !(m > 0.0 && m < 2.0) {
                    return Err(domain(format!("m must lie in (0, 2) for the oscillatory m/t row, got {m}")));
                }
            }
            Table1Row::ParabolicScaleInvariant { m } => {
                if !(m >= 2.0 && m.is_finite()) {
                    return Err(domain(format!("m must be >= 2 for the non-oscillatory m/t row, got {m}")));
                }
            }
            Table1Row::PowerLaw { p } => {
                if !(p > -1.0 && p < 1.0) {
                    return Err(domain(format!("p must lie in (-1, 1), got {p}")));
                }
            }
            Table1Row::InverseLog | Table1Row::Linear => {}
        }
        Ok(())
    }

    pub fn predicted_rate(&self) -> RateDescriptor {
        match *self {
            Table1Row::IntegrableTail { .. } | Table1Row::InverseIntegrableTail { .. } => RateDescriptor::NoDecay,
            Table1Row::InverseLog | Table1Row::Linear => RateDescriptor::InverseLog,
            Table1Row::HyperbolicScaleInvariant { m } => RateDescriptor::Power { exponent: m },
            Table1Row::ParabolicScaleInvariant { .. } => RateDescriptor::Power { exponent: 2.0 },
            Table1Row::PowerLaw { p } => RateDescriptor::Power { exponent: p + 1.0 },
        }
    }

    /// Start time used when none is requested: `e` for `1/(t log t)`, 1 otherwise.
    pub fn default_t0(&self) -> f64 {
        match self {
            Table1Row::InverseLog => std::f64::consts::E,
            _ => 1.0,
        }
    }
}

/// Builds the coefficient named by a row of the decay-rate table.
pub fn make_table1_coefficient(row: Table1Row, t0: f64) -> Result<DampingCoefficient, DampingError> {
    row.validate()?;
    match row {
        Table1Row::IntegrableTail { c, q } => DampingCoefficient::power_law(c, q, t0),
        Table1Row::InverseLog => DampingCoefficient::log_model(1.0, t0),
        Table1Row::HyperbolicScaleInvariant { m } | Table1Row::ParabolicScaleInvariant { m } => {
            DampingCoefficient::scale_invariant(m, t0)
        }
        Table1Row::PowerLaw { p } => DampingCoefficient::power_law(1.0, p, t0),
        Table1Row::Linear => DampingCoefficient::power_law(1.0, -1.0, t0),
        Table1Row::InverseIntegrableTail { c, q } => DampingCoefficient::power_law(c, -q, t0),
    }
}

/// `b(t) = (a + r sin(t^alpha)) / t` with `a > 0`, `0 <= r <= a`, `alpha > 1`.
pub fn make_fast_oscillation(a: f64, r: f64, alpha: f64, t0: f64) -> Result<DampingCoefficient, DampingError> {
    check_t0(t0)?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(domain(format!("a must be positive, got {a}")));
    }
    if !(0.0..=a).contains(&r) {
        return Err(domain(format!("r must satisfy 0 <= r <= a, got r = {r}, a = {a}")));
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(domain(format!("alpha must exceed 1, got {alpha}")));
    }
    Ok(DampingCoefficient {
        kind: Kind::FastOscillation,
        profile: Profile::FastOscillation { a, r, alpha },
        t0,
        envelope: Some(Envelope {
            lower: a - r,
            upper: a + r,
        }),
        spec: Some(CoefficientSpec::new(CoefficientParams::FastOscillation { a, r, alpha }, t0)),
    })
}

/// Piecewise profile `b(t) = c(t) / t` (or `c(t)` directly when `scale_by_t` is
/// false) with breakpoints `knots[1..len-1]`.
#[derive(Debug, Clone)]
struct Piecewise {
    /// Segment boundaries, `knots[0] = t0`, last knot is the end of the random span.
    knots: Vec<f64>,
    /// Piecewise constant: one value per segment plus one for the tail.
    /// Piecewise linear (in log t): one value per knot.
    values: Vec<f64>,
    scheme: Scheme,
    breaks: Vec<f64>,
}

impl Piecewise {
    fn new(knots: Vec<f64>, values: Vec<f64>, scheme: Scheme) -> Self {
        let breaks = knots[1..].to_vec();
        Self {
            knots,
            values,
            scheme,
            breaks,
        }
    }

    fn shape(&self, t: f64) -> f64 {
        let k = &self.knots;
        match self.scheme {
            Scheme::PiecewiseConstant => {
                // Number of knots <= t, segment index is that minus one.
                let idx = k.partition_point(|&x| x <= t);
                self.values[idx.saturating_sub(1).min(self.values.len() - 1)]
            }
            Scheme::PiecewiseLinear => {
                if t <= k[0] {
                    return self.values[0];
                }
                let n = k.len();
                if t >= k[n - 1] {
                    return self.values[n - 1];
                }
                let i = k.partition_point(|&x| x <= t) - 1;
                let s = (t.ln() - k[i].ln()) / (k[i + 1].ln() - k[i].ln());
                self.values[i] + s * (self.values[i + 1] - self.values[i])
            }
        }
    }
}

#[derive(Debug)]
struct PinchedProfile {
    shape: Piecewise,
}

impl ProfileFn for PinchedProfile {
    fn eval(&self, t: f64) -> f64 {
        self.shape.shape(t) / t
    }

    fn breakpoints(&self) -> &[f64] {
        &self.shape.breaks
    }
}

fn random_shape(
    lo: f64,
    hi: f64,
    segments: u32,
    seed: u64,
    scheme: Scheme,
    t0: f64,
) -> Piecewise {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = RANDOM_SPAN_DECADES * std::f64::consts::LN_10;
    let mut logs: Vec<f64> = (0..segments.saturating_sub(1)).map(|_| rng.gen::<f64>() * span).collect();
    logs.sort_by(|a, b| a.total_cmp(b));
    let mut knots = Vec::with_capacity(logs.len() + 2);
    knots.push(t0);
    knots.extend(logs.iter().map(|l| t0 * l.exp()));
    knots.push(t0 * span.exp());
    knots.dedup();
    // one value per segment plus the tail for constant pieces, one per knot for linear ones
    let values = (0..knots.len()).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect();
    Piecewise::new(knots, values, scheme)
}

/// Seeded random coefficient with `m/t <= b(t) <= M/t`; breakpoints are
/// log-uniform over six decades after `t0`.
pub fn make_pinched_random(spec: &PinchedRandomSpec, t0: f64) -> Result<DampingCoefficient, DampingError> {
    check_t0(t0)?;
    let (m, big_m) = (spec.m, spec.big_m);
    if !(m > 0.0 && m.is_finite()) {
        return Err(domain(format!("m must be positive, got {m}")));
    }
    if !(big_m >= m && big_m.is_finite()) {
        return Err(domain(format!("M must satisfy M >= m, got M = {big_m}, m = {m}")));
    }
    if spec.segment_count == 0 {
        return Err(domain("segment_count must be positive"));
    }
    let shape = random_shape(m, big_m, spec.segment_count, spec.seed, spec.scheme, t0);
    let params = CoefficientParams::PinchedRandom {
        m,
        big_m,
        segments: spec.segment_count,
        scheme: spec.scheme,
    };
    DampingCoefficient::from_profile(
        Kind::PinchedRandom,
        Arc::new(PinchedProfile { shape }),
        t0,
        Some(Envelope { lower: m, upper: big_m }),
        Some(CoefficientSpec::new(params, t0).with_seed(spec.seed)),
    )
}

#[derive(Debug)]
struct OpenProblemProfile {
    m: f64,
    big_m: f64,
    shape: Piecewise,
}

impl ProfileFn for OpenProblemProfile {
    fn eval(&self, t: f64) -> f64 {
        let lo = self.m / t;
        let hi = self.big_m * t.powf(1.0 - self.m);
        lo + self.shape.shape(t) * (hi - lo)
    }

    fn breakpoints(&self) -> &[f64] {
        &self.shape.breaks
    }
}

/// Random coefficient with `m/t <= b(t) <= M/t^(m-1)`, `m ∈ (0, 2)` and
/// `M >= m t0^(m-2)` so the band is non-empty on `[t0, ∞)`.
pub fn make_open_problem(
    m: f64,
    big_m: f64,
    segments: u32,
    seed: u64,
    scheme: Scheme,
    t0: f64,
) -> Result<DampingCoefficient, DampingError> {
    check_t0(t0)?;
    if !(m > 0.0 && m < 2.0) {
        return Err(domain(format!("m must lie in (0, 2), got {m}")));
    }
    let floor = m * t0.powf(m - 2.0);
    if !(big_m >= floor && big_m.is_finite()) {
        return Err(domain(format!(
            "M must satisfy M >= m t0^(m-2) = {floor}, got {big_m}"
        )));
    }
    if segments == 0 {
        return Err(domain("segment_count must be positive"));
    }
    let shape = random_shape(0.0, 1.0, segments, seed, scheme, t0);
    let params = CoefficientParams::OpenProblem {
        m,
        big_m,
        segments,
        scheme,
    };
    DampingCoefficient::from_profile(
        Kind::Custom,
        Arc::new(OpenProblemProfile { m, big_m, shape }),
        t0,
        None,
        Some(CoefficientSpec::new(params, t0).with_seed(seed)),
    )
}

#[derive(Debug)]
struct UserPiecewise {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl ProfileFn for UserPiecewise {
    fn eval(&self, t: f64) -> f64 {
        self.values[self.breaks.partition_point(|&x| x <= t)]
    }

    fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }
}

/// User-defined piecewise constant coefficient.
pub fn make_piecewise(breaks: &[f64], values: &[f64], t0: f64) -> Result<DampingCoefficient, DampingError> {
    check_t0(t0)?;
    if values.len() != breaks.len() + 1 {
        return Err(domain(format!(
            "piecewise coefficient needs one more value than breaks ({} breaks, {} values)",
            breaks.len(),
            values.len()
        )));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(domain("piecewise values must be finite and non-negative"));
    }
    if breaks.windows(2).any(|w| w[1] <= w[0]) || breaks.first().is_some_and(|&b| b <= t0) {
        return Err(domain("piecewise breaks must be strictly increasing and above t0"));
    }
    DampingCoefficient::from_profile(
        Kind::Custom,
        Arc::new(UserPiecewise {
            breaks: breaks.to_vec(),
            values: values.to_vec(),
        }),
        t0,
        None,
        Some(CoefficientSpec::new(
            CoefficientParams::Piecewise {
                breaks: breaks.to_vec(),
                values: values.to_vec(),
            },
            t0,
        )),
    )
}

/// `n` log-spaced points on `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi >= lo);
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}

/// Worst violation of the declared envelope on a grid, as
/// `max(m_env - t b(t), t b(t) - M_env, 0)`.
pub fn envelope_violation(b: &DampingCoefficient, grid: &[f64]) -> Option<f64> {
    let env = b.envelope()?;
    let mut worst: f64 = 0.0;
    for &t in grid {
        let tb = t * b.eval(t);
        worst = worst.max(env.lower - tb).max(tb - env.upper);
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{E, FRAC_PI_2};

    #[test]
    fn scale_invariant_row_evaluates_directly() {
        let b = make_table1_coefficient(Table1Row::HyperbolicScaleInvariant { m: 1.0 }, 1.0).unwrap();
        assert_eq!(b.eval(2.0), 0.5);
    }

    #[test]
    fn inverse_log_row_at_e() {
        let b = make_table1_coefficient(Table1Row::InverseLog, E).unwrap();
        assert!((b.eval(E) - 1.0 / E).abs() < 1e-15);
    }

    #[test]
    fn scale_invariant_envelope_is_exact() {
        let b = make_table1_coefficient(Table1Row::scale_invariant(3.0), 1.0).unwrap();
        assert_eq!(b.envelope(), Some(Envelope { lower: 3.0, upper: 3.0 }));
    }

    #[test]
    fn table_rows_reject_out_of_range_parameters() {
        for row in [
            Table1Row::HyperbolicScaleInvariant { m: 2.5 },
            Table1Row::ParabolicScaleInvariant { m: 1.0 },
            Table1Row::PowerLaw { p: 1.0 },
            Table1Row::PowerLaw { p: -1.5 },
            Table1Row::IntegrableTail { c: 1.0, q: 1.0 },
        ] {
            let err = make_table1_coefficient(row, 1.0).unwrap_err();
            assert!(matches!(err, DampingError::Domain(_)), "{row:?}");
        }
        assert!(make_table1_coefficient(Table1Row::InverseLog, 1.0).is_err());
    }

    #[test]
    fn row_parsing() {
        assert_eq!(Table1Row::parse("mt:1").unwrap(), Table1Row::HyperbolicScaleInvariant { m: 1.0 });
        assert_eq!(Table1Row::parse("mt:3").unwrap(), Table1Row::ParabolicScaleInvariant { m: 3.0 });
        assert_eq!(Table1Row::parse("tp:0.5").unwrap(), Table1Row::PowerLaw { p: 0.5 });
        assert_eq!(Table1Row::parse("invtail").unwrap(), Table1Row::InverseIntegrableTail { c: 1.0, q: 2.0 });
        assert!(Table1Row::parse("tp:2").is_err());
        assert!(Table1Row::parse("bogus").is_err());
        assert!(Table1Row::parse("mt").is_err());
    }

    #[test]
    fn fast_oscillation_without_amplitude_is_scale_invariant() {
        let f = make_fast_oscillation(1.0, 0.0, 2.0, 1.0).unwrap();
        let m = DampingCoefficient::scale_invariant(1.0, 1.0).unwrap();
        for &t in &log_grid(1.0, 1e6, 1000) {
            assert_eq!(f.eval(t), m.eval(t));
        }
    }

    #[test]
    fn fast_oscillation_peak() {
        let f = make_fast_oscillation(1.0, 1.0, 2.0, 1.0).unwrap();
        let t = FRAC_PI_2.sqrt();
        assert!((f.eval(t) - 2.0 / t).abs() < 1e-14);
    }

    #[test]
    fn fast_oscillation_envelope_holds_on_dense_grid() {
        let f = make_fast_oscillation(2.0, 1.0, 1.5, 1.0).unwrap();
        let grid = log_grid(1.0, 1e4, 200_000);
        assert!(envelope_violation(&f, &grid).unwrap() <= 1e-12);
    }

    #[test]
    fn fast_oscillation_rejects_hypothesis_violations() {
        assert!(make_fast_oscillation(1.0, 0.5, 1.0, 1.0).is_err());
        assert!(make_fast_oscillation(1.0, 1.5, 2.0, 1.0).is_err());
        assert!(make_fast_oscillation(0.0, 0.0, 2.0, 1.0).is_err());
    }

    fn pinched(m: f64, big_m: f64, seed: u64, scheme: Scheme) -> DampingCoefficient {
        make_pinched_random(
            &PinchedRandomSpec {
                m,
                big_m,
                segment_count: 100,
                seed,
                scheme,
            },
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_pinch_is_one_over_t() {
        let b = pinched(1.0, 1.0, 7, Scheme::PiecewiseConstant);
        for &t in &log_grid(1.0, 1e7, 500) {
            assert_eq!(b.eval(t), 1.0 / t);
        }
    }

    #[test]
    fn pinched_random_is_deterministic() {
        let a = pinched(0.5, 1.5, 42, Scheme::PiecewiseConstant);
        let b = pinched(0.5, 1.5, 42, Scheme::PiecewiseConstant);
        for &t in &log_grid(1.0, 1e6, 2000) {
            assert_eq!(a.eval(t).to_bits(), b.eval(t).to_bits());
        }
        assert_eq!(a.breakpoints(), b.breakpoints());
        let c = pinched(0.5, 1.5, 43, Scheme::PiecewiseConstant);
        assert_ne!(a.breakpoints(), c.breakpoints());
    }

    #[test]
    fn pinched_random_grid_scan() {
        for scheme in [Scheme::PiecewiseConstant, Scheme::PiecewiseLinear] {
            let b = pinched(0.5, 1.5, 42, scheme);
            let grid = log_grid(1.0, 1e6, 100_000);
            let (lo, hi) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                let c = t * b.eval(t);
                (lo.min(c), hi.max(c))
            });
            assert!(lo >= 0.5 - 1e-12 && hi <= 1.5 + 1e-12, "{scheme:?}: [{lo}, {hi}]");
            // the random values actually use the band
            assert!(hi - lo > 0.5);
        }
    }

    #[test]
    fn pinched_random_rejects_inverted_band() {
        let spec = PinchedRandomSpec {
            m: 2.0,
            big_m: 1.0,
            segment_count: 10,
            seed: 1,
            scheme: Scheme::PiecewiseConstant,
        };
        assert!(matches!(make_pinched_random(&spec, 1.0), Err(DampingError::Domain(_))));
    }

    #[test]
    fn piecewise_linear_is_continuous_at_breakpoints() {
        let b = pinched(0.5, 1.5, 3, Scheme::PiecewiseLinear);
        for &bp in b.breakpoints().iter().take(50) {
            let l = bp.next_down() * b.eval(bp.next_down());
            let r = bp * b.eval(bp);
            assert!((l - r).abs() < 1e-9, "jump at {bp}: {l} vs {r}");
        }
    }

    #[test]
    fn open_problem_respects_its_band() {
        let b = make_open_problem(1.0, 2.0, 50, 5, Scheme::PiecewiseConstant, 1.0).unwrap();
        for &t in &log_grid(1.0, 1e6, 10_000) {
            let v = b.eval(t);
            assert!(v >= 1.0 / t - 1e-15 && v <= 2.0 + 1e-15);
        }
        // band empty at t0 when M < m t0^(m-2)
        assert!(make_open_problem(1.0, 0.5, 10, 1, Scheme::PiecewiseConstant, 1.0).is_err());
        assert!(make_open_problem(2.0, 5.0, 10, 1, Scheme::PiecewiseConstant, 1.0).is_err());
    }

    #[test]
    fn user_piecewise_evaluates_segments() {
        let b = make_piecewise(&[2.0, 3.0], &[1.0, 0.5, 0.25], 1.0).unwrap();
        assert_eq!(b.eval(1.5), 1.0);
        assert_eq!(b.eval(2.0), 0.5);
        assert_eq!(b.eval(10.0), 0.25);
        assert_eq!(b.breakpoints(), &[2.0, 3.0]);
        assert!(make_piecewise(&[0.5], &[1.0, 1.0], 1.0).is_err());
        assert!(make_piecewise(&[2.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let b = make_fast_oscillation(1.0, 0.5, 2.0, 1.0).unwrap();
        let json = b.spec().unwrap().to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["kind"], "fast_oscillation");
        assert_eq!(v["params"]["alpha"], 2.0);
        assert_eq!(v["t0"], 1.0);
        assert!(v.get("seed").is_none());

        let p = pinched(0.5, 1.5, 42, Scheme::PiecewiseConstant);
        let v: serde_json::Value = serde_json::from_str(&p.spec().unwrap().to_json()).unwrap();
        assert_eq!(v["seed"], 42);
        assert_eq!(v["params"]["M"], 1.5);
    }

    #[test]
    fn resonant_spec_needs_builder() {
        let spec = CoefficientSpec::new(
            CoefficientParams::Resonant {
                a: 1.0,
                r: 0.5,
                lambda_star: 1.0,
                t_end: 10.0,
            },
            1.0,
        );
        assert_eq!(spec.build().unwrap_err(), DampingError::NeedsBuilder("resonant"));
    }

    fn arb_spec() -> impl Strategy<Value = CoefficientSpec> {
        let t0 = 0.1f64..10.0;
        prop_oneof![
            (0.0f64..5.0, t0.clone()).prop_map(|(b0, t0)| CoefficientSpec::new(CoefficientParams::Constant { b0 }, t0)),
            (0.0f64..5.0, -2.0f64..3.0, t0.clone())
                .prop_map(|(c, p, t0)| CoefficientSpec::new(CoefficientParams::PowerLaw { c, p }, t0)),
            (0.1f64..3.0, 0.0f64..1.0, 1.01f64..3.0, t0.clone()).prop_map(|(a, f, alpha, t0)| {
                CoefficientSpec::new(CoefficientParams::FastOscillation { a, r: a * f, alpha }, t0)
            }),
            (0.1f64..3.0, 0.0f64..3.0, 1u32..50, any::<u64>(), any::<bool>(), t0).prop_map(
                |(m, d, segments, seed, lin, t0)| {
                    let scheme = if lin { Scheme::PiecewiseLinear } else { Scheme::PiecewiseConstant };
                    CoefficientSpec::new(CoefficientParams::PinchedRandom { m, big_m: m + d, segments, scheme }, t0)
                        .with_seed(seed)
                }
            ),
        ]
    }

    proptest! {
        #[test]
        fn spec_round_trips_losslessly(spec in arb_spec()) {
            let back = CoefficientSpec::from_json(&spec.to_json()).unwrap();
            prop_assert_eq!(&back, &spec);
            let (b1, b2) = (spec.build().unwrap(), back.build().unwrap());
            for &t in &[spec.t0, spec.t0 * 1.7, spec.t0 * 40.0, spec.t0 * 1e5] {
                prop_assert_eq!(b1.eval(t).to_bits(), b2.eval(t).to_bits());
            }
        }

        #[test]
        fn envelope_soundness(spec in arb_spec()) {
            let b = spec.build().unwrap();
            if b.envelope().is_some() {
                let grid = log_grid(b.t0(), b.t0() * 1e6, 100_000);
                prop_assert!(envelope_violation(&b, &grid).unwrap() <= 1e-12);
            }
        }

        #[test]
        fn evaluation_is_finite_and_deterministic(spec in arb_spec(), s in 0.0f64..6.0) {
            let b = spec.build().unwrap();
            let t = b.t0() * 10f64.powf(s);
            let v = b.eval(t);
            prop_assert!(v.is_finite() && v >= 0.0);
            prop_assert_eq!(v.to_bits(), b.eval(t).to_bits());
        }
    }
}
