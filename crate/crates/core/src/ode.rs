//! Embedded Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! The driver is deliberately small: it advances a fixed-size state, hands every
//! accepted step to a callback together with its interpolant, and restarts at
//! declared breakpoints so that step control never straddles a jump of the
//! right-hand side. Linear systems may ask for renormalization, in which case
//! the state is kept at unit norm and the discarded magnitude is accumulated in
//! a log-scale factor. This keeps the error control relative when a solution
//! decays through hundreds of decades.

use thiserror::Error;

/// Right-hand side of `y' = f(t, y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], dy: &mut [f64; N]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct StepperOptions {
    pub tol: Tolerances,
    pub max_steps: usize,
    /// Upper bound on the step length.
    pub max_step: f64,
    /// Keep the state normalized; only valid for linear homogeneous systems.
    pub rescale: bool,
    /// Measure local errors against `rel` alone, for logarithms and phases
    /// whose size carries no scale.
    pub absolute: bool,
}

impl StepperOptions {
    pub fn new(rel: f64, abs: f64) -> Self {
        Self {
            tol: Tolerances { rel, abs },
            max_steps: 50_000_000,
            max_step: f64::INFINITY,
            rescale: false,
            absolute: false,
        }
    }
}

fn error_scale(tol: Tolerances, absolute: bool, a: f64, b: f64) -> f64 {
    if absolute {
        tol.rel
    } else {
        tol.abs + tol.rel * a.abs().max(b.abs())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64, y: Vec<f64>, log_scale: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64, y: Vec<f64>, log_scale: f64 },
    #[error("maximum number of steps ({max_steps}) exceeded at t = {t}")]
    MaxSteps { t: f64, max_steps: usize },
    #[error("invalid integration interval [{t0}, {t_end}]")]
    BadInterval { t0: f64, t_end: f64 },
}

/// Returned by the step callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// One accepted step together with its interpolant.
///
/// States are expressed in the normalized frame of the step: the physical
/// state is `y * exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    pub log_scale: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> Step<N> {
    /// Dense-output value at `t ∈ [t0, t1]` (normalized frame).
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        if h == 0.0 {
            return self.y1;
        }
        let s = (t - self.t0) / h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i])));
        }
        out
    }
}

/// All accepted steps of a run, for evaluation at arbitrary times afterwards.
#[derive(Debug, Clone, Default)]
pub struct DenseRecord<const N: usize> {
    steps: Vec<Step<N>>,
}

impl<const N: usize> DenseRecord<N> {
    pub fn push(&mut self, step: &Step<N>) {
        self.steps.push(step.clone());
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step<N>] {
        &self.steps
    }

    pub fn t_start(&self) -> f64 {
        self.steps.first().map_or(f64::NAN, |s| s.t0)
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.t1)
    }

    /// Dense value and log-scale at `t`, or `None` outside the recorded span.
    pub fn eval(&self, t: f64) -> Option<([f64; N], f64)> {
        if self.steps.is_empty() || t < self.t_start() || t > self.t_end() {
            return None;
        }
        let i = self.steps.partition_point(|s| s.t1 < t).min(self.steps.len() - 1);
        let s = &self.steps[i];
        Some((s.eval(t), s.log_scale))
    }
}

#[derive(Debug, Clone)]
pub struct Outcome<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub log_scale: f64,
    pub stats: Stats,
    pub stopped: bool,
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const RESCALE_LO: f64 = 1.0 / 16.0;
const RESCALE_HI: f64 = 16.0;

fn norm<const N: usize>(y: &[f64; N]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Evaluates the system at a time nudged into the open segment `(lo, hi)` when
/// `lo`/`hi` are breakpoints, so piecewise right-hand sides see one side only.
struct Segment {
    lo: f64,
    hi: f64,
    lo_is_break: bool,
    hi_is_break: bool,
}

impl Segment {
    fn clamp(&self, t: f64) -> f64 {
        if self.lo_is_break && t <= self.lo {
            self.lo.next_up()
        } else if self.hi_is_break && t >= self.hi {
            self.hi.next_down()
        } else {
            t
        }
    }
}

struct Driver<'a, S, const N: usize> {
    sys: &'a S,
    opts: StepperOptions,
    stats: Stats,
}

impl<S: OdeSystem<N>, const N: usize> Driver<'_, S, N> {
    fn f(&mut self, seg: &Segment, t: f64, y: &[f64; N]) -> [f64; N] {
        let mut dy = [0.0; N];
        self.sys.rhs(seg.clamp(t), y, &mut dy);
        self.stats.rhs_evals += 1;
        dy
    }

    fn initial_step(&mut self, seg: &Segment, t: f64, y: &[f64; N], k1: &[f64; N], span: f64) -> f64 {
        let (tol, absolute) = (self.opts.tol, self.opts.absolute);
        let sc = |i: usize, v: f64| error_scale(tol, absolute, y[i], v);
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..N {
            let s = sc(i, y[i]);
            dnf += (k1[i] / s).powi(2);
            dny += (y[i] / s).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(self.opts.max_step).min(span);
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = y[i] + h * k1[i];
        }
        let k2 = self.f(seg, t + h, &y1);
        let mut der2 = 0.0;
        for i in 0..N {
            der2 += ((k2[i] - k1[i]) / sc(i, y[i])).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h).min(h1).min(self.opts.max_step).min(span)
    }
}

/// Integrates `sys` from `(t0, y0)` to `t_end`, restarting at each breakpoint
/// strictly inside the interval. Every accepted step is passed to `on_step`.
pub fn integrate<S, F, const N: usize>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    breakpoints: &[f64],
    opts: StepperOptions,
    mut on_step: F,
) -> Result<Outcome<N>, OdeError>
where
    S: OdeSystem<N>,
    F: FnMut(&Step<N>) -> Flow,
{
    if !(t0.is_finite() && t_end.is_finite() && t_end >= t0) {
        return Err(OdeError::BadInterval { t0, t_end });
    }
    let mut driver = Driver {
        sys,
        opts,
        stats: Stats::default(),
    };
    let mut y = y0;
    let mut log_scale = 0.0;
    if opts.rescale {
        let n = norm(&y);
        if n > 0.0 && n.is_finite() {
            for v in y.iter_mut() {
                *v /= n;
            }
            log_scale = n.ln();
        }
    }
    if t_end == t0 {
        return Ok(Outcome {
            t: t0,
            y,
            log_scale,
            stats: driver.stats,
            stopped: false,
        });
    }

    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > t0 && b < t_end)
        .collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(t0);
    edges.extend(cuts);
    edges.push(t_end);

    let mut t = t0;
    let mut h_carry: Option<f64> = None;
    for w in 0..edges.len() - 1 {
        let seg = Segment {
            lo: edges[w],
            hi: edges[w + 1],
            lo_is_break: w > 0,
            hi_is_break: w + 2 < edges.len(),
        };
        let stopped = run_segment(&mut driver, &seg, &mut t, &mut y, &mut log_scale, &mut h_carry, &mut on_step)?;
        if stopped {
            return Ok(Outcome {
                t,
                y,
                log_scale,
                stats: driver.stats,
                stopped: true,
            });
        }
    }
    Ok(Outcome {
        t,
        y,
        log_scale,
        stats: driver.stats,
        stopped: false,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_segment<S, F, const N: usize>(
    d: &mut Driver<'_, S, N>,
    seg: &Segment,
    t: &mut f64,
    y: &mut [f64; N],
    log_scale: &mut f64,
    h_carry: &mut Option<f64>,
    on_step: &mut F,
) -> Result<bool, OdeError>
where
    S: OdeSystem<N>,
    F: FnMut(&Step<N>) -> Flow,
{
    let tol = d.opts.tol;
    let t_end = seg.hi;
    let mut k1 = d.f(seg, *t, y);
    let span = t_end - *t;
    let mut h = match h_carry {
        Some(h) => h.min(span),
        None => d.initial_step(seg, *t, y, &k1, span),
    };
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;

    while *t < t_end {
        if d.stats.accepted + d.stats.rejected >= d.opts.max_steps {
            return Err(OdeError::MaxSteps {
                t: *t,
                max_steps: d.opts.max_steps,
            });
        }
        let remaining = t_end - *t;
        h = h.min(d.opts.max_step);
        let mut last = false;
        if h >= remaining || remaining - h <= 1e-12 * t_end.abs().max(1.0) {
            h = remaining;
            last = true;
        }
        if h <= 1e-14 * t.abs().max(1e-300) || h <= f64::MIN_POSITIVE {
            return Err(OdeError::StepUnderflow {
                t: *t,
                y: y.to_vec(),
                log_scale: *log_scale,
            });
        }

        let mut yt = [0.0; N];
        for i in 0..N {
            yt[i] = y[i] + h * A21 * k1[i];
        }
        let k2 = d.f(seg, *t + C2 * h, &yt);
        for i in 0..N {
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        let k3 = d.f(seg, *t + C3 * h, &yt);
        for i in 0..N {
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        let k4 = d.f(seg, *t + C4 * h, &yt);
        for i in 0..N {
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        let k5 = d.f(seg, *t + C5 * h, &yt);
        for i in 0..N {
            yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t_end } else { *t + h };
        let k6 = d.f(seg, t_new, &yt);
        let mut y_new = [0.0; N];
        for i in 0..N {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        let k7 = d.f(seg, t_new, &y_new);

        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = error_scale(tol, d.opts.absolute, y[i], y_new[i]);
            err += (e / sc).powi(2);
        }
        let err = (err / N as f64).sqrt();

        if !err.is_finite() || !finite(&y_new) {
            if h < 1e-10 * t.abs().max(1.0) || !finite(y) {
                return Err(OdeError::NonFinite {
                    t: *t,
                    y: y.to_vec(),
                    log_scale: *log_scale,
                });
            }
            h *= 0.1;
            last_rejected = true;
            d.stats.rejected += 1;
            continue;
        }

        if err <= 1.0 {
            d.stats.accepted += 1;
            let mut rcont = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rcont[0][i] = y[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - h * k7[i] - bspl;
                rcont[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let step = Step {
                t0: *t,
                t1: t_new,
                y0: *y,
                y1: y_new,
                log_scale: *log_scale,
                rcont,
            };
            *t = t_new;
            *y = y_new;
            k1 = k7;

            let flow = on_step(&step);

            if d.opts.rescale {
                let n = norm(y);
                if n > 0.0 && !(RESCALE_LO..=RESCALE_HI).contains(&n) {
                    for i in 0..N {
                        y[i] /= n;
                        k1[i] /= n;
                    }
                    *log_scale += n.ln();
                }
            }

            let err_c = err.max(1e-10);
            let mut fac = SAFETY * err_c.powf(-0.2 + 0.75 * BETA) * err_old.powf(BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            err_old = err_c;
            let h_next = h * fac;
            if !last {
                h = h_next;
            } else {
                *h_carry = Some(h_next.max(h));
            }
            last_rejected = false;
            if flow == Flow::Stop {
                return Ok(true);
            }
        } else {
            d.stats.rejected += 1;
            let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            h *= fac;
            last_rejected = true;
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Sho(f64);
    impl OdeSystem<2> for Sho {
        fn rhs(&self, _t: f64, y: &[f64; 2], dy: &mut [f64; 2]) {
            dy[0] = y[1];
            dy[1] = -self.0 * self.0 * y[0];
        }
    }

    struct Decay;
    impl OdeSystem<1> for Decay {
        fn rhs(&self, _t: f64, y: &[f64; 1], dy: &mut [f64; 1]) {
            dy[0] = -y[0];
        }
    }

    struct Jump;
    impl OdeSystem<1> for Jump {
        fn rhs(&self, t: f64, _y: &[f64; 1], dy: &mut [f64; 1]) {
            dy[0] = if t < 1.0 { 1.0 } else { -2.0 };
        }
    }

    #[test]
    fn harmonic_oscillator_one_period() {
        let opts = StepperOptions::new(1e-11, 1e-13);
        let tp = 2.0 * std::f64::consts::PI / 3.0;
        let out = integrate(&Sho(3.0), 0.0, [1.0, 0.0], tp, &[], opts, |_| Flow::Continue).unwrap();
        assert!((out.y[0] - 1.0).abs() < 1e-9);
        assert!(out.y[1].abs() < 1e-8);
    }

    #[test]
    fn dense_output_tracks_exact_solution() {
        let opts = StepperOptions::new(1e-10, 1e-12);
        let mut worst: f64 = 0.0;
        integrate(&Sho(1.0), 0.0, [0.0, 1.0], 20.0, &[], opts, |s| {
            for j in 0..=8 {
                let t = s.t0 + (s.t1 - s.t0) * j as f64 / 8.0;
                let y = s.eval(t);
                worst = worst.max((y[0] - t.sin()).abs());
            }
            Flow::Continue
        })
        .unwrap();
        assert!(worst < 1e-8, "dense output error {worst}");
    }

    #[test]
    fn rescaling_tracks_log_magnitude() {
        let mut opts = StepperOptions::new(1e-10, 1e-12);
        opts.rescale = true;
        let out = integrate(&Decay, 0.0, [1.0], 900.0, &[], opts, |_| Flow::Continue).unwrap();
        let log_y = out.y[0].ln() + out.log_scale;
        assert!((log_y + 900.0).abs() < 1e-6, "log y = {log_y}");
    }

    #[test]
    fn breakpoint_restart_is_exact_for_piecewise_constant_rhs() {
        let opts = StepperOptions::new(1e-10, 1e-12);
        let out = integrate(&Jump, 0.0, [0.0], 2.0, &[1.0], opts, |_| Flow::Continue).unwrap();
        assert!((out.y[0] - (1.0 - 2.0)).abs() < 1e-12);
        assert!(out.stats.rejected < 5);
    }

    #[test]
    fn stop_flag_halts_integration() {
        let opts = StepperOptions::new(1e-8, 1e-10);
        let out = integrate(&Sho(1.0), 0.0, [1.0, 0.0], 100.0, &[], opts, |s| {
            if s.t1 > 3.0 {
                Flow::Stop
            } else {
                Flow::Continue
            }
        })
        .unwrap();
        assert!(out.stopped);
        assert!(out.t < 100.0);
    }

    #[test]
    fn rejects_reversed_interval() {
        let opts = StepperOptions::new(1e-8, 1e-10);
        let err = integrate(&Decay, 1.0, [1.0], 0.0, &[], opts, |_| Flow::Continue).unwrap_err();
        assert!(matches!(err, OdeError::BadInterval { .. }));
    }
}
