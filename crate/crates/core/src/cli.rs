//! Command-line front end: single-mode simulations, decay-table reproduction,
//! resonance runs and verification suites.
//!
//! Every command writes plain CSV/JSON files, a plotting stub and a
//! `<command>.manifest.json` listing them. Exit codes: 0 success, 1 a check
//! failed, 2 invalid input, 3 integration failure, 4 I/O failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{fit_decay_exponent_log, reproduce_table1, run_suite, AnalysisError, BoundReport, SUITES};
use crate::damping::{
    log_grid, make_fast_oscillation, make_open_problem, make_pinched_random, make_table1_coefficient,
    CoefficientSpec, DampingCoefficient, DampingError, PinchedRandomSpec, Scheme, Table1Row,
};
use crate::modeode::{integrate_mode, integrate_polar, polar_from_data, IntegratorConfig, ModeError, OutputGrid};
use crate::oscint::OscintError;
use crate::resonance::{
    build_resonant, coefficient_from_spec, contrast_decay, measure_resonant_decay, verify_limit_b,
    verify_theta_equals_eta, ResonanceError,
};
use crate::spectral::{SpectralError, SpectralModel};

/// Stand-in amplitude for `--r 0`, the no-resonance limit.
pub const ZERO_R_SUBSTITUTE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Integration(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<DampingError> for CliError {
    fn from(e: DampingError) -> Self {
        usage(e.to_string())
    }
}

impl From<ModeError> for CliError {
    fn from(e: ModeError) -> Self {
        match e {
            ModeError::Integration { .. } => CliError::Integration(e.to_string()),
            _ => usage(e.to_string()),
        }
    }
}

impl From<OscintError> for CliError {
    fn from(e: OscintError) -> Self {
        match e {
            OscintError::NotConverged { .. } => CliError::Integration(e.to_string()),
            _ => usage(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Mode { source, .. } => source.into(),
            _ => usage(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Mode(e) => e.into(),
            AnalysisError::Spectral(e) => e.into(),
            AnalysisError::Quadrature(e) => e.into(),
            AnalysisError::Fit(_) => CliError::Integration(e.to_string()),
            _ => usage(e.to_string()),
        }
    }
}

impl From<ResonanceError> for CliError {
    fn from(e: ResonanceError) -> Self {
        match e {
            ResonanceError::Mode(e) => e.into(),
            ResonanceError::Quadrature(e) => e.into(),
            ResonanceError::Analysis(e) => e.into(),
            ResonanceError::Eta(_) | ResonanceError::Pinching { .. } => CliError::Integration(e.to_string()),
            _ => usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dwl", version, about = "Energy decay of damped wave equations, mode by mode")]
pub struct Cli {
    /// Directory receiving output files.
    #[arg(long, global = true, default_value = "dwl-out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrates one mode `u'' + b(t) u' + λ² u = 0`.
    Simulate(SimulateArgs),
    /// Reproduces the decay-rate table for model coefficients.
    Table1(Table1Args),
    /// Builds the resonant coefficient and measures the slowed decay.
    Resonance(ResonanceArgs),
    /// Runs verification suites of the decay bounds.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Coefficient: inline JSON, a JSON file, or `preset:<name>` with name in
    /// const, mt, tp, tail, invtail, tlogt, t, fast, pinched, open, resonant.
    #[arg(long)]
    pub coefficient: String,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub u0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub v0: f64,
    /// Start time; defaults to the coefficient's `t0`.
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long, default_value_t = 1e4)]
    pub t_end: f64,
    /// Integrates the polar form `(log ρ, θ - λt)`.
    #[arg(long)]
    pub polar: bool,
    /// Trajectory CSV; defaults to `<out-dir>/trajectory.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Relative tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output samples per decade.
    #[arg(long, default_value_t = 64)]
    pub ppd: usize,
    #[command(flatten)]
    pub preset: PresetArgs,
}

/// Parameters of the presets.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct PresetArgs {
    #[arg(long)]
    pub b0: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long = "big-m")]
    pub big_m: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda_star: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub segments: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Table1Args {
    /// Comma-separated rows (`mt:1,mt:3,tp:0.5,tail,tlogt,t,invtail`) or `all`.
    #[arg(long, default_value = "all")]
    pub rows: String,
    /// Spectral model JSON `{"modes": [{"lambda", "weight"}]}`; defaults to 64
    /// modes log-spaced on `[1e-5, 10]`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ResonanceArgs {
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub r: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_star: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 16384.0)]
    pub t_end: f64,
    /// Dyadic windows of the limit check.
    #[arg(long, default_value_t = 14)]
    pub dyads: usize,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// Suite name or `all`.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Random coefficients per parameter pair.
    #[arg(long, default_value_t = 8)]
    pub seeds: u64,
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Record of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of all inputs.
    pub config_hash: String,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

/// SHA-256 hex digest of the canonical JSON of `inputs`.
pub fn config_hash(command: &str, inputs: &serde_json::Value) -> String {
    let doc = json!({ "command": command, "inputs": inputs, "tool_version": env!("CARGO_PKG_VERSION") });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Collects outputs of one command and writes them atomically.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes through a temporary file in the target directory, then renames.
    fn write_to(&mut self, path: PathBuf, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        let io_err = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let parent = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(io_err)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&parent).map_err(io_err)?;
        {
            let mut w = io::BufWriter::new(tmp.as_file_mut());
            fill(&mut w).map_err(io_err)?;
            w.flush().map_err(io_err)?;
        }
        tmp.persist(&path).map_err(|e| io_err(e.error))?;
        self.written.push(path);
        Ok(())
    }

    fn write(&mut self, name: &str, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        let path = self.path(name);
        self.write_to(path, fill)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("reports serialize");
        self.write(name, |w| writeln!(w, "{text}"))
    }

    /// Python stub plotting every CSV written so far on log-log axes.
    fn write_plot_stub(&mut self, command: &str) -> Result<(), CliError> {
        let csvs: Vec<String> = self
            .written
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .map(|p| p.display().to_string())
            .collect();
        let name = format!("plot_{command}.py");
        self.write(&name, |w| {
            writeln!(w, "# Plots the CSV outputs of `dwl {command}`: first column against the last.")?;
            writeln!(w, "import csv")?;
            writeln!(w, "import matplotlib.pyplot as plt")?;
            writeln!(w)?;
            writeln!(w, "FILES = {}", serde_json::to_string(&csvs).expect("paths serialize"))?;
            writeln!(w)?;
            writeln!(w, "for name in FILES:")?;
            writeln!(w, "    with open(name) as f:")?;
            writeln!(w, "        rows = list(csv.reader(f))")?;
            writeln!(w, "    try:")?;
            writeln!(w, "        xs = [float(r[0]) for r in rows[1:]]")?;
            writeln!(w, "        ys = [float(r[-1]) for r in rows[1:]]")?;
            writeln!(w, "    except ValueError:")?;
            writeln!(w, "        continue")?;
            writeln!(w, "    plt.figure()")?;
            writeln!(w, "    plt.loglog(xs, ys)")?;
            writeln!(w, "    plt.xlabel(rows[0][0])")?;
            writeln!(w, "    plt.ylabel(rows[0][-1])")?;
            writeln!(w, "    plt.title(name)")?;
            writeln!(w, "plt.show()")
        })
    }

    fn finish(mut self, command: &str, inputs: &serde_json::Value, started: u64) -> Result<(), CliError> {
        self.write_plot_stub(command)?;
        let manifest = RunManifest {
            command: command.into(),
            config_hash: config_hash(command, inputs),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: self.written.iter().map(|p| p.display().to_string()).collect(),
            started_unix: started,
            finished_unix: unix_now(),
        };
        self.write_json(&format!("{command}.manifest.json"), &manifest)
    }
}

fn config(tol: Option<f64>) -> Result<IntegratorConfig, CliError> {
    let mut cfg = IntegratorConfig::default();
    if let Some(t) = tol {
        cfg = cfg.with_tol(t, t * 1e-2);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn need(v: Option<f64>, preset: &str, flag: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| usage(format!("preset:{preset} needs --{flag}")))
}

/// Resolves `--coefficient` to a coefficient and its serializable description.
fn resolve_coefficient(args: &SimulateArgs, cfg: &IntegratorConfig) -> Result<DampingCoefficient, CliError> {
    let t0 = args.t0.unwrap_or(1.0);
    let p = &args.preset;
    if let Some(name) = args.coefficient.strip_prefix("preset:") {
        let pinched = |open: bool| -> Result<DampingCoefficient, CliError> {
            let (m, big_m) = (need(p.m, name, "m")?, need(p.big_m, name, "big-m")?);
            Ok(if open {
                make_open_problem(m, big_m, p.segments, p.seed, Scheme::PiecewiseConstant, t0)?
            } else {
                let spec = PinchedRandomSpec {
                    m,
                    big_m,
                    segment_count: p.segments,
                    seed: p.seed,
                    scheme: Scheme::PiecewiseConstant,
                };
                make_pinched_random(&spec, t0)?
            })
        };
        let row = |r: Table1Row| -> Result<DampingCoefficient, CliError> {
            r.validate()?;
            Ok(make_table1_coefficient(r, args.t0.unwrap_or(r.default_t0()))?)
        };
        return match name {
            "const" => Ok(DampingCoefficient::constant(need(p.b0, name, "b0")?, t0)?),
            "mt" => row(Table1Row::scale_invariant(need(p.m, name, "m")?)),
            "tp" => row(Table1Row::PowerLaw { p: need(p.p, name, "p")? }),
            "tail" => row(Table1Row::IntegrableTail {
                c: p.c.unwrap_or(1.0),
                q: p.q.unwrap_or(2.0),
            }),
            "invtail" => row(Table1Row::InverseIntegrableTail {
                c: p.c.unwrap_or(1.0),
                q: p.q.unwrap_or(2.0),
            }),
            "tlogt" => row(Table1Row::InverseLog),
            "t" => row(Table1Row::Linear),
            "fast" => Ok(make_fast_oscillation(
                need(p.a, name, "a")?,
                need(p.r, name, "r")?,
                need(p.alpha, name, "alpha")?,
                t0,
            )?),
            "pinched" => pinched(false),
            "open" => pinched(true),
            "resonant" => {
                let ls = p.lambda_star.unwrap_or(args.lambda);
                Ok(build_resonant(need(p.a, name, "a")?, need(p.r, name, "r")?, ls, t0, args.t_end, cfg)?.coefficient())
            }
            other if other.contains(':') => row(Table1Row::parse(other)?),
            other => Err(usage(format!("unknown preset `{other}`"))),
        };
    }
    let text = if args.coefficient.trim_start().starts_with('{') {
        args.coefficient.clone()
    } else {
        fs::read_to_string(&args.coefficient).map_err(|source| CliError::Io {
            path: PathBuf::from(&args.coefficient),
            source,
        })?
    };
    let spec = CoefficientSpec::from_json(&text).map_err(|e| usage(format!("invalid coefficient JSON: {e}")))?;
    Ok(coefficient_from_spec(&spec, cfg)?)
}

pub fn cmd_simulate(out_dir: &Path, args: &SimulateArgs) -> Result<(), CliError> {
    let started = unix_now();
    if !(args.lambda >= 0.0 && args.lambda.is_finite()) {
        return Err(usage(format!("--lambda must be non-negative, got {}", args.lambda)));
    }
    if args.polar && args.lambda <= 0.0 {
        return Err(usage("--polar needs --lambda > 0"));
    }
    if args.ppd == 0 {
        return Err(usage("--ppd must be positive"));
    }
    let cfg = config(args.tol)?.with_grid(OutputGrid::LogSpaced(args.ppd));
    let b = resolve_coefficient(args, &cfg)?;
    let t0 = args.t0.unwrap_or(b.t0());
    let tr = if args.polar {
        let (rho, theta) = polar_from_data(args.lambda, args.u0, args.v0);
        integrate_polar(&b, args.lambda, rho, theta, t0, args.t_end, &cfg)?
    } else {
        integrate_mode(&b, args.lambda, args.u0, args.v0, t0, args.t_end, &cfg)?
    };
    let mut out = Outputs::new(out_dir)?;
    let path = args.out.clone().unwrap_or_else(|| out.path("trajectory.csv"));
    out.write_to(path.clone(), |w| tr.write_csv(w))?;
    let last = tr.log_energy.last().copied().unwrap_or(f64::NAN);
    println!("coefficient {}", b.label());
    println!("lambda {} on [{t0}, {}], {} samples", args.lambda, args.t_end, tr.log_energy.len());
    println!("final energy {:.6e}", last.exp());
    if let Ok(fit) = fit_decay_exponent_log(&tr.log_energy_samples(), None) {
        println!("fitted exponent {:.4}", fit.exponent);
    }
    println!("wrote {}", path.display());
    let inputs = json!({ "args": args, "coefficient": b.spec() });
    out.finish("simulate", &inputs, started)
}

fn parse_rows(s: &str) -> Result<Vec<Table1Row>, CliError> {
    if s.trim() == "all" {
        return Ok(Table1Row::all());
    }
    s.split(',')
        .filter(|r| !r.trim().is_empty())
        .map(|r| Table1Row::parse(r).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|rows| if rows.is_empty() { Err(usage("--rows is empty")) } else { Ok(rows) })
}

/// Default model of the table: 64 unit-weight modes on `[1e-5, 10]`.
pub fn table_model() -> SpectralModel {
    SpectralModel::log_spaced(64, 1e-5, 10.0).expect("valid model")
}

pub fn cmd_table1(out_dir: &Path, args: &Table1Args) -> Result<(), CliError> {
    let started = unix_now();
    let rows = parse_rows(&args.rows)?;
    let model = match &args.model {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            SpectralModel::from_json(&text)?
        }
        None => table_model(),
    };
    let cfg = config(args.tol)?;
    let report = reproduce_table1(&rows, &model, &cfg)?;
    let mut out = Outputs::new(out_dir)?;
    let text = report.to_text();
    print!("{text}");
    out.write("table1.txt", |w| w.write_all(text.as_bytes()))?;
    out.write("table1.csv", |w| report.write_csv(w))?;
    out.write_json("table1.json", &report)?;
    for e in &report.entries {
        if let Some(curve) = &e.curve {
            let name = format!("table1_curve_{}.csv", e.row.replace([':', '.'], "_"));
            out.write(&name, |w| curve.write_csv(w))?;
        }
    }
    let inputs = json!({ "args": args, "rows": rows, "model": model });
    out.finish("table1", &inputs, started)?;
    if report.pass() {
        Ok(())
    } else {
        Err(CliError::CheckFailed("some table rows miss their predicted rate".into()))
    }
}

pub fn cmd_resonance(out_dir: &Path, args: &ResonanceArgs) -> Result<(), CliError> {
    let started = unix_now();
    if !(args.a > 0.0 && args.r >= 0.0 && args.r <= args.a) {
        return Err(usage(format!("need a >= r >= 0 and a > 0, got a = {}, r = {}", args.a, args.r)));
    }
    let r_used = if args.r == 0.0 { ZERO_R_SUBSTITUTE } else { args.r };
    let cfg = config(args.tol)?;
    let rd = build_resonant(args.a, r_used, args.lambda_star, args.t0, args.t_end, &cfg)?;
    let theta_eta = verify_theta_equals_eta(&rd, &cfg)?;
    let limit_b = verify_limit_b(&rd, args.dyads)?;
    let (violation, violation_t) = rd.pinching_violation(100_000);
    let pinching_pass = violation <= 1e-12 * (rd.a + rd.r);
    let decay = measure_resonant_decay(&rd, &cfg)?;
    let contrast = contrast_decay(&rd, &cfg)?;
    let pass = theta_eta.pass && limit_b.pass && pinching_pass && decay.lower_bound_pass;
    let summary = json!({
        "a": args.a,
        "r": args.r,
        "r_used": r_used,
        "lambda_star": args.lambda_star,
        "t0": args.t0,
        "t_end": args.t_end,
        "theta_eta": theta_eta,
        "limit_b": limit_b,
        "pinching": { "points": 100_000, "max_violation": violation, "worst_t": violation_t, "pass": pinching_pass },
        "decay": decay,
        "contrast": contrast,
        "pass": pass,
    });
    println!("a = {}, r = {}, lambda* = {}", args.a, args.r, args.lambda_star);
    println!("fitted exponent {:.4} (a - r/2 = {})", decay.fit.exponent, decay.predicted_exponent);
    println!("contrast exponent under a/t {:.4}", contrast.fit.exponent);
    println!("theta = eta to {:.3e}", theta_eta.max_deviation);
    println!("limit estimate {:.6} after {} dyads", limit_b.limit_estimate, args.dyads);
    let mut out = Outputs::new(out_dir)?;
    out.write_json("resonance.json", &summary)?;
    let write_energy = |samples: &[(f64, f64)]| {
        let rows: Vec<(f64, f64)> = samples.to_vec();
        move |w: &mut dyn Write| -> io::Result<()> {
            writeln!(w, "t,energy")?;
            for (t, l) in &rows {
                writeln!(w, "{t:.16e},{:.16e}", l.exp())?;
            }
            Ok(())
        }
    };
    out.write("resonance_energy.csv", write_energy(&decay.log_energy))?;
    out.write("contrast_energy.csv", write_energy(&contrast.log_energy))?;
    let n = ((args.t_end / args.t0).log10() * 64.0).round() as usize + 1;
    let times = log_grid(args.t0, args.t_end, n.max(2));
    out.write("eta.csv", |w| rd.write_eta_csv(w, &times))?;
    out.finish("resonance", &json!({ "args": args }), started)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed("a resonance check failed; see resonance.json".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seeds: u64,
    pub suites: Vec<crate::analysis::SuiteReport>,
    pub pass: bool,
}

pub fn cmd_verify(out_dir: &Path, args: &VerifyArgs) -> Result<(), CliError> {
    let started = unix_now();
    let names: Vec<&str> = if args.suite == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&args.suite.as_str()) {
        vec![args.suite.as_str()]
    } else {
        return Err(usage(format!("unknown suite `{}`, expected all or one of {}", args.suite, SUITES.join(", "))));
    };
    let cfg = config(args.tol)?;
    let mut suites = Vec::with_capacity(names.len());
    for name in names {
        let s = run_suite(name, args.seeds, &cfg)?;
        println!("{:<11} {} ({} reports)", s.name, if s.pass { "pass" } else { "FAIL" }, s.reports.len());
        suites.push(s);
    }
    let pass = suites.iter().all(|s| s.pass);
    let report = VerifyReport {
        seeds: args.seeds,
        suites,
        pass,
    };
    let mut out = Outputs::new(out_dir)?;
    out.write_json("verify.json", &report)?;
    out.finish("verify", &json!({ "args": args }), started)?;
    if pass {
        Ok(())
    } else {
        let failing: Vec<&BoundReport> = report.suites.iter().flat_map(|s| &s.reports).filter(|r| !r.pass).collect();
        for r in &failing {
            eprintln!("{}", serde_json::to_string(r).expect("reports serialize"));
        }
        Err(CliError::CheckFailed(format!("{} bound report(s) failed", failing.len())))
    }
}

/// Applies `DWL_THREADS` to the global thread pool.
fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("DWL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("DWL_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("cannot configure thread pool: {e}")))
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&cli.out_dir, a),
        Command::Table1(a) => cmd_table1(&cli.out_dir, a),
        Command::Resonance(a) => cmd_resonance(&cli.out_dir, a),
        Command::Verify(a) => cmd_verify(&cli.out_dir, a),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
