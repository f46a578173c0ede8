//! Acceptance criteria 1 to 10. Prints one pass/fail line per criterion and
//! exits non-zero when any fails.

use std::error::Error;
use std::process::Command;
use std::time::Instant;

use dampwave::analysis::{
    big_b, coercive_exponents, fit_decay_exponent_log, reproduce_table1, run_suite, table1_horizon,
    verify_parabolic_split, verify_prop_main_2, ModeData, RowCheck, GENERAL_PAIRS,
};
use dampwave::cli::table_model;
use dampwave::damping::{
    log_grid, make_fast_oscillation, make_open_problem, make_piecewise, make_pinched_random,
    make_table1_coefficient, DampingCoefficient, PinchedRandomSpec, Scheme, Table1Row,
};
use dampwave::modeode::{
    constant_oracle, integrate_mode, integrate_polar, polar_from_data, IntegratorConfig, OutputGrid,
};
use dampwave::oscint::lemma_examples;
use dampwave::resonance::{
    build_resonant, contrast_decay, measure_resonant_decay, verify_limit_b, verify_theta_equals_eta,
};
use dampwave::spectral::SpectralModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), Box<dyn Error>>;

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

/// Adaptive solutions against closed forms in all three damping regimes.
fn constant_oracle_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let lambda = rng.gen_range(0.1..3.0);
        let b0 = match i % 3 {
            0 => rng.gen_range(0.0..1.9) * lambda,
            1 => 2.0 * lambda,
            _ => rng.gen_range(2.1..6.0) * lambda,
        };
        let t0 = rng.gen_range(0.0..5.0);
        let (u0, v0) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let b = DampingCoefficient::constant(b0, t0)?;
        let times: Vec<f64> = (0..=500).map(|k| t0 + 0.1 * k as f64).collect();
        let c = cfg().with_grid(OutputGrid::Explicit(times.clone()));
        let tr = integrate_mode(&b, lambda, u0, v0, t0, t0 + 50.0, &c)?;
        for (s, &t) in tr.samples.iter().zip(&times) {
            let e = constant_oracle(b0, lambda, u0, v0, t0, t);
            let err = (s.u - e.u).hypot(s.v - e.v) / e.u.hypot(e.v);
            worst = worst.max(err);
        }
    }
    Ok((worst <= 1e-8, format!("20 triples, worst relative error {worst:.2e} (limit 1e-8)")))
}

/// Coefficients of the catalog with the span each is integrated over.
fn catalog() -> Result<Vec<(DampingCoefficient, f64)>, Box<dyn Error>> {
    let mut out = vec![(DampingCoefficient::constant(0.5, 1.0)?, 1e4)];
    for row in Table1Row::all().into_iter().chain([Table1Row::scale_invariant(1.5)]) {
        let (t0, t_end) = table1_horizon(row);
        out.push((make_table1_coefficient(row, t0)?, t_end));
    }
    out.push((make_fast_oscillation(2.0, 1.0, 1.5, 1.0)?, 1e4));
    out.push((make_fast_oscillation(1.0, 1.0, 2.0, 1.0)?, 1e3));
    let spec = PinchedRandomSpec {
        m: 1.0,
        big_m: 3.0,
        segment_count: 32,
        seed: 7,
        scheme: Scheme::PiecewiseLinear,
    };
    out.push((make_pinched_random(&spec, 1.0)?, 1e4));
    out.push((make_open_problem(1.0, 2.0, 32, 3, Scheme::PiecewiseConstant, 1.0)?, 1e4));
    out.push((make_piecewise(&[10.0, 100.0, 1000.0], &[0.5, 0.05, 0.2, 0.002], 1.0)?, 1e4));
    out.push((build_resonant(1.0, 0.5, 1.0, 1.0, 1e4, &cfg())?.coefficient(), 1e4));
    Ok(out)
}

/// Energies from `(ρ, θ)` against Cartesian energies; phase drift within `b/2`.
/// Tightened tolerance: Cartesian phase error accumulates over `λt ≈ 1e5` radians.
fn polar_cartesian_check() -> Check {
    let (mut worst_rel, mut worst_drift, mut runs) = (0.0f64, f64::NEG_INFINITY, 0);
    for (b, t_end) in catalog()? {
        let t0 = b.t0();
        let n = ((t_end / t0).log10() * 64.0).round() as usize + 1;
        let c = cfg().with_tol(1e-12, 1e-14).with_grid(OutputGrid::Explicit(log_grid(t0, t_end, n)));
        for lambda in [0.1, 1.0, 10.0] {
            let cart = integrate_mode(&b, lambda, 0.0, 1.0, t0, t_end, &c)?;
            let (rho, theta) = polar_from_data(lambda, 0.0, 1.0);
            let pol = integrate_polar(&b, lambda, rho, theta, t0, t_end, &c)?;
            for (a, p) in cart.log_energy.iter().zip(&pol.log_energy) {
                worst_rel = worst_rel.max((p - a).exp_m1().abs());
            }
            worst_drift = worst_drift.max(pol.meta.max_drift_excess);
            runs += 1;
        }
    }
    Ok((
        worst_rel <= 1e-6 && worst_drift <= 1e-12,
        format!("{runs} runs, worst energy mismatch {worst_rel:.2e} (limit 1e-6), worst |h'| - b/2 = {worst_drift:.2e}"),
    ))
}

/// Fitted decay of the energy operator norm for the table rows.
fn table1_check() -> Check {
    let rows: Vec<Table1Row> = Table1Row::all().into_iter().chain([Table1Row::scale_invariant(1.5)]).collect();
    let report = reproduce_table1(&rows, &table_model(), &cfg())?;
    let detail: Vec<String> = report
        .entries
        .iter()
        .map(|e| match &e.check {
            RowCheck::Exponent { fitted, .. } => format!("{} {fitted:.3}", e.row),
            RowCheck::InverseLog { correlation } => format!("{} corr {correlation:.4}", e.row),
            RowCheck::NoDecay { min_ratio, .. } => format!("{} min {min_ratio:.3}", e.row),
        })
        .collect();
    Ok((report.pass(), detail.join(", ")))
}

/// General-oscillation bound for random pinched coefficients, 16 modes each.
fn general_check() -> Check {
    let s = run_suite("general", 8, &cfg())?;
    let pinched = s.reports.iter().filter(|r| r.label.starts_with("pinched")).count();
    let worst = s.reports.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let expected = 8 * GENERAL_PAIRS.len();
    Ok((
        s.pass && pinched == expected,
        format!("{pinched} pinched coefficients x 16 modes, worst ratio {worst:.3e}"),
    ))
}

/// Fast-oscillation bound per mode and the undisturbed rate `a` at `λ = 1`.
fn fast_check() -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for (a, r, alpha, t_end) in [(1.0, 1.0, 2.0, 1e3), (2.0, 1.0, 1.5, 1e4)] {
        let grid = log_grid(1.0, t_end, 64);
        let mut worst: f64 = 0.0;
        for lambda in [0.01, 0.1, 1.0, 10.0] {
            for data in [ModeData::Worst, ModeData::Pair { u0: 0.0, v0: 1.0 }] {
                let rep = verify_prop_main_2(a, r, alpha, lambda, data, &grid, &cfg())?;
                pass &= rep.pass;
                worst = worst.max(rep.max_ratio);
            }
        }
        let b = make_fast_oscillation(a, r, alpha, 1.0)?;
        let c = cfg().with_grid(OutputGrid::LogSpaced(200));
        let tr = integrate_mode(&b, 1.0, 0.0, 1.0, 1.0, t_end, &c)?;
        let q = fit_decay_exponent_log(&tr.log_energy_samples(), None)?.exponent;
        pass &= (q - a).abs() <= 0.05;
        parts.push(format!("(a={a}, r={r}, alpha={alpha}) ratio {worst:.2e} exponent {q:.4}"));
    }
    Ok((pass, parts.join("; ")))
}

/// Slowed decay `a - r/2` under the resonant coefficient.
fn resonance_check() -> Check {
    let rd = build_resonant(1.0, 0.5, 1.0, 1.0, 16384.0, &cfg())?;
    let te = verify_theta_equals_eta(&rd, &cfg())?;
    let lb = verify_limit_b(&rd, 14)?;
    let (violation, _) = rd.pinching_violation(100_000);
    let decay = measure_resonant_decay(&rd, &cfg())?;
    let contrast = contrast_decay(&rd, &cfg())?;
    let (q, qc) = (decay.fit.exponent, contrast.fit.exponent);
    let pass = (q - 0.75).abs() <= 0.05
        && (qc - 1.0).abs() <= 0.05
        && te.max_deviation <= 1e-6
        && lb.pass
        && violation <= 1e-12
        && decay.lower_bound_pass;
    Ok((
        pass,
        format!(
            "exponent {q:.4}, contrast {qc:.4}, |theta - eta| {:.2e}, limit {:.4} (last diff {:.1e}), pinching excess {violation:.1e}",
            te.max_deviation, lb.limit_estimate, lb.last_difference
        ),
    ))
}

/// Oscillating-integral lemmas on their reference configurations and the γ inequality.
fn lemma_check() -> Check {
    let lemmas = lemma_examples()?;
    let worst = lemmas.iter().map(|(_, r)| r.max_ratio).fold(0.0, f64::max);
    let gamma = run_suite("gamma", 0, &cfg())?;
    Ok((
        lemmas.iter().all(|(_, r)| r.pass) && gamma.pass,
        format!(
            "{} lemma checks, worst ratio {worst:.3}; gamma 50x20x50 worst ratio {:.6}",
            lemmas.len(),
            gamma.reports[0].max_ratio
        ),
    ))
}

/// Parabolic estimates before and after the turning time.
fn parabolic_check() -> Check {
    let grid = log_grid(1.0, 1e4, 200);
    let cases = [
        ("1/t", DampingCoefficient::scale_invariant(1.0, 1.0)?, 1.0, 0.0),
        ("(2 + sin t^1.5)/t", make_fast_oscillation(2.0, 1.0, 1.5, 1.0)?, 2.0, big_b(1.0, 1.5, 1.0)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, b, m, bb) in &cases {
        for lambda in [0.01, 1.0] {
            let r = verify_parabolic_split(b, *m, *bb, lambda, 0.3, 1.0, &grid, &cfg())?;
            pass &= r.pass && r.t1.is_some();
            let after = r.after.as_ref().map_or(0.0, |a| a.max_ratio);
            parts.push(format!(
                "{name} lambda={lambda}: t1 {:.3}, ratios {:.3}/{after:.3}",
                r.t1.unwrap_or(f64::NAN),
                r.before.max_ratio
            ));
        }
    }
    Ok((pass, parts.join("; ")))
}

/// Rate 3 for every mode of a coercive model under `3/t`.
fn coercive_check() -> Check {
    let model = SpectralModel::log_spaced(8, 1.0, 10.0)?;
    let r = coercive_exponents(&model, 3.0, 1.0, 1e4, &cfg())?;
    Ok((
        model.coercive() && r.min_exponent >= 2.95,
        format!("8 modes in [1, 10], smallest exponent {:.4}", r.min_exponent),
    ))
}

/// Two runs of the full verification produce identical report bytes.
fn reproducibility_check() -> Check {
    let dir = tempfile::tempdir()?;
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_dwl"))
            .args(["verify", "--suite", "all", "--seeds", "8", "--out-dir"])
            .arg(&out)
            .output()?;
        if !status.status.success() {
            return Ok((false, format!("run {run} exited with {}", status.status)));
        }
        bytes.push(std::fs::read(out.join("verify.json"))?);
    }
    Ok((bytes[0] == bytes[1], format!("verify.json {} bytes, identical: {}", bytes[0].len(), bytes[0] == bytes[1])))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("constant-damping oracle", constant_oracle_check),
        ("polar/Cartesian equivalence", polar_cartesian_check),
        ("decay table reproduction", table1_check),
        ("general oscillations bound", general_check),
        ("fast oscillations bound and rate", fast_check),
        ("resonance anomaly", resonance_check),
        ("oscillating-integral lemmas and gamma", lemma_check),
        ("parabolic split", parabolic_check),
        ("coercive rate", coercive_check),
        ("reproducibility", reproducibility_check),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<40} {}  {detail} [{:.1}s]",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
