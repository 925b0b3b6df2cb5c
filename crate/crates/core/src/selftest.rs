//! Quick built-in property checks behind `kktx selftest`.
//!
//! These duplicate a small, fast subset of the test suite so a packaged
//! binary can verify its numerics without cargo.

use num_complex::Complex64;

use crate::channel::{apply_cd, propagate_manakov, FiberSpanParams, StepConfig};
use crate::experiment::{run_scenario, LinkScenario};
use crate::receiver::{kk_reconstruct, photodetect, KkConfig};
use crate::signal::{analytic, fft, hilbert, ComplexSignal, DualPolSignal};

type Check = (&'static str, fn() -> Result<(), String>);

fn rel_rms(a: &[Complex64], b: &[Complex64]) -> f64 {
    let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let norm: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (err / norm).sqrt()
}

fn check_hilbert() -> Result<(), String> {
    let n = 2048;
    let fs = 2048.0;
    let x = ComplexSignal::from_real(
        (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * std::f64::consts::PI * 64.0 * t).cos()
                    + 0.3 * (2.0 * std::f64::consts::PI * 200.0 * t).sin()
            })
            .collect(),
        fs,
        0.0,
    )
    .map_err(|e| e.to_string())?;
    let hh = hilbert(&hilbert(&x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let neg: Vec<Complex64> = x.samples().iter().map(|s| -s).collect();
    let err = rel_rms(hh.samples(), &neg);
    if err > 1e-10 {
        return Err(format!("H(H(x)) != -x, rel rms {err:.3e}"));
    }
    let a = analytic(&x).map_err(|e| e.to_string())?;
    let spec = fft(a.samples());
    let total: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
    let negative: f64 = spec[n / 2 + 1..].iter().map(|v| v.norm_sqr()).sum();
    if negative / total > 1e-20 {
        return Err(format!(
            "analytic signal not one-sided: {:.3e}",
            negative / total
        ));
    }
    Ok(())
}

fn check_cd_roundtrip() -> Result<(), String> {
    let n = 4096;
    let fs = 400e9;
    let x = ComplexSignal::new(
        (0..n)
            .map(|i| {
                let t = (i as f64 - n as f64 / 2.0) / fs;
                Complex64::new((-t * t / (2.0 * (20e-12f64).powi(2))).exp(), 0.0)
            })
            .collect(),
        fs,
        0.0,
    )
    .map_err(|e| e.to_string())?;
    let back = apply_cd(&apply_cd(&x, 1700.0), -1700.0);
    let err = rel_rms(back.samples(), x.samples());
    if err > 1e-10 {
        return Err(format!("CD round trip error {err:.3e}"));
    }
    Ok(())
}

fn check_cw_kerr_phase() -> Result<(), String> {
    let p: f64 = 0.01;
    let span = FiberSpanParams {
        length_km: 50.0,
        alpha_db_km: 0.0,
        ..Default::default()
    };
    let x = ComplexSignal::new(vec![Complex64::new(p.sqrt(), 0.0); 128], 1e9, 0.0)
        .map_err(|e| e.to_string())?;
    let zero = ComplexSignal::new(vec![Complex64::ZERO; 128], 1e9, 0.0).map_err(|e| e.to_string())?;
    let dp = DualPolSignal::new(x, zero).map_err(|e| e.to_string())?;
    let out = propagate_manakov(
        &dp,
        &span,
        &StepConfig {
            step_km: 0.5,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let phi = -(8.0 / 9.0) * span.gamma_per_w_km * p * span.length_km;
    let expect = Complex64::from_polar(p.sqrt(), phi);
    let err = (out.x.samples()[7] - expect).norm() / p.sqrt();
    if err > 1e-9 {
        return Err(format!("CW Kerr phase error {err:.3e}"));
    }
    Ok(())
}

fn check_kk_single_tone() -> Result<(), String> {
    let n = 4096;
    let fs = 96e9;
    let f0 = fs / 64.0;
    let field = ComplexSignal::new(
        (0..n)
            .map(|k| {
                1.0 + 0.5
                    * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f0 * k as f64 / fs)
            })
            .collect(),
        fs,
        0.0,
    )
    .map_err(|e| e.to_string())?;
    let i = photodetect(&field);
    let cfg = KkConfig::new(fs, 3, fs).map_err(|e| e.to_string())?;
    let (rec, _) = kk_reconstruct(&i, &cfg).map_err(|e| e.to_string())?;
    // constant-phase alignment
    let mut corr = Complex64::ZERO;
    for (a, b) in rec.samples().iter().zip(field.samples()) {
        corr += b * a.conj();
    }
    let rot = Complex64::from_polar(1.0, corr.arg());
    let aligned: Vec<Complex64> = rec.samples().iter().map(|s| s * rot).collect();
    let err = rel_rms(&aligned, field.samples());
    if err > 1e-6 {
        return Err(format!("single-tone reconstruction error {err:.3e}"));
    }
    Ok(())
}

fn check_micro_sweep_determinism() -> Result<(), String> {
    let sc = LinkScenario::from_toml_str(
        r#"
name = "selftest"
scheme = "kkpam-ssb"
n_symbols = 512
samples_per_symbol = 4
bias_or_lo_ratio = [10.0]
osnr_sweep_db = [17.0]
n_runs = 2
base_seed = 99
"#,
    )
    .map_err(|e| e.to_string())?;
    let a = run_scenario(&sc).map_err(|e| e.to_string())?;
    let b = run_scenario(&sc).map_err(|e| e.to_string())?;
    let ca = crate::experiment::render_csv(&a);
    let cb = crate::experiment::render_csv(&b);
    if ca != cb {
        return Err("repeated run is not byte-identical".into());
    }
    if a.rows.is_empty() {
        return Err("sweep produced no rows".into());
    }
    Ok(())
}

/// Runs all built-in checks, returning one (name, result) pair each.
pub fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    let checks: Vec<Check> = vec![
        ("hilbert-analytic", check_hilbert),
        ("cd-roundtrip", check_cd_roundtrip),
        ("cw-kerr-phase", check_cw_kerr_phase),
        ("kk-single-tone", check_kk_single_tone),
        ("sweep-determinism", check_micro_sweep_determinism),
    ];
    checks.into_iter().map(|(name, f)| (name, f())).collect()
}
