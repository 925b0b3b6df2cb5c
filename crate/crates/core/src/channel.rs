//! Fiber and amplifier physics.
//!
//! The sample grid uses the exp(+i w t) analytic convention throughout, so
//! the dispersion transfer is exp(-i beta2 w^2 z / 2) and the Kerr rotation
//! is exp(-i (8/9) gamma P h). With D > 0 (anomalous dispersion, beta2 < 0)
//! higher frequencies arrive earlier, which the group-delay test pins down.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{apply_filter, bin_freq_hz, map_spectrum, ComplexSignal, DualPolSignal, FilterSpec};

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
pub const PLANCK_J_S: f64 = 6.626_070_15e-34;
/// Wavelength used to convert ps/nm dispersion figures and to price ASE
/// photon energy when no span-specific value is given.
pub const REFERENCE_WAVELENGTH_NM: f64 = 1550.0;

/// One fiber span of the link.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct FiberSpanParams {
    pub length_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub gamma_per_w_km: f64,
    pub alpha_db_km: f64,
    pub reference_wavelength_nm: f64,
}

impl Default for FiberSpanParams {
    fn default() -> Self {
        // standard single-mode fiber
        Self {
            length_km: 100.0,
            dispersion_ps_nm_km: 17.0,
            gamma_per_w_km: 1.3,
            alpha_db_km: 0.2,
            reference_wavelength_nm: REFERENCE_WAVELENGTH_NM,
        }
    }
}

impl FiberSpanParams {
    /// Group-velocity dispersion beta2 in s^2/m.
    pub fn beta2_s2_per_m(&self) -> f64 {
        let d_si = self.dispersion_ps_nm_km * 1e-6; // s/m^2
        let lambda_m = self.reference_wavelength_nm * 1e-9;
        -d_si * lambda_m * lambda_m / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_M_S)
    }

    /// Accumulated dispersion of the span in ps/nm.
    pub fn total_ps_nm(&self) -> f64 {
        self.dispersion_ps_nm_km * self.length_km
    }

    /// Field attenuation coefficient in nepers per meter (power decays as
    /// exp(-2 * this * z)).
    pub fn alpha_field_per_m(&self) -> f64 {
        self.alpha_db_km * std::f64::consts::LN_10 / 10.0 / 2.0 / 1e3
    }
}

fn beta2_total_s2(total_ps_nm: f64, wavelength_nm: f64) -> f64 {
    let lambda_m = wavelength_nm * 1e-9;
    -(total_ps_nm * 1e-3) * lambda_m * lambda_m
        / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_M_S)
}

/// Applies the accumulated chromatic dispersion of `total_ps_nm` (at the
/// reference wavelength). Unitary: energy is preserved and
/// `apply_cd(D)` then `apply_cd(-D)` is the identity.
pub fn apply_cd(x: &ComplexSignal, total_ps_nm: f64) -> ComplexSignal {
    if total_ps_nm == 0.0 {
        return x.clone();
    }
    let beta2_tot = beta2_total_s2(total_ps_nm, REFERENCE_WAVELENGTH_NM);
    map_spectrum(x, |f, v| {
        let w = 2.0 * std::f64::consts::PI * f;
        v * Complex64::from_polar(1.0, -0.5 * beta2_tot * w * w)
    })
}

pub fn apply_cd_dual(x: &DualPolSignal, total_ps_nm: f64) -> DualPolSignal {
    DualPolSignal {
        x: apply_cd(&x.x, total_ps_nm),
        y: apply_cd(&x.y, total_ps_nm),
    }
}

/// Split-step configuration.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct StepConfig {
    pub step_km: f64,
    /// When set, the span is re-run at half the step and the two results
    /// compared; divergence beyond `tol` is an error.
    pub check_convergence: bool,
    pub tol: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            step_km: 0.1,
            check_convergence: false,
            tol: 1e-4,
        }
    }
}

fn ssfm_once(x: &DualPolSignal, span: &FiberSpanParams, step_m: f64) -> DualPolSignal {
    let n = x.len();
    let fs = x.sample_rate_hz();
    let beta2 = span.beta2_s2_per_m();
    let alpha = span.alpha_field_per_m();
    let gamma_m = span.gamma_per_w_km / 1e3;
    let length_m = span.length_km * 1e3;

    let n_steps = (length_m / step_m).ceil().max(1.0) as usize;
    let mut sizes = vec![step_m; n_steps];
    let last = length_m - step_m * (n_steps - 1) as f64;
    sizes[n_steps - 1] = last;

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut scratch = vec![Complex64::ZERO; fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];

    let w_sq: Vec<f64> = (0..n)
        .map(|k| {
            let w = 2.0 * std::f64::consts::PI * bin_freq_hz(k, n, fs);
            w * w
        })
        .collect();
    let inv_n = 1.0 / n as f64;

    let mut ux = x.x.samples().to_vec();
    let mut uy = x.y.samples().to_vec();

    // symmetric scheme with merged half steps:
    // D(h1/2) N(h1) D((h1+h2)/2) N(h2) ... N(hm) D(hm/2)
    let linear = |ux: &mut Vec<Complex64>, uy: &mut Vec<Complex64>, len_m: f64, scratch: &mut Vec<Complex64>| {
        for u in [&mut *ux, &mut *uy] {
            fwd.process_with_scratch(u, scratch);
            for (v, &wsq) in u.iter_mut().zip(&w_sq) {
                let phase = -0.5 * beta2 * wsq * len_m;
                *v *= Complex64::from_polar((-alpha * len_m).exp() * inv_n, phase);
            }
            inv.process_with_scratch(u, scratch);
        }
    };

    linear(&mut ux, &mut uy, sizes[0] / 2.0, &mut scratch);
    for i in 0..n_steps {
        let h = sizes[i];
        for j in 0..n {
            let p = ux[j].norm_sqr() + uy[j].norm_sqr();
            let kick = Complex64::from_polar(1.0, -(8.0 / 9.0) * gamma_m * p * h);
            ux[j] *= kick;
            uy[j] *= kick;
        }
        let lin_len = if i + 1 < n_steps {
            (sizes[i] + sizes[i + 1]) / 2.0
        } else {
            sizes[i] / 2.0
        };
        linear(&mut ux, &mut uy, lin_len, &mut scratch);
    }

    DualPolSignal {
        x: ComplexSignal {
            samples: ux,
            sample_rate_hz: fs,
            center_freq_hz: x.x.center_freq_hz(),
        },
        y: ComplexSignal {
            samples: uy,
            sample_rate_hz: fs,
            center_freq_hz: x.y.center_freq_hz(),
        },
    }
}

/// Symmetric split-step solution of the Manakov equation over one span:
/// chromatic dispersion plus loss in the linear half-steps, a common
/// (8/9) gamma (|Ax|^2 + |Ay|^2) Kerr phase rotation on both polarizations
/// in the nonlinear step.
pub fn propagate_manakov(
    x: &DualPolSignal,
    span: &FiberSpanParams,
    step: &StepConfig,
) -> Result<DualPolSignal> {
    let step_m = step.step_km * 1e3;
    if !(step_m > 0.0) {
        return Err(Error::Config("split-step size must be positive".into()));
    }
    let coarse = ssfm_once(x, span, step_m);
    if step.check_convergence {
        let fine = ssfm_once(x, span, step_m / 2.0);
        let mut err = 0.0;
        let mut norm = 0.0;
        for (a, b) in coarse
            .x
            .samples()
            .iter()
            .chain(coarse.y.samples())
            .zip(fine.x.samples().iter().chain(fine.y.samples()))
        {
            err += (a - b).norm_sqr();
            norm += b.norm_sqr();
        }
        let delta = (err / norm).sqrt();
        if delta > step.tol {
            return Err(Error::Convergence {
                delta,
                tol: step.tol,
            });
        }
        return Ok(fine);
    }
    Ok(coarse)
}

/// ASE power spectral density per polarization in W/Hz for an amplifier of
/// the given gain and noise figure: `(G - 1) n_sp h nu`, `n_sp = 10^(NF/10)/2`.
pub fn ase_psd_w_per_hz(gain_db: f64, nf_db: f64) -> f64 {
    let g = 10f64.powf(gain_db / 10.0);
    let n_sp = 10f64.powf(nf_db / 10.0) / 2.0;
    let nu = SPEED_OF_LIGHT_M_S / (REFERENCE_WAVELENGTH_NM * 1e-9);
    (g - 1.0) * n_sp * PLANCK_J_S * nu
}

fn add_white_noise(x: &ComplexSignal, total_power_w: f64, rng: &mut ChaCha8Rng) -> ComplexSignal {
    if total_power_w <= 0.0 {
        return x.clone();
    }
    let sigma = (total_power_w / 2.0).sqrt();
    let dist = Normal::new(0.0, sigma).unwrap();
    let samples = x
        .samples()
        .iter()
        .map(|s| s + Complex64::new(dist.sample(rng), dist.sample(rng)))
        .collect();
    ComplexSignal {
        samples,
        sample_rate_hz: x.sample_rate_hz(),
        center_freq_hz: x.center_freq_hz(),
    }
}

/// Flat-gain amplifier with ASE: field times sqrt(G) plus circular-Gaussian
/// white noise of PSD `(G-1) n_sp h nu` per polarization.
pub fn amplify(x: &ComplexSignal, gain_db: f64, nf_db: f64, seed: u64) -> Result<ComplexSignal> {
    if gain_db < 0.0 {
        return Err(Error::Config(format!(
            "amplifier gain must be >= 0 dB, got {gain_db}"
        )));
    }
    let g = 10f64.powf(gain_db / 10.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scaled = ComplexSignal {
        samples: x.samples().iter().map(|s| s * g).collect(),
        sample_rate_hz: x.sample_rate_hz(),
        center_freq_hz: x.center_freq_hz(),
    };
    let total = ase_psd_w_per_hz(gain_db, nf_db) * x.sample_rate_hz();
    Ok(add_white_noise(&scaled, total, &mut rng))
}

pub fn amplify_dual(
    x: &DualPolSignal,
    gain_db: f64,
    nf_db: f64,
    seed: u64,
) -> Result<DualPolSignal> {
    DualPolSignal::new(
        amplify(&x.x, gain_db, nf_db, crate::experiment::mix_seed(seed, 0))?,
        amplify(&x.y, gain_db, nf_db, crate::experiment::mix_seed(seed, 1))?,
    )
}

/// Noise-loading specification.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub osnr_db: f64,
    /// OSNR reference bandwidth; 12.5 GHz is 0.1 nm at 1550 nm.
    pub ref_bw_hz: f64,
    /// OSNR_eq semantics: the signal power handed in excludes any bias/CW
    /// component. Informational; the caller picks `p_signal_w` accordingly.
    pub exclude_bias: bool,
}

impl NoiseSpec {
    pub fn target_osnr(osnr_db: f64) -> Self {
        Self {
            osnr_db,
            ref_bw_hz: 12.5e9,
            exclude_bias: true,
        }
    }

    /// White-noise power spectral density that realizes the target OSNR for
    /// the given signal power (summed over polarizations).
    pub fn density_w_per_hz(&self, p_signal_w: f64) -> f64 {
        p_signal_w / (10f64.powf(self.osnr_db / 10.0) * self.ref_bw_hz)
    }
}

/// Loads white circular-Gaussian noise so the output OSNR against
/// `p_signal_w` equals the target. Scalar fields carry all of the noise.
pub fn load_noise_to_osnr(
    x: &ComplexSignal,
    spec: &NoiseSpec,
    p_signal_w: f64,
    seed: u64,
) -> Result<ComplexSignal> {
    if !(p_signal_w > 0.0) {
        return Err(Error::Config(format!(
            "signal power must be positive, got {p_signal_w}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = spec.density_w_per_hz(p_signal_w) * x.sample_rate_hz();
    Ok(add_white_noise(x, total, &mut rng))
}

/// Dual-polarization noise loading; the noise power splits equally between
/// the polarizations.
pub fn load_noise_to_osnr_dual(
    x: &DualPolSignal,
    spec: &NoiseSpec,
    p_signal_w: f64,
    seed: u64,
) -> Result<DualPolSignal> {
    if !(p_signal_w > 0.0) {
        return Err(Error::Config(format!(
            "signal power must be positive, got {p_signal_w}"
        )));
    }
    let total = spec.density_w_per_hz(p_signal_w) * x.sample_rate_hz();
    let mut rng_x = ChaCha8Rng::seed_from_u64(crate::experiment::mix_seed(seed, 0));
    let mut rng_y = ChaCha8Rng::seed_from_u64(crate::experiment::mix_seed(seed, 1));
    DualPolSignal::new(
        add_white_noise(&x.x, total / 2.0, &mut rng_x),
        add_white_noise(&x.y, total / 2.0, &mut rng_y),
    )
}

/// Frequency-independent 2x2 Jones matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub [[Complex64; 2]; 2]);

impl JonesMatrix {
    pub fn identity() -> Self {
        Self([
            [Complex64::new(1.0, 0.0), Complex64::ZERO],
            [Complex64::ZERO, Complex64::new(1.0, 0.0)],
        ])
    }

    pub fn dagger(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn mul(&self, other: &JonesMatrix) -> Self {
        let a = &self.0;
        let b = &other.0;
        let mut out = [[Complex64::ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self(out)
    }

    pub fn inverse(&self) -> Option<Self> {
        let m = &self.0;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.norm() < 1e-300 {
            return None;
        }
        Some(Self([
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ]))
    }

    /// Applies the matrix jointly to the two polarizations.
    pub fn apply(&self, x: &DualPolSignal) -> DualPolSignal {
        let m = &self.0;
        let (mut ax, mut ay) = (
            Vec::with_capacity(x.len()),
            Vec::with_capacity(x.len()),
        );
        for (sx, sy) in x.x.samples().iter().zip(x.y.samples()) {
            ax.push(m[0][0] * sx + m[0][1] * sy);
            ay.push(m[1][0] * sx + m[1][1] * sy);
        }
        DualPolSignal {
            x: ComplexSignal {
                samples: ax,
                sample_rate_hz: x.sample_rate_hz(),
                center_freq_hz: x.x.center_freq_hz(),
            },
            y: ComplexSignal {
                samples: ay,
                sample_rate_hz: x.sample_rate_hz(),
                center_freq_hz: x.y.center_freq_hz(),
            },
        }
    }

    /// Haar-random unitary: uniform SU(2) via a unit quaternion plus a
    /// uniform global phase.
    pub fn haar_random(rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let q: Vec<f64> = (0..4).map(|_| normal.sample(rng)).collect();
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (a, b, c, d) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
        let phase = Complex64::from_polar(
            1.0,
            rand::Rng::random_range(&mut *rng, 0.0..2.0 * std::f64::consts::PI),
        );
        Self([
            [
                phase * Complex64::new(a, b),
                phase * Complex64::new(c, d),
            ],
            [
                phase * Complex64::new(-c, d),
                phase * Complex64::new(a, -b),
            ],
        ])
    }
}

/// Applies a Haar-random frequency-independent polarization rotation and
/// returns the matrix for diagnostics. Total power is preserved.
pub fn random_pol_rotation(x: &DualPolSignal, seed: u64) -> (DualPolSignal, JonesMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = JonesMatrix::haar_random(&mut rng);
    (u.apply(x), u)
}

/// Splits a field into (lower-sideband branch, upper-sideband branch) with
/// two complementary-centered filters.
pub fn deinterleave(
    x: &ComplexSignal,
    lower: &FilterSpec,
    upper: &FilterSpec,
) -> (ComplexSignal, ComplexSignal) {
    (apply_filter(x, lower), apply_filter(x, upper))
}

pub fn deinterleave_dual(
    x: &DualPolSignal,
    lower: &FilterSpec,
    upper: &FilterSpec,
) -> (DualPolSignal, DualPolSignal) {
    let (lx, ux) = deinterleave(&x.x, lower, upper);
    let (ly, uy) = deinterleave(&x.y, lower, upper);
    (
        DualPolSignal { x: lx, y: ly },
        DualPolSignal { x: ux, y: uy },
    )
}
