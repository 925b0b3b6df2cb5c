//! Symbol generation and optical-field construction.
//!
//! Two transmitter schemes are built here: a biased single-sideband PAM
//! field (bias + analytic signal of the shaped lane) and a two-sided field
//! in which two independent real lanes are split spectrally around a guard
//! band and each contributes one sideband through an interleaver filter.
//! Pulse shaping is raised-cosine, realized exactly in the frequency domain
//! on the cyclic frame, so symbol placement wraps around and the shaped
//! spectrum has strictly compact support.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{
    analytic, apply_filter, bin_freq_hz, fft, ifft, snap_to_bin, ComplexSignal, DualPolSignal,
    FilterSpec,
};

/// Gray code of a level rank.
pub fn gray_encode(rank: usize) -> usize {
    rank ^ (rank >> 1)
}

/// Zero-mean, unit-mean-power amplitude levels for M-ary ASK/PAM,
/// `{-(M-1), ..., -1, +1, ..., +(M-1)} / sqrt(mean square)`.
pub fn pam_levels(m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|r| (2 * r) as f64 - (m - 1) as f64).collect();
    let ms = raw.iter().map(|v| v * v).sum::<f64>() / m as f64;
    let scale = ms.sqrt();
    raw.into_iter().map(|v| v / scale).collect()
}

/// Gray-coded data frame: bits, level ranks and the normalized level set.
#[derive(Debug, Clone)]
pub struct SymbolFrame {
    pub bits: Vec<u8>,
    pub symbols: Vec<usize>,
    pub levels: Vec<f64>,
    pub order_m: usize,
}

impl SymbolFrame {
    pub fn bits_per_symbol(&self) -> usize {
        self.order_m.trailing_zeros() as usize
    }

    /// Amplitude of symbol `k`.
    pub fn amplitude(&self, k: usize) -> f64 {
        self.levels[self.symbols[k]]
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.symbols.iter().map(|&s| self.levels[s]).collect()
    }

    /// Empirical mean power of the symbol amplitudes.
    pub fn mean_power(&self) -> f64 {
        self.symbols
            .iter()
            .map(|&s| self.levels[s] * self.levels[s])
            .sum::<f64>()
            / self.symbols.len() as f64
    }
}

/// Gray-coded bit expansion of a rank sequence, MSB first per symbol.
pub fn gray_bits(symbols: &[usize], m: usize) -> Vec<u8> {
    let bits_per_symbol = m.trailing_zeros() as usize;
    let mut bits = Vec::with_capacity(symbols.len() * bits_per_symbol);
    for &rank in symbols {
        let code = gray_encode(rank);
        for b in (0..bits_per_symbol).rev() {
            bits.push(((code >> b) & 1) as u8);
        }
    }
    bits
}

/// Deterministic pseudo-random Gray-coded frame.
pub fn make_frame(n_symbols: usize, m: usize, seed: u64) -> Result<SymbolFrame> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::BadModulationOrder(m));
    }
    if n_symbols == 0 {
        return Err(Error::Config("frame must contain at least one symbol".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let symbols: Vec<usize> = (0..n_symbols).map(|_| rng.random_range(0..m)).collect();
    Ok(SymbolFrame {
        bits: gray_bits(&symbols, m),
        symbols,
        levels: pam_levels(m),
        order_m: m,
    })
}

/// Raised-cosine fundamental waveform parameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PulseShape {
    pub rolloff: f64,
    pub symbol_rate_hz: f64,
}

impl PulseShape {
    pub fn new(rolloff: f64, symbol_rate_hz: f64) -> Self {
        Self {
            rolloff,
            symbol_rate_hz,
        }
    }

    /// Raised-cosine spectrum (peak 1), zero outside
    /// `|f| <= (1 + rolloff) * symbol_rate / 2`.
    pub fn spectrum(&self, f_hz: f64) -> f64 {
        let rs = self.symbol_rate_hz;
        let b = self.rolloff;
        let af = f_hz.abs();
        let f1 = (1.0 - b) * rs / 2.0;
        let f2 = (1.0 + b) * rs / 2.0;
        if af <= f1 {
            1.0
        } else if af < f2 {
            let arg = std::f64::consts::PI * (af - f1) / (b * rs);
            (0.5 * arg).cos().powi(2)
        } else {
            0.0
        }
    }

    /// Full occupied (two-sided) bandwidth `(1 + rolloff) * symbol_rate`.
    pub fn occupied_bw_hz(&self) -> f64 {
        (1.0 + self.rolloff) * self.symbol_rate_hz
    }
}

fn integer_sps(pulse: &PulseShape, sample_rate_hz: f64) -> Result<usize> {
    if sample_rate_hz < pulse.occupied_bw_hz() {
        return Err(Error::NyquistOverflow(format!(
            "sample rate {sample_rate_hz} Hz below occupied bandwidth {} Hz",
            pulse.occupied_bw_hz()
        )));
    }
    let sps = sample_rate_hz / pulse.symbol_rate_hz;
    if (sps - sps.round()).abs() > 1e-9 || sps.round() < 1.0 {
        return Err(Error::IncommensurateRates(format!(
            "sample rate {sample_rate_hz} Hz is not an integer multiple of {} baud",
            pulse.symbol_rate_hz
        )));
    }
    Ok(sps.round() as usize)
}

/// Cyclic raised-cosine shaping of complex symbol impulses.
///
/// The pulse energy is scaled so a unit-mean-power symbol stream produces a
/// unit-mean-power waveform.
pub fn shape_impulses(
    amplitudes: &[Complex64],
    pulse: &PulseShape,
    sample_rate_hz: f64,
) -> Result<ComplexSignal> {
    let sps = integer_sps(pulse, sample_rate_hz)?;
    let n = amplitudes.len() * sps;
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidSignal(format!(
            "shaped frame length {n} must be even and >= 2"
        )));
    }
    let mut impulses = vec![Complex64::ZERO; n];
    for (k, a) in amplitudes.iter().enumerate() {
        impulses[k * sps] = *a;
    }
    let mut spec = fft(&impulses);
    // sample the closed-form spectrum on the grid; then normalize so that the
    // cyclic pulse has unit energy per symbol period (unit mean output power)
    let g: Vec<f64> = (0..n)
        .map(|k| pulse.spectrum(bin_freq_hz(k, n, sample_rate_hz)))
        .collect();
    // train power is E[a^2] * sum_m g[m]^2 / sps; scale the pulse so that
    // sum is sps (Parseval: sum_m g[m]^2 = (1/n) sum_k G[k]^2)
    let sum_g_sq_time = g.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let pulse_scale = (sps as f64 / sum_g_sq_time).sqrt();
    for (k, v) in spec.iter_mut().enumerate() {
        *v *= g[k] * pulse_scale;
    }
    let samples = ifft(&spec);
    ComplexSignal::new(samples, sample_rate_hz, 0.0)
}

/// Shapes a real PAM frame onto the sample grid.
pub fn shape(
    frame: &SymbolFrame,
    pulse: &PulseShape,
    sample_rate_hz: f64,
) -> Result<ComplexSignal> {
    let amps: Vec<Complex64> = frame
        .amplitudes()
        .into_iter()
        .map(|a| Complex64::new(a, 0.0))
        .collect();
    let mut out = shape_impulses(&amps, pulse, sample_rate_hz)?;
    for v in &mut out.samples {
        v.im = 0.0;
    }
    Ok(out)
}

/// Transmitter scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxScheme {
    KkPamSsb,
    TwoSided,
}

/// Transmitter configuration for both schemes.
#[derive(Debug, Clone)]
pub struct TxConfig {
    pub scheme: TxScheme,
    /// Bias (KK-PAM) or LO (two-sided, receiver-applied) power relative to
    /// the zero-mean signal power it protects.
    pub bias_power_ratio: f64,
    /// Guard band around the grid center for the two-sided scheme.
    pub gap_hz: f64,
    pub grid_spacing_hz: f64,
    pub interleaver: Option<FilterSpec>,
    pub interleaver_offset_hz: f64,
}

impl TxConfig {
    pub fn kkpam(bias_power_ratio: f64) -> Self {
        Self {
            scheme: TxScheme::KkPamSsb,
            bias_power_ratio,
            gap_hz: 0.0,
            grid_spacing_hz: 0.0,
            interleaver: None,
            interleaver_offset_hz: 0.0,
        }
    }

    pub fn two_sided(
        gap_hz: f64,
        grid_spacing_hz: f64,
        interleaver: FilterSpec,
        interleaver_offset_hz: f64,
    ) -> Self {
        Self {
            scheme: TxScheme::TwoSided,
            bias_power_ratio: 0.0,
            gap_hz,
            grid_spacing_hz,
            interleaver: Some(interleaver),
            interleaver_offset_hz,
        }
    }
}

/// Biased SSB PAM field: `A + (shape + i H{shape})` with
/// `A^2 = bias_power_ratio * P_s` measured on the constructed frame.
pub fn build_kkpam(
    frame: &SymbolFrame,
    pulse: &PulseShape,
    cfg: &TxConfig,
    sample_rate_hz: f64,
) -> Result<ComplexSignal> {
    debug_assert_eq!(cfg.scheme, TxScheme::KkPamSsb);
    if cfg.bias_power_ratio <= 0.0 {
        return Err(Error::Config("bias power ratio must be positive".into()));
    }
    let lane = shape(frame, pulse, sample_rate_hz)?;
    let ssb = analytic(&lane)?;
    // fold out the frame's finite-length DC residue so that the field's DC
    // is the bias alone and the bias-to-signal power ratio is exact
    let dc = ssb.mean();
    let p_s = ssb.samples().iter().map(|s| (s - dc).norm_sqr()).sum::<f64>() / ssb.len() as f64;
    let bias = (cfg.bias_power_ratio * p_s).sqrt();
    let samples = ssb.samples().iter().map(|s| s - dc + bias).collect();
    ComplexSignal::new(samples, sample_rate_hz, 0.0)
}

/// Which spectral half of a two-sided signal to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sideband {
    Upper,
    Lower,
}

/// Moves the positive spectral half of a real signal up by `gap_hz / 2` and
/// the negative half down by the same amount (bin-snapped, so the frame
/// stays cyclic). DC and Nyquist bins stay in place. Output is real.
pub fn split_about_gap(x: &ComplexSignal, gap_hz: f64) -> Result<ComplexSignal> {
    x.require_real()?;
    let n = x.len();
    let bin = x.bin_hz();
    let s = (snap_to_bin(gap_hz / 2.0, bin) / bin).round() as usize;
    if s == 0 {
        return Ok(x.clone());
    }
    let spec = fft(x.samples());
    let mut out = vec![Complex64::ZERO; n];
    out[0] = spec[0];
    out[n / 2] = spec[n / 2];
    let mut dropped = 0.0;
    for k in 1..n / 2 {
        let k2 = k + s;
        if k2 < n / 2 {
            out[k2] = spec[k];
        } else {
            dropped += spec[k].norm_sqr();
        }
    }
    for k in n / 2 + 1..n {
        if k >= n / 2 + 1 + s {
            out[k - s] = spec[k];
        } else {
            dropped += spec[k].norm_sqr();
        }
    }
    let total: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
    if total > 0.0 && dropped / total > 1e-12 {
        return Err(Error::NyquistOverflow(format!(
            "guard-band split pushes {:.3e} of the energy past Nyquist",
            dropped / total
        )));
    }
    let mut samples = ifft(&out);
    for v in &mut samples {
        v.im = 0.0;
    }
    ComplexSignal::new(samples, x.sample_rate_hz(), x.center_freq_hz())
}

/// Keeps one spectral half. DC and Nyquist bins are split half-half between
/// the sidebands so that `upper + lower` reproduces the input exactly.
pub fn take_sideband(x: &ComplexSignal, side: Sideband) -> ComplexSignal {
    let n = x.len();
    let mut spec = fft(x.samples());
    spec[0] *= 0.5;
    spec[n / 2] *= 0.5;
    match side {
        Sideband::Upper => {
            for v in spec.iter_mut().take(n).skip(n / 2 + 1) {
                *v = Complex64::ZERO;
            }
        }
        Sideband::Lower => {
            for v in spec.iter_mut().take(n / 2).skip(1) {
                *v = Complex64::ZERO;
            }
        }
    }
    ComplexSignal {
        samples: ifft(&spec),
        sample_rate_hz: x.sample_rate_hz(),
        center_freq_hz: x.center_freq_hz(),
    }
}

/// Two-sided transmitter: the upper sideband carries `frame_hi`, the lower
/// carries `frame_lo`, separated by the configured guard band and shaped by
/// the interleaver filters. No carrier is added (the LO lives at the
/// receiver).
pub fn build_two_sided(
    frame_lo: &SymbolFrame,
    frame_hi: &SymbolFrame,
    pulse: &PulseShape,
    cfg: &TxConfig,
    sample_rate_hz: f64,
) -> Result<ComplexSignal> {
    debug_assert_eq!(cfg.scheme, TxScheme::TwoSided);
    let occupied = pulse.occupied_bw_hz() + cfg.gap_hz;
    if occupied > sample_rate_hz {
        return Err(Error::NyquistOverflow(format!(
            "two-sided band {occupied} Hz exceeds sample rate {sample_rate_hz} Hz"
        )));
    }
    let r_lo = shape(frame_lo, pulse, sample_rate_hz)?;
    let r_hi = shape(frame_hi, pulse, sample_rate_hz)?;
    let upper = take_sideband(&split_about_gap(&r_hi, cfg.gap_hz)?, Sideband::Upper);
    let lower = take_sideband(&split_about_gap(&r_lo, cfg.gap_hz)?, Sideband::Lower);
    let (upper, lower) = match &cfg.interleaver {
        Some(filter) => (
            apply_filter(&upper, &filter.centered_at(cfg.interleaver_offset_hz)),
            apply_filter(&lower, &filter.centered_at(-cfg.interleaver_offset_hz)),
        ),
        None => (upper, lower),
    };
    let samples = upper
        .samples()
        .iter()
        .zip(lower.samples())
        .map(|(a, b)| a + b)
        .collect();
    ComplexSignal::new(samples, sample_rate_hz, 0.0)
}

/// Wraps two polarization tributaries into one dual-polarization field.
pub fn polmux(x_field: ComplexSignal, y_field: ComplexSignal) -> Result<DualPolSignal> {
    DualPolSignal::new(x_field, y_field)
}

/// Places channel `k` of `N` at center `(k - (N-1)/2) * spacing` (bin-snapped)
/// and sums. Per-channel power is preserved before any spectral overlap.
pub fn wdm_mux(channels: &[DualPolSignal], spacing_hz: f64) -> Result<DualPolSignal> {
    if channels.is_empty() {
        return Err(Error::Config("wdm_mux needs at least one channel".into()));
    }
    let n_ch = channels.len();
    let fs = channels[0].sample_rate_hz();
    if n_ch as f64 * spacing_hz > fs {
        return Err(Error::NyquistOverflow(format!(
            "{n_ch} channels at {spacing_hz} Hz spacing exceed the {fs} Hz grid"
        )));
    }
    for c in channels {
        channels[0].x.same_grid(&c.x)?;
    }
    let bin = channels[0].x.bin_hz();
    let mut acc_x = vec![Complex64::ZERO; channels[0].len()];
    let mut acc_y = acc_x.clone();
    for (k, ch) in channels.iter().enumerate() {
        let df = snap_to_bin((k as f64 - (n_ch as f64 - 1.0) / 2.0) * spacing_hz, bin);
        let sx = crate::signal::frequency_shift(&ch.x, df)?;
        let sy = crate::signal::frequency_shift(&ch.y, df)?;
        for (a, b) in acc_x.iter_mut().zip(sx.samples()) {
            *a += b;
        }
        for (a, b) in acc_y.iter_mut().zip(sy.samples()) {
            *a += b;
        }
    }
    DualPolSignal::new(
        ComplexSignal::new(acc_x, fs, channels[0].x.center_freq_hz())?,
        ComplexSignal::new(acc_y, fs, channels[0].x.center_freq_hz())?,
    )
}
