//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by signal operations, channel models, receivers and the
/// experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("operation requires a real-valued signal (max |imag| = {max_imag:.3e})")]
    NotReal { max_imag: f64 },

    #[error("signal grids do not match: {0}")]
    GridMismatch(String),

    #[error("frequency shift of {shift_hz} Hz exceeds representable band (rate {rate_hz} Hz)")]
    ShiftOutOfBand { shift_hz: f64, rate_hz: f64 },

    #[error("resampling would discard {fraction:.3e} of signal energy (limit {limit:.1e})")]
    Aliasing { fraction: f64, limit: f64 },

    #[error("resample factor {p}/{q} on {n} samples does not give an even integer length")]
    BadResampleFactor { p: u64, q: u64, n: usize },

    #[error("sample rates are incommensurate: {0}")]
    IncommensurateRates(String),

    #[error("degenerate trajectory: sample magnitude {min:.3e} below {threshold:.3e}")]
    DegenerateTrajectory { min: f64, threshold: f64 },

    #[error("empty or invalid frequency band [{lo} Hz, {hi} Hz]")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("modulation order {0} is not a power of two")]
    BadModulationOrder(usize),

    #[error("composite band exceeds Nyquist range: {0}")]
    NyquistOverflow(String),

    #[error("split-step did not converge: halved step changes output RMS by {delta:.3e} (tol {tol:.1e})")]
    Convergence { delta: f64, tol: f64 },

    #[error("no DC pilot present: |mean| = {mean_abs:.3e}, rms = {rms:.3e}")]
    NoPilot { mean_abs: f64, rms: f64 },

    #[error("polarization demux estimate is ill-conditioned (cond = {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by an invalid scenario/config rather than by a
    /// runtime failure. The CLI maps these to exit code 1, others to 2.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::BadModulationOrder(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
