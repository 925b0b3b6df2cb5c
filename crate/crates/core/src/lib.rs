//! End-to-end simulation toolkit for Kramers-Kronig (KK) optical
//! transceivers.
//!
//! The crate is organized around four layers:
//!
//! * [`signal`] — FFT-grid waveforms and foundational DSP (Hilbert/analytic
//!   transforms, resampling, super-Gaussian filtering, power measurement).
//! * [`txmodem`] — symbol generation, raised-cosine shaping and optical-field
//!   construction for the KK-PAM single-sideband scheme and the two-sided
//!   polarization-multiplexed scheme, plus WDM assembly.
//! * [`channel`] — fiber and amplifier physics: chromatic dispersion,
//!   split-step Manakov propagation, ASE noise loading and polarization
//!   rotation.
//! * [`receiver`] — square-law detection, KK phase retrieval, dispersion
//!   compensation, polarization demux, symbol decision and BER oracles.
//!
//! [`experiment`] ties everything into declarative, seeded sweep scenarios
//! with CSV/manifest emission; the `kktx` binary is a thin wrapper over it.

pub mod channel;
pub mod error;
pub mod experiment;
pub mod receiver;
pub mod selftest;
pub mod signal;
pub mod txmodem;

pub use error::{Error, Result};
pub use signal::{ComplexSignal, DualPolSignal, FilterSpec};
pub use txmodem::{PulseShape, SymbolFrame, TxConfig};
pub use channel::{FiberSpanParams, NoiseSpec};
pub use receiver::{BerReport, KkConfig};
pub use experiment::{LinkScenario, SweepResult};
