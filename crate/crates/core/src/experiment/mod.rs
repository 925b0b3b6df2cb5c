//! Declarative scenarios, seeded parallel sweeps and result emission.

mod emit;
mod runner;
mod scenario;

pub use emit::{emit_results, render_csv, render_manifest, render_theory_csv, write_manifest, EmittedPaths, CSV_HEADER};
pub use runner::{run_scenario, spectral_accounting, SpectralAccounting};
pub use scenario::{
    CdCompensation, InterleaverParams, LinkScenario, NoiseMode, NoiseParams, RxParams, Scheme,
    SsfmParams, ValidationReport,
};

/// Stable 64-bit mix used to derive per-job seeds from `(base_seed, indices)`.
/// splitmix64 finalizer; never depends on hasher internals, so seeds are
/// reproducible across builds and platforms.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Chains several salts into one seed.
pub fn mix_seeds(base: u64, salts: &[u64]) -> u64 {
    salts.iter().fold(base, |acc, &s| mix_seed(acc, s))
}

/// One aggregated CSV row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_name: &'static str,
    pub axis_value: f64,
    pub ratio: f64,
    pub scheme_label: String,
    pub sideband: &'static str,
    pub polarization: &'static str,
    pub n_bits: u64,
    pub n_errors: u64,
    pub ber: f64,
    pub min_phase_violations: u64,
    pub clip_count: u64,
    pub seed_base: u64,
}

/// Analytic reference point emitted alongside OSNR sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryPoint {
    pub axis_value: f64,
    pub ber: f64,
}

/// Result of one scenario sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub scenario: LinkScenario,
    pub axis_name: &'static str,
    pub rows: Vec<SweepRow>,
    pub theory: Vec<TheoryPoint>,
    pub wall_time_s: f64,
}
