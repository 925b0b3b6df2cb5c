//! Scenario description, TOML parsing, overrides and validation.

use serde::{Deserialize, Serialize};

use crate::channel::FiberSpanParams;
use crate::error::{Error, Result};
use crate::signal::FilterSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    KkpamSsb,
    TwoSidedPolmux,
    CoherentQam16,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::KkpamSsb => "kkpam-ssb",
            Scheme::TwoSidedPolmux => "two-sided-polmux",
            Scheme::CoherentQam16 => "coherent-qam16",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdCompensation {
    Optical,
    Digital,
    /// Run both variants and report them as separate curves.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Load white noise directly to the target OSNR at the receiver input.
    TargetOsnr,
    /// Attenuate by the per-span loss and re-amplify with the configured
    /// noise figure, accumulating ASE span by span.
    AmplifierChain,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RxParams {
    pub adc_rate_hz: f64,
    pub upsample_factor: u32,
    pub log_floor_rel: f64,
    /// Receiver optical noise filter (KK-PAM scheme).
    pub filter: FilterSpec,
}

impl Default for RxParams {
    fn default() -> Self {
        Self {
            // two samples per symbol at 48 GBd; the nominal rate-B sampling
            // cannot carry the signal-noise beat products passed by the
            // out-of-band noise filter and leaves a reconstruction floor
            adc_rate_hz: 96e9,
            upsample_factor: 3,
            log_floor_rel: 1e-12,
            // 12th-order super-Gaussian centered at +16 GHz. The nominal
            // "26 GHz 3-dB bandwidth" read as a full width would block the
            // CW bias at 0 Hz entirely (|H(0)|^2 ~ 1e-44), and the half-width
            // reading (52 GHz full) passes ~10 GHz of image-band noise that
            // costs ~1.4 dB against the coherent reference. The working
            // default is a 36 GHz full width: the passband (-2..34 GHz)
            // carries the bias (-0.2 dB) and the whole 25.2 GHz sideband
            // while rejecting the image band, which is what makes the
            // receiver coherent-equivalent. `validate` reports the bias
            // transmissivity of whatever is configured.
            filter: FilterSpec::super_gaussian(12, 16e9, 36e9),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct InterleaverParams {
    pub filter: FilterSpec,
    /// Interleaver grid offset from the WDM grid.
    pub offset_hz: f64,
}

impl Default for InterleaverParams {
    fn default() -> Self {
        Self {
            filter: FilterSpec::super_gaussian(4, 0.0, 36e9),
            offset_hz: 18.8e9,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub mode: NoiseMode,
    pub ref_bw_hz: f64,
    pub nf_db: f64,
    pub loss_budget_db: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            mode: NoiseMode::TargetOsnr,
            ref_bw_hz: 12.5e9,
            nf_db: 5.0,
            loss_budget_db: 26.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SsfmParams {
    pub step_km: f64,
    pub check_convergence: bool,
    pub tol: f64,
}

impl Default for SsfmParams {
    fn default() -> Self {
        Self {
            step_km: 0.5,
            check_convergence: false,
            tol: 1e-4,
        }
    }
}

fn default_spans() -> Vec<FiberSpanParams> {
    vec![FiberSpanParams::default()]
}

fn default_ratio() -> Vec<f64> {
    vec![1.0]
}

fn one() -> usize {
    1
}

fn default_runs() -> usize {
    10
}

fn default_symbols() -> usize {
    1 << 15
}

fn default_sps() -> usize {
    16
}

fn default_m() -> usize {
    4
}

fn default_seed() -> u64 {
    1
}

fn default_training() -> usize {
    256
}

fn default_launch() -> f64 {
    3.0
}

fn default_baud() -> f64 {
    48e9
}

fn default_rolloff() -> f64 {
    0.05
}

/// Declarative description of one experiment sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkScenario {
    pub name: String,
    pub scheme: Scheme,
    #[serde(default = "default_baud")]
    pub baud_hz: f64,
    #[serde(default = "default_rolloff")]
    pub rolloff: f64,
    #[serde(default = "default_symbols")]
    pub n_symbols: usize,
    #[serde(default = "default_sps")]
    pub samples_per_symbol: usize,
    #[serde(default = "default_m")]
    pub modulation_order: usize,
    /// Bias (KK-PAM) or LO (two-sided) power as a multiple of the zero-mean
    /// signal power it protects. One curve per entry.
    #[serde(default = "default_ratio")]
    pub bias_or_lo_ratio: Vec<f64>,
    #[serde(default)]
    pub osnr_sweep_db: Vec<f64>,
    #[serde(default)]
    pub cd_sweep_ps_nm: Vec<f64>,
    /// OSNR used on a CD sweep.
    #[serde(default)]
    pub fixed_osnr_db: Option<f64>,
    #[serde(default = "default_spans")]
    pub spans: Vec<FiberSpanParams>,
    #[serde(default = "one")]
    pub n_wdm: usize,
    #[serde(default)]
    pub spacing_hz: f64,
    #[serde(default)]
    pub gap_hz: f64,
    #[serde(default)]
    pub nonlinear: bool,
    #[serde(default = "default_launch")]
    pub launch_dbm: f64,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default = "default_training")]
    pub training_symbols: usize,
    #[serde(default)]
    pub cd_compensation: Option<CdCompensation>,
    #[serde(default)]
    pub rx: RxParams,
    #[serde(default)]
    pub interleaver: InterleaverParams,
    #[serde(default)]
    pub noise: NoiseParams,
    #[serde(default)]
    pub ssfm: SsfmParams,
}

/// Informational lines produced by validation, printed by `kktx validate`.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub lines: Vec<String>,
}

impl LinkScenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario parse error: {e}")))
    }

    pub fn from_toml_str_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("scenario parse error: {e}")))?;
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let text = toml::to_string(&table)
            .map_err(|e| Error::Config(format!("override serialization error: {e}")))?;
        Self::from_toml_str(&text)
    }

    pub fn sim_rate_hz(&self) -> f64 {
        self.baud_hz * self.samples_per_symbol as f64
    }

    /// Accumulated link dispersion in ps/nm.
    pub fn total_cd_ps_nm(&self) -> f64 {
        self.spans.iter().map(|s| s.total_ps_nm()).sum()
    }

    pub fn pulse(&self) -> crate::txmodem::PulseShape {
        crate::txmodem::PulseShape::new(self.rolloff, self.baud_hz)
    }

    /// The swept axis: name and values.
    pub fn axis(&self) -> Result<(&'static str, Vec<f64>)> {
        match (self.osnr_sweep_db.is_empty(), self.cd_sweep_ps_nm.is_empty()) {
            (false, true) => Ok(("osnr_db", self.osnr_sweep_db.clone())),
            (true, false) => Ok(("cd_ps_nm", self.cd_sweep_ps_nm.clone())),
            (true, true) => Err(Error::Config(
                "scenario must define one sweep axis (osnr_sweep_db or cd_sweep_ps_nm)".into(),
            )),
            (false, false) => Err(Error::Config(
                "exactly one of osnr_sweep_db / cd_sweep_ps_nm may be set".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        let mut report = ValidationReport::default();
        let fail = |msg: String| Err(Error::Config(msg));

        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return fail(format!(
                "scenario name '{}' must be non-empty [A-Za-z0-9_-]",
                self.name
            ));
        }
        if !self.modulation_order.is_power_of_two() || self.modulation_order < 2 {
            return fail(format!(
                "modulation order {} must be a power of two",
                self.modulation_order
            ));
        }
        if self.n_runs < 1 {
            return fail("n_runs must be >= 1".into());
        }
        if self.n_symbols < 2 {
            return fail("n_symbols must be >= 2".into());
        }
        if self.bias_or_lo_ratio.is_empty() {
            return fail("bias_or_lo_ratio must have at least one entry".into());
        }
        if self.scheme != Scheme::CoherentQam16 && self.bias_or_lo_ratio.iter().any(|&r| r <= 0.0)
        {
            return fail("bias/LO power ratios must be positive".into());
        }
        let (axis_name, axis) = self.axis()?;
        if axis_name == "cd_ps_nm" {
            if self.scheme != Scheme::KkpamSsb {
                return fail("CD sweeps are defined for the kkpam-ssb scheme".into());
            }
            if self.fixed_osnr_db.is_none() {
                return fail("CD sweeps need fixed_osnr_db".into());
            }
        }
        let _ = axis;

        let fs = self.sim_rate_hz();
        let occupied = (1.0 + self.rolloff) * self.baud_hz + self.gap_hz;
        if self.n_wdm > 1 {
            if self.spacing_hz <= 0.0 {
                return fail("multi-channel scenarios need spacing_hz".into());
            }
            if self.n_wdm as f64 * self.spacing_hz > fs {
                return fail(format!(
                    "{} channels at {} Hz spacing exceed the {} Hz simulation band",
                    self.n_wdm, self.spacing_hz, fs
                ));
            }
        }
        if occupied > fs {
            return fail(format!(
                "occupied bandwidth {occupied} Hz exceeds simulation rate {fs} Hz"
            ));
        }
        if self.rx.adc_rate_hz > fs {
            return fail(format!(
                "ADC rate {} Hz above simulation rate {fs} Hz",
                self.rx.adc_rate_hz
            ));
        }
        if !matches!(self.rx.upsample_factor, 2..=6) {
            return fail(format!(
                "upsample factor {} outside 2..=6",
                self.rx.upsample_factor
            ));
        }
        if self.scheme == Scheme::TwoSidedPolmux && self.gap_hz < 0.0 {
            return fail("gap_hz must be non-negative".into());
        }

        report.lines.push(format!(
            "simulation rate {:.1} GSa/s over {} symbols at {:.1} GBd (rolloff {})",
            fs / 1e9,
            self.n_symbols,
            self.baud_hz / 1e9,
            self.rolloff
        ));
        match self.scheme {
            Scheme::KkpamSsb => {
                let bias_t = self.rx.filter.transfer_at(0.0).powi(2);
                report.lines.push(format!(
                    "rx filter: order {}, center {:.1} GHz, 3-dB width {:.1} GHz; bias transmissivity {:.3e} ({:.1} dB)",
                    self.rx.filter.order,
                    self.rx.filter.center_hz / 1e9,
                    self.rx.filter.bw3db_hz / 1e9,
                    bias_t,
                    10.0 * bias_t.log10()
                ));
                if bias_t < 0.5 {
                    report.lines.push(
                        "warning: rx filter attenuates the CW bias by more than 3 dB; \
                         KK reconstruction will degrade"
                            .into(),
                    );
                }
            }
            Scheme::TwoSidedPolmux => {
                let nominal = self.baud_hz + self.gap_hz;
                let with_rolloff = (1.0 + self.rolloff) * self.baud_hz + self.gap_hz;
                report.lines.push(format!(
                    "occupied bandwidth: nominal {:.1} GHz, roll-off inclusive {:.1} GHz; \
                     spectral-efficiency loss vs gapless {:.1}%",
                    nominal / 1e9,
                    with_rolloff / 1e9,
                    100.0 * self.gap_hz / nominal
                ));
                let inner = self
                    .interleaver
                    .filter
                    .centered_at(self.interleaver.offset_hz)
                    .transfer_at(self.gap_hz / 2.0)
                    .powi(2);
                let wrong_side = self
                    .interleaver
                    .filter
                    .centered_at(self.interleaver.offset_hz)
                    .transfer_at(-self.gap_hz / 2.0)
                    .powi(2);
                report.lines.push(format!(
                    "interleaver at +-{:.1} GHz: inner-edge transmissivity {:.2} dB, \
                     wrong-side suppression {:.1} dB",
                    self.interleaver.offset_hz / 1e9,
                    10.0 * inner.log10(),
                    10.0 * wrong_side.log10()
                ));
            }
            Scheme::CoherentQam16 => {
                report
                    .lines
                    .push("ideal dual-polarization coherent baseline".into());
            }
        }
        Ok(report)
    }
}

/// Applies one `dotted.path=value` override into a parsed TOML table.
/// Numeric path segments index into arrays of tables (`spans.0.length_km`).
fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut current = table;
    let mut iter = parts[..parts.len() - 1].iter().peekable();
    while let Some(part) = iter.next() {
        let descend_index = iter
            .peek()
            .map(|p| p.parse::<usize>().is_ok())
            .unwrap_or(false);
        if descend_index {
            let idx_str = iter.next().expect("peeked");
            let idx: usize = idx_str.parse().expect("peeked numeric");
            let arr = current
                .entry(part.to_string())
                .or_insert(toml::Value::Array(Vec::new()))
                .as_array_mut()
                .ok_or_else(|| {
                    Error::Config(format!("override path '{key}' indexes a non-array"))
                })?;
            while arr.len() <= idx {
                arr.push(toml::Value::Table(toml::Table::new()));
            }
            current = arr[idx]
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override path '{key}' crosses a non-table")))?;
        } else {
            current = current
                .entry(part.to_string())
                .or_insert(toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override path '{key}' crosses a non-table")))?;
        }
    }
    let leaf = parts[parts.len() - 1];
    let parsed: toml::Value = match value.parse::<i64>() {
        Ok(v) => toml::Value::Integer(v),
        Err(_) => match value.parse::<f64>() {
            Ok(v) => toml::Value::Float(v),
            Err(_) => match value {
                "true" => toml::Value::Boolean(true),
                "false" => toml::Value::Boolean(false),
                other if other.starts_with('[') => other
                    .parse::<toml::Value>()
                    .map_err(|e| Error::Config(format!("override '{key}': {e}")))?,
                other => toml::Value::String(other.to_string()),
            },
        },
    };
    current.insert(leaf.to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;


    const MINIMAL: &str = r#"
name = "smoke"
scheme = "kkpam-ssb"
n_symbols = 1024
samples_per_symbol = 4
bias_or_lo_ratio = [10.0]
osnr_sweep_db = [18.0]
n_runs = 1
"#;

    #[test]
    fn parses_minimal_scenario_with_defaults() {
        let sc = LinkScenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(sc.baud_hz, 48e9);
        assert_eq!(sc.rolloff, 0.05);
        assert_eq!(sc.rx.upsample_factor, 3);
        assert_eq!(sc.spans.len(), 1);
        sc.validate().unwrap();
    }

    #[test]
    fn overrides_apply_typed_values() {
        let sc = LinkScenario::from_toml_str_with_overrides(
            MINIMAL,
            &[
                ("n_symbols".into(), "2048".into()),
                ("rx.upsample_factor".into(), "4".into()),
                ("nonlinear".into(), "true".into()),
                ("osnr_sweep_db".into(), "[10.0, 12.0]".into()),
            ],
        )
        .unwrap();
        assert_eq!(sc.n_symbols, 2048);
        assert_eq!(sc.rx.upsample_factor, 4);
        assert!(sc.nonlinear);
        assert_eq!(sc.osnr_sweep_db, vec![10.0, 12.0]);
    }

    #[test]
    fn rx_filter_readings_evaluated() {
        // the three readings of "12th-order, 26 GHz 3-dB bandwidth at
        // +16 GHz": bias (0 Hz) transmissivity decides which can work
        let literal = FilterSpec::super_gaussian(12, 16e9, 26e9);
        let half_width = FilterSpec::super_gaussian(12, 16e9, 52e9);
        let chosen = FilterSpec::super_gaussian(12, 16e9, 36e9);

        let bias = |f: &FilterSpec| f.transfer_at(0.0).powi(2);
        assert!(bias(&literal) < 1e-40, "literal reading kills the carrier");
        assert!(bias(&half_width) > 0.999);
        assert!((bias(&chosen) - 0.96).abs() < 0.01, "{}", bias(&chosen));

        // the chosen reading passes the whole 25.2 GHz sideband...
        assert!(chosen.transfer_at(25.2e9).powi(2) > 0.999);
        // ...and rejects the image band that would fold onto the lane
        assert!(chosen.transfer_at(-5e9).powi(2) < 1e-10);
        // the half-width reading leaves ~10 GHz of image band open
        assert!(half_width.transfer_at(-5e9).powi(2) > 0.99);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut sc = LinkScenario::from_toml_str(MINIMAL).unwrap();
        sc.modulation_order = 3;
        assert!(sc.validate().is_err());

        let mut sc = LinkScenario::from_toml_str(MINIMAL).unwrap();
        sc.osnr_sweep_db.clear();
        assert!(sc.validate().is_err());

        let mut sc = LinkScenario::from_toml_str(MINIMAL).unwrap();
        sc.cd_sweep_ps_nm = vec![0.0];
        assert!(sc.validate().is_err(), "two axes must be rejected");

        let mut sc = LinkScenario::from_toml_str(MINIMAL).unwrap();
        sc.bias_or_lo_ratio = vec![-1.0];
        assert!(sc.validate().is_err());

        let mut sc = LinkScenario::from_toml_str(MINIMAL).unwrap();
        sc.n_wdm = 30;
        sc.spacing_hz = 80e9;
        assert!(sc.validate().is_err(), "band overflow must be rejected");
    }
}
