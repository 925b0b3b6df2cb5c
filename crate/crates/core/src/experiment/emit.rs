//! CSV and run-manifest emission.
//!
//! The CSV column order is part of the toolkit's external interface and must
//! not change. Values use Rust's shortest-round-trip float formatting, so a
//! rerun from the same manifest is byte-identical.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::scenario::LinkScenario;
use crate::experiment::SweepResult;

pub const CSV_HEADER: &str = "axis_name,axis_value,bias_or_lo_ratio,scheme,sideband,polarization,n_bits,n_errors,ber,min_phase_violations,clip_count,seed_base";

const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    toolkit: &'static str,
    toolkit_version: &'static str,
    axis_name: &'a str,
    n_rows: usize,
    scenario: &'a LinkScenario,
}

/// Paths written by [`emit_results`].
#[derive(Debug, Clone)]
pub struct EmittedPaths {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub theory: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn render_csv(result: &SweepResult) -> String {
    let mut out = String::with_capacity(64 * (result.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.axis_name,
            r.axis_value,
            r.ratio,
            r.scheme_label,
            r.sideband,
            r.polarization,
            r.n_bits,
            r.n_errors,
            r.ber,
            r.min_phase_violations,
            r.clip_count,
            r.seed_base
        ));
    }
    out
}

pub fn render_theory_csv(result: &SweepResult) -> Option<String> {
    if result.theory.is_empty() {
        return None;
    }
    let mut out = String::from("axis_name,axis_value,ber\n");
    for t in &result.theory {
        out.push_str(&format!("{},{},{}\n", result.axis_name, t.axis_value, t.ber));
    }
    Some(out)
}

/// Serializes the run manifest: schema version, toolkit version and the
/// fully resolved scenario, enough to re-derive any CSV row.
pub fn render_manifest(result: &SweepResult) -> Result<String> {
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        toolkit: "kktx",
        toolkit_version: env!("CARGO_PKG_VERSION"),
        axis_name: result.axis_name,
        n_rows: result.rows.len(),
        scenario: &result.scenario,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn write_manifest(result: &SweepResult, path: &Path) -> Result<()> {
    let text = render_manifest(result)?;
    std::fs::write(path, text).map_err(io_err(path))
}

/// Writes `<name>.csv`, `<name>.manifest.json` and, for OSNR sweeps,
/// `<name>.theory.csv` under `dir`.
pub fn emit_results(result: &SweepResult, dir: &Path) -> Result<EmittedPaths> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = &result.scenario.name;

    let csv_path = dir.join(format!("{name}.csv"));
    let mut file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    file.write_all(render_csv(result).as_bytes())
        .map_err(io_err(&csv_path))?;

    let manifest_path = dir.join(format!("{name}.manifest.json"));
    write_manifest(result, &manifest_path)?;

    let theory_path = match render_theory_csv(result) {
        Some(text) => {
            let p = dir.join(format!("{name}.theory.csv"));
            std::fs::write(&p, text).map_err(io_err(&p))?;
            Some(p)
        }
        None => None,
    };

    Ok(EmittedPaths {
        csv: csv_path,
        manifest: manifest_path,
        theory: theory_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{SweepRow, TheoryPoint};

    fn scenario() -> LinkScenario {
        LinkScenario::from_toml_str(
            r#"
name = "emit-test"
scheme = "kkpam-ssb"
n_symbols = 256
samples_per_symbol = 4
bias_or_lo_ratio = [10.0]
osnr_sweep_db = [18.0]
n_runs = 1
"#,
        )
        .unwrap()
    }

    #[test]
    fn empty_sweep_emits_header_only() {
        let result = SweepResult {
            scenario: scenario(),
            axis_name: "osnr_db",
            rows: vec![],
            theory: vec![],
            wall_time_s: 0.0,
        };
        let text = render_csv(&result);
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        assert!(render_theory_csv(&result).is_none());
    }

    #[test]
    fn single_row_renders_in_schema_order() {
        let result = SweepResult {
            scenario: scenario(),
            axis_name: "osnr_db",
            rows: vec![SweepRow {
                axis_name: "osnr_db",
                axis_value: 18.0,
                ratio: 10.0,
                scheme_label: "kkpam-ssb:digital".into(),
                sideband: "ssb",
                polarization: "x",
                n_bits: 512,
                n_errors: 3,
                ber: 3.0 / 512.0,
                min_phase_violations: 0,
                clip_count: 0,
                seed_base: 1,
            }],
            theory: vec![TheoryPoint {
                axis_value: 18.0,
                ber: 1e-3,
            }],
            wall_time_s: 0.1,
        };
        let text = render_csv(&result);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "osnr_db,18,10,kkpam-ssb:digital,ssb,x,512,3,0.005859375,0,0,1"
        );
        assert!(lines.next().is_none());

        let theory = render_theory_csv(&result).unwrap();
        assert!(theory.starts_with("axis_name,axis_value,ber\n"));
        assert!(theory.contains("osnr_db,18,0.001\n"));

        let manifest = render_manifest(&result).unwrap();
        assert!(manifest.contains("\"schema_version\": 1"));
        assert!(manifest.contains("\"name\": \"emit-test\""));
    }
}
