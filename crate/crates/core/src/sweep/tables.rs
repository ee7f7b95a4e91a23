//! Plot-ready flat tables and the run manifest.
//!
//! Tables are comma-separated with a header row, one row per cell, and
//! digest header comments. Emission is byte-stable: identical inputs always
//! produce identical files. Wall-clock timestamps appear only in the
//! manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sweep::generation::GenCell;
use crate::sweep::grid::SweepResult;

/// Writes the grid as `removal_strength,inject_strength,metric,delta` rows.
pub fn emit_grid_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# config_digest: {}\n", result.config_digest));
    out.push_str(&format!("# model_digest: {}\n", result.model_digest));
    out.push_str(&format!("# context_digest: {}\n", result.context_digest));
    out.push_str("removal_strength,inject_strength,metric,delta\n");
    for (r, &removal) in result.removal_strengths.iter().enumerate() {
        for (i, &inject) in result.inject_strengths.iter().enumerate() {
            out.push_str(&format!(
                "{removal},{inject},{},{}\n",
                result.values[r][i], result.deltas[r][i]
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes one row per (layer, magnitude) cell of a generation sweep.
pub fn emit_generation_csv(cells: &[GenCell], config_digest: &str, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# config_digest: {config_digest}\n"));
    out.push_str("layer,magnitude,flip_rate,mean_self_bleu,determined,undetermined,records\n");
    for cell in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cell.layer,
            cell.magnitude,
            cell.report.flip_rate,
            cell.report.mean_self_bleu,
            cell.report.determined,
            cell.report.undetermined,
            cell.report.records.len()
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Provenance record written next to every sweep output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub model_digest: String,
    pub context_digest: Option<String>,
    pub seed: u64,
    pub rng_algorithm: String,
    /// Unix seconds; the only wall-clock field in any output.
    pub timestamp: Option<u64>,
    pub config: serde_json::Value,
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::GenerationEvalReport;

    fn tiny_result() -> SweepResult {
        SweepResult {
            inject_strengths: vec![0.0, 0.5],
            removal_strengths: vec![0.0, 0.5],
            values: vec![vec![0.5, 0.625], vec![0.5, 0.75]],
            deltas: vec![vec![0.0, 0.125], vec![0.0, 0.25]],
            baseline: 0.5,
            argmax: (1, 1),
            config_digest: "cfg".into(),
            model_digest: "model".into(),
            context_digest: "ctx".into(),
        }
    }

    #[test]
    fn two_by_two_grid_emits_four_rows_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        emit_grid_csv(&tiny_result(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[3], "removal_strength,inject_strength,metric,delta");
        assert_eq!(lines.len(), 3 + 1 + 4);
        assert!(lines[0].starts_with("# config_digest:"));
    }

    #[test]
    fn emission_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        emit_grid_csv(&tiny_result(), &a).unwrap();
        emit_grid_csv(&tiny_result(), &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn generation_table_has_one_row_per_cell() {
        let cells = vec![
            GenCell {
                layer: 1,
                magnitude: 0.0,
                report: GenerationEvalReport::from_records(vec![]),
            },
            GenCell {
                layer: 2,
                magnitude: 0.4,
                report: GenerationEvalReport::from_records(vec![]),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.csv");
        emit_generation_csv(&cells, "cfg", &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 1 + 2);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("layer,magnitude,flip_rate"));
    }
}
