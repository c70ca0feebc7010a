//! `curves`: collect the metrics of many runs into one CSV per
//! (model, metric), plus the calibration histograms.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::artifacts::*;

/// Writes `{model}_{metric}.csv` (columns `method,simulations,value,seed`)
/// and `{model}_{method}_sbc.csv` into `output`. Returns the files written.
/// Runs without metrics are skipped with a warning.
pub fn emit_curves(result_dirs: &[PathBuf], output: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let mut curves: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut histograms: BTreeMap<(String, String), String> = BTreeMap::new();
    for dir in result_dirs {
        let manifest = Manifest::read(dir)?;
        let model = manifest.config.model.clone();
        let seed = manifest.seed;
        let metrics = dir.join(METRICS);
        if !metrics.exists() {
            log::warn!("{} has no {METRICS}; run `diagnose` first", dir.display());
            continue;
        }
        let text = fs::read_to_string(&metrics)?;
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            let [metric, method, simulations, value] = fields[..] else {
                log::warn!("malformed metrics row in {}: {line}", dir.display());
                continue;
            };
            if value.parse::<f64>().map_or(true, |v| !v.is_finite()) {
                log::warn!("{metric} missing for {method} at {simulations} simulations in {}", dir.display());
                continue;
            }
            curves
                .entry((model.clone(), metric.to_string()))
                .or_insert_with(|| format!("{CURVE_HEADER}\n"))
                .push_str(&format!("{method},{simulations},{value},{seed}\n"));
        }
        let sbc = dir.join(SBC_HISTOGRAM);
        if sbc.exists() {
            let text = fs::read_to_string(&sbc)?;
            histograms
                .entry((model.clone(), manifest.config.method.to_string()))
                .or_insert_with(|| format!("{SBC_HEADER}\n"))
                .push_str(&text.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
        }
    }
    let mut written = Vec::new();
    for ((model, metric), text) in curves {
        let path = output.join(format!("{model}_{metric}.csv"));
        fs::write(&path, text)?;
        written.push(path);
    }
    for ((model, method), text) in histograms {
        let path = output.join(format!("{model}_{method}_sbc.csv"));
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
