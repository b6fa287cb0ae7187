//! Artifact headers, CSV writing and aligned text tables.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use motionhmm::systems::SystemConfig;
use serde_json::Value;

/// `#` comment lines naming the command, seed and full configuration.
pub fn header(command: &str, seed: u64, config: &Value) -> String {
    format!("# motionhmm {command}\n# seed: {seed}\n# config: {config}\n")
}

pub fn csv_string(header_lines: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = String::from_utf8(w.into_inner().context("flushing CSV")?)?;
    Ok(format!("{header_lines}{body}"))
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| motionhmm::Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| motionhmm::Error::io(path, e))?;
    Ok(())
}

/// Left-aligned columns separated by two spaces.
pub fn text_table(columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = columns.iter().map(|c| c.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let joined: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(joined.join("  ").trim_end());
        out.push('\n');
    };
    line(columns.to_vec(), &mut out);
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

pub fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    Ok(())
}

pub fn metric(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.6}")
    }
}

pub const CONFIG_COLUMNS: [&str; 5] = ["feature_set", "model", "topology", "states", "decision_maker"];
pub const METRIC_COLUMNS: [&str; 4] = ["f1", "precision", "recall", "total_accuracy"];

pub fn config_cells(config: &SystemConfig) -> Vec<String> {
    let model = config.model();
    let kind = match model.chains {
        None => "hmm".to_string(),
        Some(m) => format!("fhmm(M={m})"),
    };
    vec![
        config.features().features.join(" "),
        kind,
        model.spec.topology.to_string(),
        model.spec.states.to_string(),
        config.decision_name(),
    ]
}

pub fn metric_cells(s: &motionhmm::evaluation::Summary) -> Vec<String> {
    vec![
        metric(s.f1),
        metric(s.precision),
        metric(s.recall),
        metric(s.total_accuracy),
    ]
}
