//! Declarative plot scripts: a Vega-Lite bar chart per table, reading a
//! small CSV of the mean rows written next to it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::tables::{ReportTable, MEAN_ROW};
use super::ReportError;

fn empty_table(t: &ReportTable) -> ReportError {
    ReportError::Io(std::io::Error::new(
        std::io::ErrorKind::InvalidInput,
        format!("table {} has no mean rows to plot", t.file_stem()),
    ))
}

/// Write `plot_<metric>_h<h>.csv` and `plot_<metric>_h<h>.vl.json` for each
/// table and return the paths written. Output is a pure function of the
/// tables.
pub fn emit_plot_script(
    tables: &[ReportTable],
    output_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    if tables.is_empty() {
        return Err(ReportError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "no tables to plot",
        )));
    }
    std::fs::create_dir_all(output_dir)?;
    let mut written = Vec::new();
    for t in tables {
        let means: Vec<_> = t.rows.iter().filter(|r| r.country == MEAN_ROW).collect();
        if means.is_empty() || t.columns.is_empty() {
            return Err(empty_table(t));
        }
        let stem = format!("plot_{}", t.file_stem());
        let mut data = String::from("sex,model,strategy,value\n");
        for r in &means {
            for (&(m, s), v) in t.columns.iter().zip(&r.values) {
                let _ = writeln!(data, "{},{},{},{v}", r.sex.code(), m.label(), s.label());
            }
        }
        let csv_name = format!("{stem}.csv");
        let script = json!({
            "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
            "title": format!("{} at h = {}, mean over countries", t.metric.label(), t.horizon),
            "data": { "url": csv_name },
            "facet": { "column": { "field": "sex", "type": "nominal", "title": "Sex" } },
            "spec": {
                "mark": "bar",
                "encoding": {
                    "x": { "field": "model", "type": "nominal", "title": null },
                    "xOffset": { "field": "strategy" },
                    "y": { "field": "value", "type": "quantitative", "title": t.metric.label() },
                    "color": { "field": "strategy", "type": "nominal", "title": "Strategy" }
                }
            }
        });
        let csv_path = output_dir.join(&csv_name);
        let script_path = output_dir.join(format!("{stem}.vl.json"));
        std::fs::write(&csv_path, data)?;
        let mut text = serde_json::to_string_pretty(&script).expect("static JSON serializes");
        text.push('\n');
        std::fs::write(&script_path, text)?;
        written.push(script_path);
        written.push(csv_path);
    }
    Ok(written)
}
