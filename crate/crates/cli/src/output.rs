//! Result rendering: aligned text tables, CSV, and JSON.

use std::io::Write;
use std::path::Path;

use onebit::experiments::{ResultRow, Source};

use crate::args::Format;

/// Format for `--output` when none is given: `.json` gets JSON, anything else CSV.
pub fn infer_format(path: Option<&Path>) -> Format {
    match path {
        None => Format::Table,
        Some(p) if p.extension().is_some_and(|e| e == "json") => Format::Json,
        Some(_) => Format::Csv,
    }
}

pub fn render(rows: &[ResultRow], format: Format) -> std::io::Result<Vec<u8>> {
    match format {
        Format::Table => Ok(table(rows).into_bytes()),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row)?;
            }
            w.into_inner().map_err(|e| e.into_error())
        }
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(rows)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

fn source_name(s: Source) -> &'static str {
    match s {
        Source::Analytic => "analytic",
        Source::Simulation => "simulation",
        Source::Ode => "ode",
    }
}

fn opt(x: Option<f64>, f: impl Fn(f64) -> String) -> String {
    x.map(f).unwrap_or_else(|| "-".into())
}

/// Column-aligned text with published values and relative deviations.
pub fn table(rows: &[ResultRow]) -> String {
    let header = [
        "scenario",
        "policy",
        "source",
        "lambda",
        "T",
        "E[S]",
        "ci95",
        "published",
        "dev",
        "reps",
        "diagnostics",
    ];
    let body: Vec<[String; 11]> = rows
        .iter()
        .map(|r| {
            [
                r.scenario.clone(),
                r.policy.clone(),
                source_name(r.source).into(),
                opt(r.lambda, |x| format!("{x}")),
                opt(r.threshold, |x| format!("{x:.4}")),
                format!("{:.4}", r.mean_sojourn),
                opt(r.ci95, |x| format!("±{x:.4}")),
                opt(r.published, |x| format!("{x}")),
                opt(r.rel_deviation, |x| format!("{:+.2}%", 100.0 * x)),
                r.replications.map_or_else(|| "-".into(), |n| n.to_string()),
                r.diagnostics.clone(),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for line in &body {
        for (w, cell) in widths.iter_mut().zip(line) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut push = |cells: Vec<&str>| {
        let line: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = w - c.chars().count();
                // Text columns left-aligned, numbers right-aligned.
                if i < 3 || i == 10 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    push(header.to_vec());
    for line in &body {
        push(line.iter().map(String::as_str).collect());
    }
    out
}

pub fn emit(bytes: &[u8], path: Option<&Path>) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()
        }
    }
}
