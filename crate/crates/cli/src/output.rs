use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use spde_core::{ConditionReport64, DiagnosticTable64, ModelSpec64, SpectralBasis64, Trajectory64};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] spde_core::SpdeError),
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, OutputError> {
    let file = BufWriter::new(File::create(path)?);
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_condition_report(
    path: &Path,
    reports: &[ConditionReport64],
) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    w.write_record([
        "condition",
        "n_samples",
        "n_violations",
        "pass",
        "margin_min",
        "margin_median",
        "margin_mean",
        "fitted_constants",
        "notes",
    ])?;
    for r in reports {
        let constants: Vec<String> = r
            .fitted_constants
            .iter()
            .map(|(k, v)| format!("{k}={}", num(*v)))
            .collect();
        w.write_record([
            r.condition.as_str().to_string(),
            r.n_samples.to_string(),
            r.n_violations.to_string(),
            r.pass.to_string(),
            num(r.margin_stats.min),
            num(r.margin_stats.median),
            num(r.margin_stats.mean),
            constants.join(";"),
            r.notes.join("; "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn condition_text(model: &str, reports: &[ConditionReport64]) -> String {
    let mut s = format!("hypothesis audit for {model}\n");
    for r in reports {
        s.push_str(&format!(
            "  {:<14} {}  {:>6}/{:<6} violations  min margin {:+.3e}",
            r.condition.as_str(),
            if r.pass { "ok  " } else { "FAIL" },
            r.n_violations,
            r.n_samples,
            r.margin_stats.min,
        ));
        for (k, v) in &r.fitted_constants {
            s.push_str(&format!("  {k}={v:.4}"));
        }
        s.push('\n');
        for note in &r.notes {
            s.push_str(&format!("      {note}\n"));
        }
    }
    s
}

pub fn write_trajectory(
    path: &Path,
    model: &ModelSpec64,
    basis: &SpectralBasis64,
    tr: &Trajectory64,
) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    let n = tr.n_modes;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|k| format!("c_{k}")));
    header.push("h_norm".into());
    header.push("v_norm".into());
    w.write_record(&header)?;
    for s in &tr.states {
        let mut rec = Vec::with_capacity(n + 3);
        rec.push(num(s.time));
        rec.extend(s.coeffs.iter().map(|&c| num(c)));
        rec.push(num(basis.h_norm(&s.coeffs)));
        rec.push(num(model.v_norm(basis, &s.coeffs)?));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table(path: &Path, table: &DiagnosticTable64) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    w.write_record(["key", "estimate", "std_error", "M"])?;
    for r in &table.rows {
        w.write_record([
            r.key.clone(),
            num(r.estimate),
            num(r.std_error),
            r.m.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `summary.json`; the first field is the only line that changes between identical runs.
pub fn write_summary<S: Serialize>(path: &Path, body: &S) -> Result<(), OutputError> {
    #[derive(Serialize)]
    struct Stamped<'a, S> {
        generated_at_unix: u64,
        #[serde(flatten)]
        body: &'a S,
    }
    let generated_at_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(
        &mut f,
        &Stamped {
            generated_at_unix,
            body,
        },
    )?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
