use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ringfl::protocol::{Phase, VisitRecord};
use serde::Deserialize;

use crate::HarnessError;

/// Column order of `metrics.csv`.
pub const METRICS_HEADER: [&str; 9] =
    ["round", "node_id", "phase", "local_test_accuracy", "loss", "lr_head", "lr_backbone", "parameters_sent", "wall_ms"];

/// One row per training phase of one visit. `parameters_sent` is the
/// run's cumulative count after the visit's transfer; `wall_ms` is the
/// visit's duration, or 0 when wall time is not recorded.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MetricsRecord {
    pub round: u32,
    pub node_id: usize,
    pub phase: Phase,
    pub local_test_accuracy: f64,
    pub loss: f64,
    pub lr_head: f64,
    pub lr_backbone: f64,
    pub parameters_sent: u64,
    pub wall_ms: f64,
}

pub fn records_from_visits(visits: &[VisitRecord], record_wall_time: bool) -> Vec<MetricsRecord> {
    let mut out = Vec::new();
    for v in visits {
        let wall_ms = if record_wall_time { v.elapsed.as_secs_f64() * 1e3 } else { 0.0 };
        for p in &v.phases {
            out.push(MetricsRecord {
                round: v.round,
                node_id: v.node,
                phase: p.phase,
                local_test_accuracy: p.accuracy,
                loss: p.mean_loss,
                lr_head: p.lr_head,
                lr_backbone: p.lr_backbone,
                parameters_sent: v.parameters_sent,
                wall_ms,
            });
        }
    }
    out
}

/// Shortest `%g`-style rendering with 6 significant digits: fixed
/// notation for exponents in -4..6, scientific otherwise.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // round first so that e.g. 9.999999 is classified by its rounded exponent
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

/// Writes the header and one line per record.
pub fn emit_metrics(records: &[MetricsRecord], path: &Path) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    let file = File::create(path)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(file));
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.node_id.to_string(),
            r.phase.as_str().to_string(),
            format_sig6(r.local_test_accuracy),
            format_sig6(r.loss),
            format_sig6(r.lr_head),
            format_sig6(r.lr_backbone),
            r.parameters_sent.to_string(),
            format_sig6(r.wall_ms),
        ])?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(HarnessError::Mismatch(format!("unexpected metrics header {header:?}")));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
