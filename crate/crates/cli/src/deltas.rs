use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::metrics::format_sig6;
use crate::summary::Summary;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientDelta {
    pub client: usize,
    pub li: f64,
    pub isolated: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaTable {
    pub rows: Vec<ClientDelta>,
    pub mean_delta: f64,
}

/// Per-client `li − isolated` accuracy. Both summaries must list the same
/// clients in the same order with identical test splits.
pub fn report_client_deltas(li: &Summary, isolated: &Summary) -> Result<DeltaTable, HarnessError> {
    if li.clients.len() != isolated.clients.len() {
        return Err(HarnessError::Mismatch(format!("{} clients vs {} clients", li.clients.len(), isolated.clients.len())));
    }
    let mut rows = Vec::with_capacity(li.clients.len());
    for (a, b) in li.clients.iter().zip(&isolated.clients) {
        if a.id != b.id {
            return Err(HarnessError::Mismatch(format!("client {} paired with client {}", a.id, b.id)));
        }
        if a.test_fingerprint != b.test_fingerprint {
            return Err(HarnessError::Mismatch(format!("client {} has different test splits", a.id)));
        }
        rows.push(ClientDelta { client: a.id, li: a.accuracy, isolated: b.accuracy, delta: a.accuracy - b.accuracy });
    }
    if rows.is_empty() {
        return Err(HarnessError::Mismatch("no clients to compare".into()));
    }
    let mean_delta = rows.iter().map(|r| r.delta).sum::<f64>() / rows.len() as f64;
    Ok(DeltaTable { rows, mean_delta })
}

impl DeltaTable {
    /// `client,li,isolated,delta` rows followed by a `mean` row.
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(["client", "li", "isolated", "delta"])?;
        for r in &self.rows {
            w.write_record([r.client.to_string(), format_sig6(r.li), format_sig6(r.isolated), format_sig6(r.delta)])?;
        }
        w.write_record(["mean", "", "", &format_sig6(self.mean_delta)])?;
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for DeltaTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6}  {:>9}  {:>9}  {:>9}", "client", "li", "isolated", "delta")?;
        for r in &self.rows {
            writeln!(f, "{:>6}  {:>9.4}  {:>9.4}  {:>+9.4}", r.client, r.li, r.isolated, r.delta)?;
        }
        write!(f, "{:>6}  {:>9}  {:>9}  {:>+9.4}", "mean", "", "", self.mean_delta)
    }
}
