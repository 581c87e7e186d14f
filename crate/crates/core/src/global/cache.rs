use std::io::Write;

use crate::data::LocalData;
use crate::nn::{forward_features, forward_head, ModelSpec, ParamSet, Tensor};

use super::{class_labels, GlobalError};

/// Every head's logits for a set of samples, side by side in client order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    rows: Tensor,
    labels: Vec<usize>,
    provenance: Vec<usize>,
    clients: usize,
    head_width: usize,
}

impl FeatureCache {
    /// `N × (clients · head_width)` matrix; columns `c·w..(c+1)·w` hold head `c`.
    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Index of the part each row came from.
    pub fn provenance(&self) -> &[usize] {
        &self.provenance
    }

    pub fn clients(&self) -> usize {
        self.clients
    }

    pub fn head_width(&self) -> usize {
        self.head_width
    }

    pub fn width(&self) -> usize {
        self.clients * self.head_width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One CSV row per sample: `h{c}_{j}` logit columns, then `label` and `client`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GlobalError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = Vec::with_capacity(self.width() + 2);
        for c in 0..self.clients {
            header.extend((0..self.head_width).map(|j| format!("h{c}_{j}")));
        }
        header.push("label".into());
        header.push("client".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut record: Vec<String> = self.rows.row(i).iter().map(f64::to_string).collect();
            record.push(self.labels[i].to_string());
            record.push(self.provenance[i].to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_heads(spec: &ModelSpec, heads: &[ParamSet]) -> Result<(), GlobalError> {
    if heads.is_empty() {
        return Err(GlobalError::NoHeads);
    }
    for (c, h) in heads.iter().enumerate() {
        h.validate(spec).map_err(|e| GlobalError::Mismatch(format!("head {c}: {e}")))?;
    }
    Ok(())
}

/// Backbone features computed once, then every head applied to them; the
/// logits are concatenated in head order.
pub fn head_logits(spec: &ModelSpec, backbone: &ParamSet, heads: &[ParamSet], inputs: &Tensor) -> Result<Tensor, GlobalError> {
    check_heads(spec, heads)?;
    let features = forward_features(spec, backbone, inputs)?;
    let outs = heads.iter().map(|h| forward_head(spec, h, &features)).collect::<Result<Vec<_>, _>>()?;
    let (n, w) = (inputs.rows(), spec.output_width());
    let mut values = Vec::with_capacity(n * w * heads.len());
    for i in 0..n {
        for o in &outs {
            values.extend_from_slice(o.row(i));
        }
    }
    Ok(Tensor::matrix(n, w * heads.len(), values)?)
}

/// Cache over the concatenation of `parts`; rows of part `p` get provenance `p`.
pub fn collect_head_outputs(
    spec: &ModelSpec,
    backbone: &ParamSet,
    heads: &[ParamSet],
    parts: &[&LocalData],
) -> Result<FeatureCache, GlobalError> {
    check_heads(spec, heads)?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut provenance = Vec::new();
    for (p, part) in parts.iter().enumerate() {
        let l = class_labels(part)?;
        values.extend(head_logits(spec, backbone, heads, &part.inputs)?.into_values());
        labels.extend_from_slice(l);
        provenance.extend(std::iter::repeat_n(p, l.len()));
    }
    if labels.is_empty() {
        return Err(GlobalError::Empty);
    }
    let (clients, head_width) = (heads.len(), spec.output_width());
    let rows = Tensor::matrix(labels.len(), clients * head_width, values)?;
    Ok(FeatureCache { rows, labels, provenance, clients, head_width })
}
