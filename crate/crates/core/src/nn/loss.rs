use super::tensor::softmax_in_place;
use super::{NnError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub dlogits: Tensor,
}

/// Supervision for one batch: class indices (softmax cross-entropy) or a
/// {0,1} matrix shaped like the logits (sigmoid binary cross-entropy).
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Binary(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(l) => l.len(),
            Targets::Binary(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Classes(l) => Targets::Classes(indices.iter().map(|&i| l[i]).collect()),
            Targets::Binary(t) => Targets::Binary(t.select_rows(indices)),
        }
    }

    pub fn loss(&self, logits: &Tensor) -> Result<LossOutput, NnError> {
        match self {
            Targets::Classes(l) => softmax_cross_entropy(logits, l),
            Targets::Binary(t) => sigmoid_bce(logits, t),
        }
    }
}

/// Mean softmax cross-entropy over rows, with max-subtraction.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<LossOutput, NnError> {
    let (n, k) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(NnError::Shape(format!("{} labels for {n} logit rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(NnError::LabelOutOfRange { label: bad, classes: k });
    }
    let mut grad = logits.values().to_vec();
    let mut loss = 0.0;
    let scale = 1.0 / n as f64;
    for (row, &y) in grad.chunks_mut(k).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        softmax_in_place(row);
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(LossOutput { loss: loss * scale, dlogits: Tensor::from_parts(logits.shape().to_vec(), grad) })
}

/// Mean elementwise binary cross-entropy on logits,
/// `max(z,0) − z·y + ln(1 + e^{−|z|})`.
pub fn sigmoid_bce(logits: &Tensor, targets: &Tensor) -> Result<LossOutput, NnError> {
    if logits.shape() != targets.shape() {
        return Err(NnError::Shape(format!(
            "targets {:?} do not match logits {:?}",
            targets.shape(),
            logits.shape()
        )));
    }
    if let Some(&bad) = targets.values().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(NnError::BadTarget(bad));
    }
    let scale = 1.0 / logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .values()
        .iter()
        .zip(targets.values())
        .map(|(&z, &y)| {
            loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            (sigmoid(z) - y) * scale
        })
        .collect();
    Ok(LossOutput { loss: loss * scale, dlogits: Tensor::from_parts(logits.shape().to_vec(), grad) })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
