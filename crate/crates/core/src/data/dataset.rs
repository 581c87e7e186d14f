use crate::nn::{Targets, Tensor};

use super::DataError;

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// One class index per sample.
    Classes { labels: Vec<usize>, num_classes: usize },
    /// `N × T` matrix of {0,1} attributes, one column per task.
    Attributes(Tensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Labels,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Labels) -> Result<Self, DataError> {
        if features.shape().len() != 2 {
            return Err(DataError::Invalid("features must be an N × d matrix".into()));
        }
        let n = features.rows();
        match &labels {
            Labels::Classes { labels, num_classes } => {
                if labels.len() != n {
                    return Err(DataError::Invalid(format!("{} labels for {n} samples", labels.len())));
                }
                if let Some(&bad) = labels.iter().find(|&&y| y >= *num_classes) {
                    return Err(DataError::Invalid(format!("label {bad} outside 0..{num_classes}")));
                }
            }
            Labels::Attributes(t) => {
                if t.rows() != n {
                    return Err(DataError::Invalid(format!("{} attribute rows for {n} samples", t.rows())));
                }
                if t.values().iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(DataError::Invalid("attributes must be 0 or 1".into()));
                }
            }
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Classes { labels, .. } => Some(labels),
            Labels::Attributes(_) => None,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.labels {
            Labels::Classes { num_classes, .. } => Some(*num_classes),
            Labels::Attributes(_) => None,
        }
    }

    pub fn num_tasks(&self) -> Option<usize> {
        match &self.labels {
            Labels::Classes { .. } => None,
            Labels::Attributes(t) => Some(t.cols()),
        }
    }

    /// Rows `indices` with full supervision (all classes, or all attributes).
    pub fn local(&self, indices: &[usize]) -> Result<LocalData, DataError> {
        if indices.is_empty() {
            return Err(DataError::EmptySubset);
        }
        let inputs = self.features.select_rows(indices);
        let targets = match &self.labels {
            Labels::Classes { labels, .. } => Targets::Classes(indices.iter().map(|&i| labels[i]).collect()),
            Labels::Attributes(t) => Targets::Binary(t.select_rows(indices)),
        };
        Ok(LocalData { inputs, targets, indices: indices.to_vec() })
    }

    /// Rows `indices` supervised by attribute column `task` only.
    pub fn local_task(&self, indices: &[usize], task: usize) -> Result<LocalData, DataError> {
        let Labels::Attributes(t) = &self.labels else {
            return Err(DataError::Invalid("per-task data needs an attribute dataset".into()));
        };
        if task >= t.cols() {
            return Err(DataError::Invalid(format!("task {task} outside 0..{}", t.cols())));
        }
        if indices.is_empty() {
            return Err(DataError::EmptySubset);
        }
        let col = t.column(task).select_rows(indices);
        Ok(LocalData { inputs: self.features.select_rows(indices), targets: Targets::Binary(col), indices: indices.to_vec() })
    }
}

/// A materialized, non-empty sample subset.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalData {
    pub inputs: Tensor,
    pub targets: Targets,
    /// Source-dataset row of each sample.
    pub indices: Vec<usize>,
}

impl LocalData {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn batch(&self, rows: &[usize]) -> (Tensor, Targets) {
        (self.inputs.select_rows(rows), self.targets.select(rows))
    }

    /// Concatenation of several subsets, in order.
    pub fn concat(parts: &[&LocalData]) -> Result<LocalData, DataError> {
        let first = parts.first().ok_or(DataError::EmptySubset)?;
        let cols = first.inputs.cols();
        let mut values = Vec::new();
        let mut indices = Vec::new();
        for p in parts {
            if p.inputs.cols() != cols {
                return Err(DataError::Invalid("subsets have different widths".into()));
            }
            values.extend_from_slice(p.inputs.values());
            indices.extend_from_slice(&p.indices);
        }
        let targets = match &first.targets {
            Targets::Classes(_) => {
                let mut all = Vec::new();
                for p in parts {
                    match &p.targets {
                        Targets::Classes(l) => all.extend_from_slice(l),
                        Targets::Binary(_) => return Err(DataError::Invalid("mixed target kinds".into())),
                    }
                }
                Targets::Classes(all)
            }
            Targets::Binary(t0) => {
                let w = t0.cols();
                let mut all = Vec::new();
                for p in parts {
                    match &p.targets {
                        Targets::Binary(t) if t.cols() == w => all.extend_from_slice(t.values()),
                        _ => return Err(DataError::Invalid("mixed target kinds".into())),
                    }
                }
                Targets::Binary(Tensor::matrix(all.len() / w, w, all).map_err(|e| DataError::Invalid(e.to_string()))?)
            }
        };
        let inputs = Tensor::matrix(indices.len(), cols, values).map_err(|e| DataError::Invalid(e.to_string()))?;
        Ok(LocalData { inputs, targets, indices })
    }
}
