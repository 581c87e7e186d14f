use std::hash::{Hash, Hasher};

use super::NnError;

/// Dense row-major array of `f64`.
///
/// Most of the engine treats tensors as matrices: the first axis is the row
/// (sample) axis and the remaining axes are flattened into columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NnError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(NnError::Shape(format!("zero-sized axis in shape {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(NnError::NonFinite(*bad));
        }
        Ok(Self { shape, values })
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, NnError> {
        Self::new(vec![rows, cols], values)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NnError::Shape("ragged rows".into()));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, values: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape, values: vec![value; n] }
    }

    /// Internal constructor for results whose shape is correct by construction.
    pub(crate) fn from_parts(shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { shape, values }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.values.len() / self.shape[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn select_rows(&self, indices: &[usize]) -> Tensor {
        let c = self.cols();
        let mut values = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor::from_parts(shape, values)
    }

    /// Column `j` of a matrix as a one-column matrix.
    pub fn column(&self, j: usize) -> Tensor {
        let values = (0..self.rows()).map(|i| self.row(i)[j]).collect();
        Tensor::from_parts(vec![self.rows(), 1], values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn hash_bits<H: Hasher>(&self, state: &mut H) {
        self.shape.hash(state);
        for v in &self.values {
            v.to_bits().hash(state);
        }
    }

    pub(crate) fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn check_inner(a: usize, b: usize, what: &str) -> Result<(), NnError> {
    if a != b {
        return Err(NnError::Shape(format!("{what}: inner dimensions {a} and {b} differ")));
    }
    Ok(())
}

/// `a · b` for matrices `a: n×k`, `b: k×m`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (n, k) = (a.rows(), a.cols());
    let m = b.cols();
    check_inner(k, b.rows(), "matmul")?;
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.values[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, m], out))
}

/// `aᵀ · b` for `a: n×k`, `b: n×m`; result is `k×m`.
pub fn matmul_at_b(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (n, k) = (a.rows(), a.cols());
    let m = b.cols();
    check_inner(n, b.rows(), "matmul_at_b")?;
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let arow = a.row(i);
        let brow = b.row(i);
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![k, m], out))
}

/// `a · bᵀ` for `a: n×m`, `b: k×m`; result is `n×k`.
pub fn matmul_a_bt(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (n, m) = (a.rows(), a.cols());
    let k = b.rows();
    check_inner(m, b.cols(), "matmul_a_bt")?;
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let arow = a.row(i);
        for j in 0..k {
            out[i * k + j] = arow.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    Ok(Tensor::from_parts(vec![n, k], out))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax of a matrix.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let c = out.cols();
    for row in out.values.chunks_mut(c) {
        softmax_in_place(row);
    }
    out
}
