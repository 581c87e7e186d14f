use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::Tensor;

use super::{DataError, Dataset, Labels};

/// Gaussian class clusters around randomly placed means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dims: usize,
    pub samples_per_class: usize,
    /// Per-class standard deviation around the mean.
    pub cluster_spread: f64,
    /// Standard deviation of each class-mean coordinate.
    pub inter_cluster_scale: f64,
    /// Class means vary only in the first `informative_dims` coordinates
    /// (all of them when unset); the rest is pure noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informative_dims: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.num_classes == 0 || self.dims == 0 || self.samples_per_class == 0 {
            return Err(DataError::Invalid("blob counts must be positive".into()));
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return Err(DataError::Invalid("cluster_spread must be positive".into()));
        }
        if !(self.inter_cluster_scale >= 0.0 && self.inter_cluster_scale.is_finite()) {
            return Err(DataError::Invalid("inter_cluster_scale must be non-negative".into()));
        }
        if matches!(self.informative_dims, Some(r) if r == 0 || r > self.dims) {
            return Err(DataError::Invalid("informative_dims must lie in 1..=dims".into()));
        }
        Ok(())
    }

    fn informative(&self) -> usize {
        self.informative_dims.unwrap_or(self.dims)
    }
}

fn draw_means(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, DataError> {
    let mean_dist = Normal::new(0.0, spec.inter_cluster_scale).map_err(|e| DataError::Invalid(e.to_string()))?;
    let r = spec.informative();
    Ok((0..spec.num_classes)
        .map(|_| (0..spec.dims).map(|j| if j < r { mean_dist.sample(rng) } else { 0.0 }).collect())
        .collect())
}

/// Class means drawn once, samples drawn around them, rows shuffled; all
/// from one generator seeded by `spec.seed`.
pub fn gen_blobs(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = draw_means(spec, &mut rng)?;
    let noise = Normal::new(0.0, spec.cluster_spread).map_err(|e| DataError::Invalid(e.to_string()))?;
    let n = spec.num_classes * spec.samples_per_class;
    let mut rows = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let x: Vec<f64> = mean.iter().map(|m| m + noise.sample(&mut rng)).collect();
            rows.push((x, class));
        }
    }
    rows.shuffle(&mut rng);
    let labels = rows.iter().map(|(_, y)| *y).collect();
    let values = rows.into_iter().flat_map(|(x, _)| x).collect();
    let features = Tensor::matrix(n, spec.dims, values).map_err(|e| DataError::Invalid(e.to_string()))?;
    Dataset::new(features, Labels::Classes { labels, num_classes: spec.num_classes })
}

/// Class means used by [`gen_blobs`], regenerated from the same seed.
pub fn blob_means(spec: &SyntheticSpec) -> Result<Vec<Vec<f64>>, DataError> {
    spec.validate()?;
    draw_means(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}

/// Binary attributes that are noisy linear thresholds of shared features.
///
/// Each task's generating vector lies in a common `latent_rank`-dimensional
/// subspace, so all tasks depend on the same low-dimensional projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiAttributeSpec {
    pub tasks: usize,
    pub dims: usize,
    pub samples: usize,
    #[serde(default = "MultiAttributeSpec::default_rank")]
    pub latent_rank: usize,
    /// Std of the Gaussian noise added to the standardized margin.
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl MultiAttributeSpec {
    fn default_rank() -> usize {
        4
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.tasks < 2 {
            return Err(DataError::Invalid("multi-attribute data needs at least two tasks".into()));
        }
        if self.dims == 0 || self.samples == 0 || self.latent_rank == 0 {
            return Err(DataError::Invalid("multi-attribute counts must be positive".into()));
        }
        if !(self.label_noise >= 0.0 && self.label_noise.is_finite()) {
            return Err(DataError::Invalid("label_noise must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn gen_multi_attribute(spec: &MultiAttributeSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let basis: Vec<Vec<f64>> = (0..spec.latent_rank)
        .map(|_| (0..spec.dims).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let vectors: Vec<Vec<f64>> = (0..spec.tasks)
        .map(|_| {
            let coef: Vec<f64> = (0..spec.latent_rank).map(|_| StandardNormal.sample(&mut rng)).collect();
            (0..spec.dims).map(|j| coef.iter().zip(&basis).map(|(c, b)| c * b[j]).sum()).collect()
        })
        .collect();
    gen_attributes_from_vectors(&vectors, spec.samples, spec.label_noise, &mut rng)
}

/// Attribute `t` of sample `x` is `1[w_t·x / ‖w_t‖ + noise·ε > 0]` with
/// `x ~ N(0, I)` and `ε ~ N(0, 1)`.
pub fn gen_attributes_from_vectors(
    vectors: &[Vec<f64>],
    samples: usize,
    label_noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset, DataError> {
    let dims = vectors.first().map(Vec::len).ok_or_else(|| DataError::Invalid("no generating vectors".into()))?;
    if dims == 0 || vectors.iter().any(|v| v.len() != dims) || samples == 0 {
        return Err(DataError::Invalid("generating vectors must share a positive width".into()));
    }
    let norms: Vec<f64> = vectors.iter().map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12)).collect();
    let mut features = Vec::with_capacity(samples * dims);
    let mut attrs = Vec::with_capacity(samples * vectors.len());
    for _ in 0..samples {
        let x: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(rng)).collect();
        for (w, norm) in vectors.iter().zip(&norms) {
            let margin = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / norm;
            let eps: f64 = if label_noise > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
            attrs.push(if margin + label_noise * eps > 0.0 { 1.0 } else { 0.0 });
        }
        features.extend(x);
    }
    let to_err = |e: crate::nn::NnError| DataError::Invalid(e.to_string());
    Dataset::new(
        Tensor::matrix(samples, dims, features).map_err(to_err)?,
        Labels::Attributes(Tensor::matrix(samples, vectors.len(), attrs).map_err(to_err)?),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(spread: f64) -> SyntheticSpec {
        SyntheticSpec { num_classes: 4, dims: 3, samples_per_class: 5, cluster_spread: spread, inter_cluster_scale: 2.0, informative_dims: None, seed: 9 }
    }

    #[test]
    fn blobs_are_seed_deterministic() {
        assert_eq!(gen_blobs(&spec(1.0)).unwrap(), gen_blobs(&spec(1.0)).unwrap());
        let mut other = spec(1.0);
        other.seed = 10;
        assert_ne!(gen_blobs(&spec(1.0)).unwrap(), gen_blobs(&other).unwrap());
    }

    #[test]
    fn vanishing_spread_collapses_onto_means() {
        let s = spec(1e-12);
        let ds = gen_blobs(&s).unwrap();
        let means = blob_means(&s).unwrap();
        let labels = ds.class_labels().unwrap();
        let mut correct = 0;
        for i in 0..ds.len() {
            let row = ds.features().row(i);
            let m = &means[labels[i]];
            assert!(row.iter().zip(m).all(|(a, b)| (a - b).abs() < 1e-9));
            let nearest = (0..means.len())
                .min_by(|&a, &b| {
                    let da: f64 = row.iter().zip(&means[a]).map(|(x, y)| (x - y).powi(2)).sum();
                    let db: f64 = row.iter().zip(&means[b]).map(|(x, y)| (x - y).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            correct += usize::from(nearest == labels[i]);
        }
        assert_eq!(correct, ds.len());
    }

    #[test]
    fn invalid_blob_spec_rejected() {
        assert!(gen_blobs(&spec(0.0)).is_err());
        let mut s = spec(1.0);
        s.num_classes = 0;
        assert!(gen_blobs(&s).is_err());
    }

    #[test]
    fn identical_vectors_give_identical_columns() {
        let v = vec![vec![0.3, -1.0, 2.0], vec![0.3, -1.0, 2.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = gen_attributes_from_vectors(&v, 50, 0.0, &mut rng).unwrap();
        let Labels::Attributes(t) = ds.labels() else { panic!() };
        assert!((0..50).all(|i| t.row(i)[0] == t.row(i)[1]));
    }

    #[test]
    fn multi_attribute_is_deterministic() {
        let s = MultiAttributeSpec { tasks: 3, dims: 6, samples: 40, latent_rank: 2, label_noise: 0.2, seed: 4 };
        assert_eq!(gen_multi_attribute(&s).unwrap(), gen_multi_attribute(&s).unwrap());
        assert_eq!(gen_multi_attribute(&s).unwrap().num_tasks(), Some(3));
        let bad = MultiAttributeSpec { tasks: 1, ..s };
        assert!(gen_multi_attribute(&bad).is_err());
    }
}
