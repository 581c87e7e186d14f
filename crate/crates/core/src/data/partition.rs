use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum Heterogeneity {
    /// Every client holds exactly `classes_per_client` classes.
    Pathological { classes_per_client: usize },
    /// Per-class client shares drawn from `Dirichlet(beta, ..., beta)`.
    /// Draws are repeated until every client has at least `min_samples`.
    Dirichlet {
        beta: f64,
        #[serde(default)]
        min_samples: usize,
    },
    /// Uniformly shuffled, evenly sized parts.
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityConfig {
    pub scheme: Heterogeneity,
    pub clients: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-client sample indices into a source dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub assignments: Vec<Vec<usize>>,
    /// Filled in by [`super::split_local_train_test`].
    pub splits: Option<Vec<LocalSplit>>,
}

impl PartitionPlan {
    pub fn clients(&self) -> usize {
        self.assignments.len()
    }
}

const MAX_DIRICHLET_DRAWS: usize = 1000;

pub fn partition(ds: &Dataset, cfg: &HeterogeneityConfig) -> Result<PartitionPlan, DataError> {
    match cfg.scheme {
        Heterogeneity::Pathological { .. } => partition_pathological(ds, cfg),
        Heterogeneity::Dirichlet { .. } => partition_dirichlet(ds, cfg),
        Heterogeneity::Iid => partition_iid(ds, cfg),
    }
}

fn class_buckets(ds: &Dataset) -> Result<(usize, Vec<Vec<usize>>), DataError> {
    let labels = ds.class_labels().ok_or(DataError::NotClassification)?;
    let k = ds.num_classes().unwrap();
    let mut buckets = vec![Vec::new(); k];
    for (i, &y) in labels.iter().enumerate() {
        buckets[y].push(i);
    }
    Ok((k, buckets))
}

/// Classes are dealt round-robin from a seeded class permutation: client
/// `c` takes slots `c·k .. c·k + k` modulo `K`. A class held by several
/// clients is shuffled and divided into near-equal contiguous chunks.
pub fn partition_pathological(ds: &Dataset, cfg: &HeterogeneityConfig) -> Result<PartitionPlan, DataError> {
    let Heterogeneity::Pathological { classes_per_client: k } = cfg.scheme else {
        return Err(DataError::Invalid("expected a pathological scheme".into()));
    };
    if cfg.clients == 0 {
        return Err(DataError::Invalid("at least one client required".into()));
    }
    let (num_classes, mut buckets) = class_buckets(ds)?;
    if k == 0 || k > num_classes {
        return Err(DataError::TooManyClasses { requested: k, available: num_classes });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.shuffle(&mut rng);

    let client_classes: Vec<Vec<usize>> = (0..cfg.clients)
        .map(|c| (0..k).map(|j| order[(c * k + j) % num_classes]).collect())
        .collect();
    let mut holders = vec![Vec::new(); num_classes];
    for (c, classes) in client_classes.iter().enumerate() {
        for &cls in classes {
            holders[cls].push(c);
        }
    }

    let mut assignments = vec![Vec::new(); cfg.clients];
    for (cls, owners) in holders.iter().enumerate() {
        if owners.is_empty() {
            continue;
        }
        let bucket = &mut buckets[cls];
        bucket.shuffle(&mut rng);
        let (base, extra) = (bucket.len() / owners.len(), bucket.len() % owners.len());
        let mut start = 0;
        for (pos, &c) in owners.iter().enumerate() {
            let take = base + usize::from(pos < extra);
            if take == 0 {
                return Err(DataError::EmptyClient { client: c });
            }
            assignments[c].extend_from_slice(&bucket[start..start + take]);
            start += take;
        }
    }
    for a in &mut assignments {
        a.sort_unstable();
    }
    Ok(PartitionPlan { assignments, splits: None })
}

/// Largest-remainder apportionment of `total` items by `shares`
/// (ties broken toward the lower index).
pub fn largest_remainder(total: usize, shares: &[f64]) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let quotas: Vec<f64> = shares.iter().map(|s| total as f64 * s / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn dirichlet_draw(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, clients: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..clients).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = g.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        for v in &mut g {
            *v /= sum;
        }
    } else {
        // every component underflowed: put all mass on one client
        let winner = rand::Rng::random_range(rng, 0..clients);
        g.iter_mut().enumerate().for_each(|(i, v)| *v = if i == winner { 1.0 } else { 0.0 });
    }
    g
}

/// For each class, shares across clients come from `Dirichlet(beta)`; class
/// samples are split by those shares with largest-remainder rounding, so
/// every sample is assigned exactly once.
pub fn partition_dirichlet(ds: &Dataset, cfg: &HeterogeneityConfig) -> Result<PartitionPlan, DataError> {
    let Heterogeneity::Dirichlet { beta, min_samples } = cfg.scheme else {
        return Err(DataError::Invalid("expected a dirichlet scheme".into()));
    };
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(DataError::InvalidBeta(beta));
    }
    if cfg.clients == 0 {
        return Err(DataError::Invalid("at least one client required".into()));
    }
    if min_samples * cfg.clients > ds.len() {
        return Err(DataError::Invalid(format!(
            "{} clients with at least {min_samples} samples need more than {} samples",
            cfg.clients,
            ds.len()
        )));
    }
    let (_, buckets) = class_buckets(ds)?;
    let gamma = Gamma::new(beta, 1.0).map_err(|_| DataError::InvalidBeta(beta))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..MAX_DIRICHLET_DRAWS {
        let mut assignments = vec![Vec::new(); cfg.clients];
        for bucket in &buckets {
            let mut idx = bucket.clone();
            idx.shuffle(&mut rng);
            let shares = dirichlet_draw(&mut rng, &gamma, cfg.clients);
            let counts = largest_remainder(idx.len(), &shares);
            let mut start = 0;
            for (c, n) in counts.into_iter().enumerate() {
                assignments[c].extend_from_slice(&idx[start..start + n]);
                start += n;
            }
        }
        if assignments.iter().all(|a| a.len() >= min_samples) {
            for a in &mut assignments {
                a.sort_unstable();
            }
            return Ok(PartitionPlan { assignments, splits: None });
        }
    }
    Err(DataError::Invalid(format!(
        "no Dirichlet draw gave every client {min_samples} samples in {MAX_DIRICHLET_DRAWS} attempts"
    )))
}

/// Shuffled, near-equal parts covering every sample.
pub fn partition_iid(ds: &Dataset, cfg: &HeterogeneityConfig) -> Result<PartitionPlan, DataError> {
    if cfg.clients == 0 || cfg.clients > ds.len() {
        return Err(DataError::Invalid(format!("cannot split {} samples into {} parts", ds.len(), cfg.clients)));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let (base, extra) = (idx.len() / cfg.clients, idx.len() % cfg.clients);
    let mut start = 0;
    let assignments = (0..cfg.clients)
        .map(|c| {
            let take = base + usize::from(c < extra);
            let mut part = idx[start..start + take].to_vec();
            start += take;
            part.sort_unstable();
            part
        })
        .collect();
    Ok(PartitionPlan { assignments, splits: None })
}

/// Shannon entropy (nats) of the label histogram of `indices`.
pub fn label_entropy(ds: &Dataset, indices: &[usize]) -> Result<f64, DataError> {
    let labels = ds.class_labels().ok_or(DataError::NotClassification)?;
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; ds.num_classes().unwrap()];
    for &i in indices {
        counts[labels[i]] += 1;
    }
    let n = indices.len() as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

pub fn mean_label_entropy(ds: &Dataset, plan: &PartitionPlan) -> Result<f64, DataError> {
    let mut total = 0.0;
    for a in &plan.assignments {
        total += label_entropy(ds, a)?;
    }
    Ok(total / plan.clients() as f64)
}
