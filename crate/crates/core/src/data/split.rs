use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::partition::{LocalSplit, PartitionPlan};
use super::{DataError, Dataset};

/// Number of test samples for `n` local samples: `round(n·fraction)`
/// clamped to `1..=n-1`.
pub fn test_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Splits every client's samples into train and test.
///
/// When the dataset has class labels and every class present on a client
/// has at least two local samples, the test quota is apportioned across
/// classes by largest remainder (each class keeping at least one training
/// sample); otherwise the split is a plain shuffle.
pub fn split_local_train_test(
    ds: &Dataset,
    plan: &PartitionPlan,
    test_fraction: f64,
    seed: u64,
) -> Result<PartitionPlan, DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::Invalid(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Vec::with_capacity(plan.clients());
    for (client, indices) in plan.assignments.iter().enumerate() {
        if indices.len() < 2 {
            return Err(DataError::TooFewSamples { client, count: indices.len() });
        }
        let total = test_count(indices.len(), test_fraction);
        let split = match ds.class_labels() {
            Some(labels) => stratified(indices, labels, total, test_fraction, &mut rng),
            None => None,
        }
        .unwrap_or_else(|| unstratified(indices, total, &mut rng));
        splits.push(split);
    }
    Ok(PartitionPlan { assignments: plan.assignments.clone(), splits: Some(splits) })
}

fn unstratified(indices: &[usize], total: usize, rng: &mut ChaCha8Rng) -> LocalSplit {
    let mut idx = indices.to_vec();
    idx.shuffle(rng);
    let mut test = idx[..total].to_vec();
    let mut train = idx[total..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    LocalSplit { train, test }
}

fn stratified(indices: &[usize], labels: &[usize], total: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Option<LocalSplit> {
    let mut classes: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
    classes.sort_unstable();
    classes.dedup();
    let groups: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| indices.iter().copied().filter(|&i| labels[i] == c).collect())
        .collect();
    if groups.iter().any(|g| g.len() < 2) {
        return None;
    }
    let quotas: Vec<f64> = groups.iter().map(|g| g.len() as f64 * fraction).collect();
    let caps: Vec<usize> = groups.iter().map(|g| g.len() - 1).collect();
    let mut counts: Vec<usize> = quotas.iter().zip(&caps).map(|(q, &cap)| (q.floor() as usize).min(cap)).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = total.checked_sub(counts.iter().sum())?;
    while remaining > 0 {
        let before = remaining;
        for &g in &order {
            if remaining > 0 && counts[g] < caps[g] {
                counts[g] += 1;
                remaining -= 1;
            }
        }
        if remaining == before {
            return None;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (group, n) in groups.into_iter().zip(counts) {
        let mut g = group;
        g.shuffle(rng);
        test.extend_from_slice(&g[..n]);
        train.extend_from_slice(&g[n..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Some(LocalSplit { train, test })
}
