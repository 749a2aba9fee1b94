//! Stratified fixed-size subsetting with largest-remainder allocation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Essay;
use crate::util::derive_seed;

use super::types::SplitAssignment;
use super::{Result, SplitError};

/// Hamilton (largest-remainder) apportionment of `total` slots across
/// strata proportional to `counts`. Floors of the exact quotas are
/// assigned first; leftover slots go to the largest fractional
/// remainders, ties to the lower stratum index.
pub fn largest_remainder_allocation(counts: &[usize], total: usize) -> Vec<usize> {
    let population: usize = counts.iter().sum();
    if population == 0 || total == 0 {
        return vec![0; counts.len()];
    }
    let quotas: Vec<f64> = counts
        .iter()
        .map(|&c| total as f64 * c as f64 / population as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        alloc[i] += 1;
    }
    alloc
}

/// Draws a (train, val, test) subset of essays stratified over the 16
/// raw proficiency levels.
///
/// Each set's per-stratum allocation is proportional to the full-corpus
/// stratum shares under largest-remainder rounding. Selection within a
/// stratum is a seeded shuffle consumed in train/val/test order, so the
/// three sets are disjoint essay-id sets by construction.
pub fn stratified_subset(
    essays: &[&Essay],
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<SplitAssignment> {
    let mut strata: BTreeMap<u8, Vec<&Essay>> = BTreeMap::new();
    for e in essays {
        strata.entry(e.raw_level).or_default().push(e);
    }
    for members in strata.values_mut() {
        members.sort_by(|a, b| a.id.cmp(&b.id));
    }

    let keys: Vec<u8> = strata.keys().copied().collect();
    let counts: Vec<usize> = keys.iter().map(|k| strata[k].len()).collect();
    let (n_train, n_val, n_test) = sizes;
    let alloc_train = largest_remainder_allocation(&counts, n_train);
    let alloc_val = largest_remainder_allocation(&counts, n_val);
    let alloc_test = largest_remainder_allocation(&counts, n_test);

    for (i, &k) in keys.iter().enumerate() {
        let required = alloc_train[i] + alloc_val[i] + alloc_test[i];
        if required > counts[i] {
            return Err(SplitError::InsufficientSupply {
                stratum: k.to_string(),
                required,
                available: counts[i],
            });
        }
    }

    let mut split = SplitAssignment {
        train: Default::default(),
        val: Default::default(),
        test: Default::default(),
        seed,
        policy: format!(
            "stratified-subset sizes=({n_train},{n_val},{n_test}) strata=raw-level \
             rounding=largest-remainder"
        ),
    };
    for (i, &k) in keys.iter().enumerate() {
        let mut ids: Vec<&str> = strata[&k].iter().map(|e| e.id.as_str()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("subset:{k}")));
        ids.shuffle(&mut rng);
        let mut cursor = ids.into_iter();
        split
            .train
            .extend(cursor.by_ref().take(alloc_train[i]).map(String::from));
        split
            .val
            .extend(cursor.by_ref().take(alloc_val[i]).map(String::from));
        split
            .test
            .extend(cursor.by_ref().take(alloc_test[i]).map(String::from));
    }
    Ok(split)
}
