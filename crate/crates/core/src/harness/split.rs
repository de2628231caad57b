//! Balanced train/test splits.

use std::collections::BTreeMap;

use super::{HarnessError, Result};
use crate::corpus::DatasetManifest;
use crate::rng;

/// Entry indices of a split, each list in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Picks `n_train` entries per class at random; everything else is test.
pub fn split_indices(
    manifest: &DatasetManifest,
    n_train: usize,
    seed: u64,
) -> Result<SplitIndices> {
    if n_train == 0 {
        return Err(HarnessError::InvalidArgument("n_train must be >= 1".into()));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        by_class.entry(e.label.as_str()).or_default().push(i);
    }
    let mut rng = rng::seeded(seed);
    let mut is_train = vec![false; manifest.len()];
    for (class, mut members) in by_class {
        if members.len() <= n_train {
            return Err(HarnessError::ClassTooSmall {
                class: class.to_owned(),
                size: members.len(),
                needed: n_train + 1,
            });
        }
        rng::shuffle(&mut members, &mut rng);
        for &i in &members[..n_train] {
            is_train[i] = true;
        }
    }
    let (train, test) = (0..manifest.len()).partition(|&i| is_train[i]);
    Ok(SplitIndices { train, test })
}

fn subset(manifest: &DatasetManifest, idx: &[usize]) -> DatasetManifest {
    DatasetManifest {
        name: manifest.name.clone(),
        root: manifest.root.clone(),
        entries: idx.iter().map(|&i| manifest.entries[i].clone()).collect(),
    }
}

/// `(train, test)` manifests with exactly `n_train` images per class in
/// train.
pub fn split_balanced(
    manifest: &DatasetManifest,
    n_train: usize,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    let s = split_indices(manifest, n_train, seed)?;
    Ok((subset(manifest, &s.train), subset(manifest, &s.test)))
}
