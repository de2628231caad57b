//! Experiment protocols: cross-base dictionaries and the class-diversity
//! sweep, with balanced splits, repeated runs and confidence intervals.
//!
//! Every run is identified by one integer. The split, dictionary and SVM
//! seeds are derived from it by fixed offsets (see [`RunSeeds`]), so a
//! native and a cross-base configuration evaluated under the same run
//! seed share their train/test split.

pub mod report;
pub mod split;
pub mod stats;
mod store;
pub mod synth;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use report::{append_csv, write_rows, SummaryRow, TrialResult, CSV_HEADER};
pub use split::{split_balanced, split_indices, SplitIndices};
pub use stats::confidence_interval;
pub use store::DescriptorStore;

use crate::classifier::{train_ovr, ClassifierError, TrainConfig};
use crate::codebook::{build_random_codebook, Codebook, CodebookError};
use crate::corpus::{class_permutation, CorpusError, DatasetManifest};
use crate::encoding::{encode_image, BowVector, EncodingError, EncodingParams};
use crate::features::{FeaturesError, GridParams};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Features(#[from] FeaturesError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("class {class} has {size} images; the split needs at least {needed}")]
    ClassTooSmall {
        class: String,
        size: usize,
        needed: usize,
    },
    #[error("{0}")]
    InvalidArgument(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub grid: GridParams,
    pub k: usize,
    pub encoding: EncodingParams,
    /// The seed field is replaced per run.
    pub train: TrainConfig,
    pub alpha: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            grid: GridParams::default(),
            k: 1000,
            encoding: EncodingParams::default(),
            train: TrainConfig::default(),
            alpha: 0.05,
        }
    }
}

const DICTIONARY_SEED_OFFSET: u64 = 0x0D1C_0000;
const SVM_SEED_OFFSET: u64 = 0x05F0_0000;

/// Seeds of one run, all derived from a single run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub split: u64,
    pub dictionary: u64,
    pub svm: u64,
}

impl RunSeeds {
    pub fn derive(run_seed: u64) -> Self {
        RunSeeds {
            split: run_seed,
            dictionary: run_seed.wrapping_add(DICTIONARY_SEED_OFFSET),
            svm: run_seed.wrapping_add(SVM_SEED_OFFSET),
        }
    }
}

/// `runs` consecutive run seeds starting at `base`.
pub fn run_seeds(base: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Random codebook over every descriptor of every image in `source`.
pub fn build_dictionary(
    store: &DescriptorStore,
    source: &DatasetManifest,
    k: usize,
    seed: u64,
) -> Result<Codebook> {
    let sets = store.load_all(source)?;
    let pool: Vec<_> = sets.iter().map(|s| (**s).clone()).collect();
    Ok(build_random_codebook(&pool, k, seed)?.with_source(source.name.clone(), source.classes()))
}

/// Bag-of-words vectors for every entry of `manifest`, in manifest order.
pub fn encode_manifest(
    store: &DescriptorStore,
    manifest: &DatasetManifest,
    codebook: &Codebook,
    params: &EncodingParams,
) -> Result<Vec<BowVector>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let set = store.load(manifest, e)?;
            let mut bow = encode_image(&set, codebook, params)?;
            bow.image = e.path.clone();
            Ok(bow)
        })
        .collect()
}

/// Splits pre-encoded vectors of `manifest`, trains on the train part and
/// returns test accuracy.
pub fn evaluate_encoded(
    bows: &[BowVector],
    manifest: &DatasetManifest,
    n_train: usize,
    run_seed: u64,
    train: &TrainConfig,
) -> Result<f64> {
    let seeds = RunSeeds::derive(run_seed);
    let s = split_indices(manifest, n_train, seeds.split)?;
    let pick = |idx: &[usize]| -> (Vec<&[f64]>, Vec<&str>) {
        idx.iter()
            .map(|&i| (bows[i].h.as_slice(), manifest.entries[i].label.as_str()))
            .unzip()
    };
    let (train_x, train_y) = pick(&s.train);
    let (test_x, test_y) = pick(&s.test);
    let cfg = TrainConfig {
        seed: seeds.svm,
        ..*train
    };
    let model = train_ovr(&train_x, &train_y, &cfg)?;
    Ok(model.accuracy(&test_x, &test_y)?)
}

/// Encodes `target` with the given dictionary, trains on a balanced split
/// of `n_train` images per class and reports test accuracy.
pub fn run_trial(
    store: &DescriptorStore,
    dictionary: &Codebook,
    target: &DatasetManifest,
    n_train: usize,
    run_seed: u64,
    params: &PipelineParams,
) -> Result<TrialResult> {
    let bows = encode_manifest(store, target, dictionary, &params.encoding)?;
    let accuracy = evaluate_encoded(&bows, target, n_train, run_seed, &params.train)?;
    Ok(TrialResult {
        accuracy,
        seed: run_seed,
        n_train,
        dictionary_id: dictionary.id(),
    })
}

struct RowLabels<'a> {
    experiment: &'a str,
    dict_source: &'a str,
    dict_class_labels: Vec<String>,
    target: &'a str,
}

fn summarize(
    labels: RowLabels<'_>,
    trials: Vec<TrialResult>,
    params: &PipelineParams,
) -> Result<SummaryRow> {
    let accs: Vec<f64> = trials.iter().map(|t| t.accuracy).collect();
    let (mean_acc, ci_low, ci_high) = if accs.len() >= 2 {
        confidence_interval(&accs, params.alpha)?
    } else {
        let m = accs.first().copied().unwrap_or(f64::NAN);
        (m, m, m)
    };
    Ok(SummaryRow {
        experiment: labels.experiment.to_owned(),
        dict_source: labels.dict_source.to_owned(),
        dict_classes: labels.dict_class_labels.len(),
        dict_class_labels: labels.dict_class_labels,
        target: labels.target.to_owned(),
        n_train: trials.first().map_or(0, |t| t.n_train),
        k: params.k,
        sigma: params.encoding.sigma,
        assignment: params.encoding.assignment.as_str().to_owned(),
        pooling: params.encoding.pooling.as_str().to_owned(),
        n_runs: trials.len(),
        mean_acc,
        ci_low,
        ci_high,
        trials,
    })
}

/// For each run seed: one dictionary from `source`, `target` encoded
/// once, then one trial per `n_train`. Returns trials grouped by
/// `n_train` (outer) and run (inner).
fn trials_for_source(
    store: &DescriptorStore,
    source: &DatasetManifest,
    target: &DatasetManifest,
    n_train_values: &[usize],
    seeds: &[u64],
    params: &PipelineParams,
) -> Result<Vec<Vec<TrialResult>>> {
    let mut grouped = vec![Vec::with_capacity(seeds.len()); n_train_values.len()];
    for &run_seed in seeds {
        let cb = build_dictionary(
            store,
            source,
            params.k,
            RunSeeds::derive(run_seed).dictionary,
        )?;
        let bows = encode_manifest(store, target, &cb, &params.encoding)?;
        let accs = n_train_values
            .par_iter()
            .map(|&n| evaluate_encoded(&bows, target, n, run_seed, &params.train))
            .collect::<Result<Vec<_>>>()?;
        for (slot, (&n_train, accuracy)) in grouped.iter_mut().zip(n_train_values.iter().zip(accs))
        {
            slot.push(TrialResult {
                accuracy,
                seed: run_seed,
                n_train,
                dictionary_id: cb.id(),
            });
        }
    }
    Ok(grouped)
}

fn check_protocol(n_train_values: &[usize], seeds: &[u64]) -> Result<()> {
    if n_train_values.is_empty() {
        return Err(HarnessError::InvalidArgument(
            "no n_train values given".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(HarnessError::InvalidArgument("no run seeds given".into()));
    }
    Ok(())
}

/// Accuracy on `target` with dictionaries drawn from `dict_source`, one
/// row per `n_train`. With `include_native`, rows for dictionaries drawn
/// from `target` itself come first.
pub fn cross_base_experiment(
    store: &DescriptorStore,
    dict_source: &DatasetManifest,
    target: &DatasetManifest,
    n_train_values: &[usize],
    seeds: &[u64],
    params: &PipelineParams,
    include_native: bool,
) -> Result<Vec<SummaryRow>> {
    check_protocol(n_train_values, seeds)?;
    let mut sources = Vec::new();
    if include_native {
        sources.push(target);
    }
    sources.push(dict_source);
    let mut rows = Vec::new();
    for source in sources {
        let grouped = trials_for_source(store, source, target, n_train_values, seeds, params)?;
        for trials in grouped {
            let labels = RowLabels {
                experiment: "crossbase",
                dict_source: &source.name,
                dict_class_labels: source.classes(),
                target: &target.name,
            };
            rows.push(summarize(labels, trials, params)?);
        }
    }
    Ok(rows)
}

/// Dictionaries drawn from nested class subsets of `source` (prefixes of
/// the permutation given by `class_seed`), each evaluated on `target`.
#[allow(clippy::too_many_arguments)]
pub fn diversity_sweep(
    store: &DescriptorStore,
    source: &DatasetManifest,
    class_counts: &[usize],
    target: &DatasetManifest,
    n_train: usize,
    seeds: &[u64],
    class_seed: u64,
    params: &PipelineParams,
) -> Result<Vec<SummaryRow>> {
    check_protocol(&[n_train], seeds)?;
    let order = class_permutation(source, class_seed);
    if class_counts.is_empty() {
        return Err(HarnessError::InvalidArgument(
            "no class counts given".into(),
        ));
    }
    if class_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::InvalidArgument(
            "class counts must be strictly ascending".into(),
        ));
    }
    let (&first, &last) = (class_counts.first().unwrap(), class_counts.last().unwrap());
    if first == 0 || last > order.len() {
        return Err(CorpusError::ClassCountOutOfRange {
            requested: if first == 0 { 0 } else { last },
            available: order.len(),
        }
        .into());
    }
    let mut rows = Vec::with_capacity(class_counts.len());
    for &count in class_counts {
        let chosen = order[..count].to_vec();
        let subset = source.filter_classes(&chosen);
        let mut grouped = trials_for_source(store, &subset, target, &[n_train], seeds, params)?;
        let labels = RowLabels {
            experiment: "sweep",
            dict_source: &source.name,
            dict_class_labels: chosen,
            target: &target.name,
        };
        rows.push(summarize(labels, grouped.remove(0), params)?);
    }
    Ok(rows)
}
