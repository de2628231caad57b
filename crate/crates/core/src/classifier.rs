//! One-vs-rest linear SVM trained by stochastic subgradient descent on the
//! L2-regularized hinge loss.
//!
//! Each binary problem minimizes
//!
//! ```text
//! lambda/2 |w|^2 + 1/n sum_i max(0, 1 - y_i (w . x_i + b)),   lambda = 1 / (C n)
//! ```
//!
//! with step `1 / (lambda t)`. The bias is handled as the weight of an
//! extra constant-1 feature, so it is regularized together with `w`.

use std::collections::BTreeSet;
use std::io::{self, Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::binio;
use crate::encoding::BowVector;
use crate::rng;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training needs at least two distinct labels, got {0}")]
    TooFewClasses(usize),
    #[error("no vectors to train or evaluate on")]
    Empty,
    #[error("vector dimension {found} does not match expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{vectors} vectors but {labels} labels")]
    LengthMismatch { vectors: usize, labels: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

impl AsRef<[f64]> for BowVector {
    fn as_ref(&self) -> &[f64] {
        &self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub c_reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c_reg: 1.0,
            epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c_reg > 0.0 && self.c_reg.is_finite()) {
            return Err(ClassifierError::InvalidConfig(format!(
                "C must be positive, got {}",
                self.c_reg
            )));
        }
        if self.epochs == 0 {
            return Err(ClassifierError::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    labels: Vec<String>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Primal hinge objective of one binary problem.
pub fn hinge_objective<V: AsRef<[f64]>>(
    w: &[f64],
    b: f64,
    xs: &[V],
    ys: &[f64],
    lambda: f64,
) -> f64 {
    let reg = 0.5 * lambda * (dot(w, w) + b * b);
    let loss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(w, x.as_ref()) + b)).max(0.0))
        .sum();
    reg + loss / xs.len() as f64
}

/// Trains one binary classifier on labels `ys` in {-1, +1}, visiting
/// samples in the given order. Returns `(w, b)`.
fn train_binary<V: AsRef<[f64]>>(
    xs: &[V],
    ys: &[f64],
    order: &[usize],
    lambda: f64,
) -> (Vec<f64>, f64) {
    let dim = xs[0].as_ref().len();
    // w = scale * v keeps the per-step shrink O(1)
    let mut v = vec![0.0; dim];
    let mut v_bias = 0.0;
    let mut scale = 1.0;
    for (step, &i) in order.iter().enumerate() {
        let t = (step + 1) as f64;
        let eta = 1.0 / (lambda * t);
        let x = xs[i].as_ref();
        let margin = ys[i] * scale * (dot(&v, x) + v_bias);
        if step == 0 {
            // (1 - 1/t) = 0 on the first step
            v.iter_mut().for_each(|a| *a = 0.0);
            v_bias = 0.0;
            scale = 1.0;
        } else {
            scale *= 1.0 - 1.0 / t;
        }
        if margin < 1.0 {
            let g = eta * ys[i] / scale;
            v.iter_mut().zip(x).for_each(|(a, &xj)| *a += g * xj);
            v_bias += g;
        }
        if scale < 1e-9 {
            v.iter_mut().for_each(|a| *a *= scale);
            v_bias *= scale;
            scale = 1.0;
        }
    }
    v.iter_mut().for_each(|a| *a *= scale);
    (v, v_bias * scale)
}

fn check_dims<V: AsRef<[f64]>>(vectors: &[V], expected: usize) -> Result<()> {
    for v in vectors {
        let found = v.as_ref().len();
        if found != expected {
            return Err(ClassifierError::DimensionMismatch { expected, found });
        }
    }
    Ok(())
}

/// Visiting order for all epochs: a fresh seeded shuffle per epoch.
fn epoch_order(n: usize, cfg: &TrainConfig) -> Vec<usize> {
    let mut rng = rng::seeded(cfg.seed);
    let mut order = Vec::with_capacity(n * cfg.epochs);
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        rng::shuffle(&mut perm, &mut rng);
        order.extend_from_slice(&perm);
    }
    order
}

/// Trains one binary classifier per distinct label.
pub fn train_ovr<V, L>(vectors: &[V], labels: &[L], cfg: &TrainConfig) -> Result<LinearModel>
where
    V: AsRef<[f64]> + Sync,
    L: AsRef<str>,
{
    cfg.validate()?;
    if vectors.is_empty() {
        return Err(ClassifierError::Empty);
    }
    if vectors.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            vectors: vectors.len(),
            labels: labels.len(),
        });
    }
    let dim = vectors[0].as_ref().len();
    check_dims(vectors, dim)?;
    let classes: Vec<String> = labels
        .iter()
        .map(|l| l.as_ref())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_owned)
        .collect();
    if classes.len() < 2 {
        return Err(ClassifierError::TooFewClasses(classes.len()));
    }
    let n = vectors.len();
    let lambda = 1.0 / (cfg.c_reg * n as f64);
    let order = epoch_order(n, cfg);
    let class_of: Vec<usize> = labels
        .iter()
        .map(|l| {
            classes
                .binary_search_by(|c| c.as_str().cmp(l.as_ref()))
                .unwrap()
        })
        .collect();
    let (weights, biases) = (0..classes.len())
        .into_par_iter()
        .map(|c| {
            let ys: Vec<f64> = class_of
                .iter()
                .map(|&k| if k == c { 1.0 } else { -1.0 })
                .collect();
            train_binary(vectors, &ys, &order, lambda)
        })
        .unzip();
    Ok(LinearModel {
        labels: classes,
        weights,
        biases,
    })
}

impl LinearModel {
    pub fn new(labels: Vec<String>, weights: Vec<Vec<f64>>, biases: Vec<f64>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(ClassifierError::TooFewClasses(labels.len()));
        }
        if weights.len() != labels.len() || biases.len() != labels.len() {
            return Err(ClassifierError::LengthMismatch {
                vectors: weights.len(),
                labels: labels.len(),
            });
        }
        check_dims(&weights, weights[0].len())?;
        Ok(LinearModel {
            labels,
            weights,
            biases,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self, class: usize) -> (&[f64], f64) {
        (&self.weights[class], self.biases[class])
    }

    /// Per-class decision values `w_c . v + b_c`.
    pub fn scores(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, v) + b)
            .collect())
    }

    /// Label with the highest score; ties go to the first label in sorted order.
    pub fn predict(&self, v: &[f64]) -> Result<&str> {
        let scores = self.scores(v)?;
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        Ok(&self.labels[best])
    }

    /// Fraction of `vectors` predicted as their label.
    pub fn accuracy<V: AsRef<[f64]>, L: AsRef<str>>(
        &self,
        vectors: &[V],
        labels: &[L],
    ) -> Result<f64> {
        if vectors.is_empty() {
            return Err(ClassifierError::Empty);
        }
        if vectors.len() != labels.len() {
            return Err(ClassifierError::LengthMismatch {
                vectors: vectors.len(),
                labels: labels.len(),
            });
        }
        let mut correct = 0usize;
        for (v, l) in vectors.iter().zip(labels) {
            if self.predict(v.as_ref())? == l.as_ref() {
                correct += 1;
            }
        }
        Ok(correct as f64 / vectors.len() as f64)
    }

    /// Layout: magic `BOWLNSVM`, version u32, C u32, k u32, C labels
    /// (u32-length-prefixed), then per class k weights and the bias as f64.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(w, VERSION)?;
        binio::write_len(w, self.labels.len())?;
        binio::write_len(w, self.dim())?;
        for l in &self.labels {
            binio::write_str(w, l)?;
        }
        for (ws, &b) in self.weights.iter().zip(&self.biases) {
            for &x in ws {
                binio::write_f64(w, x)?;
            }
            binio::write_f64(w, b)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        binio::expect_magic(r, MAGIC, "model")?;
        binio::expect_version(r, VERSION, "model")?;
        let c = binio::read_u32(r)? as usize;
        let k = binio::read_u32(r)? as usize;
        let labels = (0..c)
            .map(|_| binio::read_str(r))
            .collect::<io::Result<Vec<_>>>()?;
        let mut weights = Vec::with_capacity(c);
        let mut biases = Vec::with_capacity(c);
        for _ in 0..c {
            weights.push(
                (0..k)
                    .map(|_| binio::read_f64(r))
                    .collect::<io::Result<Vec<_>>>()?,
            );
            biases.push(binio::read_f64(r)?);
        }
        LinearModel::new(labels, weights, biases)
    }
}

const MAGIC: &[u8; 8] = b"BOWLNSVM";
const VERSION: u32 = 1;
