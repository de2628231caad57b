//! Bag-of-visual-words image classification: dense SIFT, random
//! codebooks, Gaussian soft assignment, max or average pooling and
//! one-vs-rest linear SVMs, plus an experiment harness for measuring how
//! the dictionary's source corpus affects accuracy.

pub mod classifier;
pub mod codebook;
pub mod corpus;
pub mod encoding;
pub mod features;
pub mod harness;
pub mod rng;

mod binio;
