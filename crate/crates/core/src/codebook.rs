//! Visual dictionaries drawn by seeded random sampling of descriptors.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::binio;
use crate::features::{Descriptor, DescriptorSet, DESCRIPTOR_LEN};
use crate::rng;

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("descriptor pool holds {available} descriptors, fewer than k = {k}")]
    PoolTooSmall { available: usize, k: usize },
    #[error("a codebook needs at least one word")]
    Empty,
    #[error("codebook file: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, CodebookError>;

/// Position of a sampled word in the flattened pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordOrigin {
    pub set: usize,
    pub point: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    words: Vec<Descriptor>,
    pub source_name: String,
    pub source_classes: Vec<String>,
    pub seed: u64,
}

/// Euclidean distances from one descriptor to every word.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile {
    pub distances: Vec<f64>,
}

impl DistanceProfile {
    pub fn new(distances: Vec<f64>) -> Self {
        DistanceProfile { distances }
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

#[inline]
fn squared_l2(a: &[u8; DESCRIPTOR_LEN], b: &[u8; DESCRIPTOR_LEN]) -> u32 {
    // at most 255² · 128 < 2³²
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i32 - y as i32;
            (d * d) as u32
        })
        .sum()
}

impl Codebook {
    pub fn new(
        words: Vec<Descriptor>,
        source_name: impl Into<String>,
        source_classes: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        if words.is_empty() {
            return Err(CodebookError::Empty);
        }
        Ok(Codebook {
            words,
            source_name: source_name.into(),
            source_classes,
            seed,
        })
    }

    pub fn with_source(mut self, name: impl Into<String>, classes: Vec<String>) -> Self {
        self.source_name = name.into();
        self.source_classes = classes;
        self
    }

    pub fn k(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[Descriptor] {
        &self.words
    }

    /// Short provenance tag carried by encoded vectors.
    pub fn id(&self) -> String {
        format!(
            "{}:{}c:k{}:seed{}",
            self.source_name,
            self.source_classes.len(),
            self.k(),
            self.seed
        )
    }

    pub fn distances_to_words(&self, d: &Descriptor) -> DistanceProfile {
        DistanceProfile::new(
            self.words
                .iter()
                .map(|w| (squared_l2(&d.0, &w.0) as f64).sqrt())
                .collect(),
        )
    }

    /// Exact integer squared distances to every word, written into `out`.
    pub fn squared_distances_into(&self, d: &Descriptor, out: &mut Vec<u32>) {
        out.clear();
        out.extend(self.words.iter().map(|w| squared_l2(&d.0, &w.0)));
    }

    /// Writes the codebook file: magic `BOWCODEB`, version u32, k u32,
    /// dims u32, seed u64, source name, class list (count u32 then
    /// length-prefixed strings), then the k × 128 byte word matrix.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(w, VERSION)?;
        binio::write_len(w, self.k())?;
        binio::write_u32(w, DESCRIPTOR_LEN as u32)?;
        binio::write_u64(w, self.seed)?;
        binio::write_str(w, &self.source_name)?;
        binio::write_len(w, self.source_classes.len())?;
        for c in &self.source_classes {
            binio::write_str(w, c)?;
        }
        for word in &self.words {
            w.write_all(&word.0)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        binio::expect_magic(r, MAGIC, "codebook")?;
        binio::expect_version(r, VERSION, "codebook")?;
        let k = binio::read_u32(r)? as usize;
        let dims = binio::read_u32(r)? as usize;
        if dims != DESCRIPTOR_LEN {
            return Err(binio::bad_data(format!("word dims {dims}, expected 128")).into());
        }
        let seed = binio::read_u64(r)?;
        let source_name = binio::read_str(r)?;
        let n_classes = binio::read_u32(r)? as usize;
        let source_classes = (0..n_classes)
            .map(|_| binio::read_str(r))
            .collect::<io::Result<Vec<_>>>()?;
        let words = (0..k)
            .map(|_| binio::read_array(r).map(Descriptor))
            .collect::<io::Result<Vec<_>>>()?;
        Codebook::new(words, source_name, source_classes, seed)
    }
}

const MAGIC: &[u8; 8] = b"BOWCODEB";
const VERSION: u32 = 1;

/// Picks `k` distinct (set, point) positions uniformly from a pool whose
/// sets hold `counts[i]` descriptors each. Positions are flattened in set
/// order, then point order.
pub fn sample_origins(counts: &[usize], k: usize, seed: u64) -> Result<Vec<WordOrigin>> {
    let total: usize = counts.iter().sum();
    if k == 0 {
        return Err(CodebookError::Empty);
    }
    if total < k {
        return Err(CodebookError::PoolTooSmall {
            available: total,
            k,
        });
    }
    let mut offsets = Vec::with_capacity(counts.len());
    let mut acc = 0;
    for &c in counts {
        offsets.push(acc);
        acc += c;
    }
    let flat = rng::sample_without_replacement(total, k, &mut rng::seeded(seed));
    Ok(flat
        .into_iter()
        .map(|i| {
            // the last set starting at or before i; empty sets share their
            // successor's offset so they are never picked
            let set = offsets.partition_point(|&o| o <= i) - 1;
            WordOrigin {
                set,
                point: i - offsets[set],
            }
        })
        .collect())
}

/// Draws `k` descriptors uniformly without replacement from the pool.
/// Provenance names are left empty; see [`Codebook::with_source`].
pub fn build_random_codebook(pool: &[DescriptorSet], k: usize, seed: u64) -> Result<Codebook> {
    let counts: Vec<usize> = pool.iter().map(DescriptorSet::len).collect();
    let words = sample_origins(&counts, k, seed)?
        .into_iter()
        .map(|o| pool[o.set].descriptors[o.point].clone())
        .collect();
    Codebook::new(words, "", Vec::new(), seed)
}
