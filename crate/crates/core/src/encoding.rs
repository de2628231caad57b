//! Assignment of descriptors to visual words and pooling into one
//! bag-of-words vector per image.
//!
//! Soft assignment weights each word by a Gaussian kernel of its distance
//! to the descriptor, normalized over all words:
//!
//! ```text
//! alpha_j = exp(-d_j^2 / 2 sigma^2) / sum_l exp(-d_l^2 / 2 sigma^2)
//! ```
//!
//! The kernel's `1 / (sqrt(2 pi) sigma)` factor cancels in the ratio and
//! is omitted. Before exponentiating, the smallest squared distance is
//! subtracted from all of them; the ratio is unchanged and the closest
//! word always gets `exp(0) = 1`, so byte-scale SIFT distances (squared
//! values up to ~8.3e6) never underflow the whole row to zero.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::binio;
use crate::codebook::{Codebook, DistanceProfile};
use crate::features::DescriptorSet;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("cannot assign against an empty distance profile")]
    EmptyProfile,
    #[error("cannot pool an empty set of assignment rows")]
    NoRows,
    #[error("assignment rows have inconsistent lengths ({expected} vs {found})")]
    RowLength { expected: usize, found: usize },
    #[error("bow file: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, EncodingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assignment {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pooling {
    Average,
    Max,
}

impl Assignment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Assignment::Hard => "hard",
            Assignment::Soft => "soft",
        }
    }
}

impl Pooling {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pooling::Average => "average",
            Pooling::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingParams {
    pub sigma: f64,
    pub assignment: Assignment,
    pub pooling: Pooling,
    /// Scale each pooled vector to unit L2 norm. Off by default.
    pub l2_normalize: bool,
}

impl Default for EncodingParams {
    fn default() -> Self {
        EncodingParams {
            sigma: 60.0,
            assignment: Assignment::Soft,
            pooling: Pooling::Max,
            l2_normalize: false,
        }
    }
}

impl EncodingParams {
    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(EncodingError::InvalidSigma(sigma))
    }
}

/// Membership of one descriptor in each of the k words.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentRow {
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BowVector {
    pub h: Vec<f64>,
    pub image: String,
    pub codebook_id: String,
}

impl BowVector {
    pub fn k(&self) -> usize {
        self.h.len()
    }
}

/// Kernel weights for squared distances, written to `out` and normalized.
fn soft_weights(sq: impl Iterator<Item = f64> + Clone, sigma: f64, out: &mut Vec<f64>) {
    let min = sq.clone().fold(f64::INFINITY, f64::min);
    let inv = 1.0 / (2.0 * sigma * sigma);
    out.clear();
    out.extend(sq.map(|d2| (-(d2 - min) * inv).exp()));
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|a| *a /= total);
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, v) in values.enumerate() {
        // strict comparison keeps the lowest index on ties
        if v < best.1 {
            best = (j, v);
        }
    }
    best.0
}

pub fn soft_assign(profile: &DistanceProfile, sigma: f64) -> Result<AssignmentRow> {
    check_sigma(sigma)?;
    if profile.is_empty() {
        return Err(EncodingError::EmptyProfile);
    }
    let mut alphas = Vec::with_capacity(profile.len());
    soft_weights(profile.distances.iter().map(|d| d * d), sigma, &mut alphas);
    Ok(AssignmentRow { alphas })
}

/// One-hot row at the nearest word; ties go to the lowest index.
pub fn hard_assign(profile: &DistanceProfile) -> Result<AssignmentRow> {
    if profile.is_empty() {
        return Err(EncodingError::EmptyProfile);
    }
    let mut alphas = vec![0.0; profile.len()];
    alphas[argmin(profile.distances.iter().copied())] = 1.0;
    Ok(AssignmentRow { alphas })
}

fn row_width(rows: &[AssignmentRow]) -> Result<usize> {
    let k = rows.first().ok_or(EncodingError::NoRows)?.alphas.len();
    for r in rows {
        if r.alphas.len() != k {
            return Err(EncodingError::RowLength {
                expected: k,
                found: r.alphas.len(),
            });
        }
    }
    Ok(k)
}

/// `h_j = max_i alpha_ij`.
pub fn max_pool(rows: &[AssignmentRow]) -> Result<Vec<f64>> {
    let k = row_width(rows)?;
    let mut h = vec![f64::NEG_INFINITY; k];
    for r in rows {
        for (hj, &a) in h.iter_mut().zip(&r.alphas) {
            *hj = hj.max(a);
        }
    }
    Ok(h)
}

/// `h_j = (1/N) sum_i alpha_ij`.
pub fn average_pool(rows: &[AssignmentRow]) -> Result<Vec<f64>> {
    let k = row_width(rows)?;
    let mut h = vec![0.0; k];
    for r in rows {
        for (hj, &a) in h.iter_mut().zip(&r.alphas) {
            *hj += a;
        }
    }
    let n = rows.len() as f64;
    h.iter_mut().for_each(|x| *x /= n);
    Ok(h)
}

/// Running pooled accumulator; rows are folded in one at a time so the
/// N × k assignment matrix is never stored.
struct Pooler {
    pooling: Pooling,
    acc: Vec<f64>,
    rows: usize,
}

impl Pooler {
    fn new(pooling: Pooling, k: usize) -> Self {
        let init = match pooling {
            Pooling::Max => f64::NEG_INFINITY,
            Pooling::Average => 0.0,
        };
        Pooler {
            pooling,
            acc: vec![init; k],
            rows: 0,
        }
    }

    fn push(&mut self, alphas: &[f64]) {
        self.rows += 1;
        match self.pooling {
            Pooling::Max => self
                .acc
                .iter_mut()
                .zip(alphas)
                .for_each(|(h, &a)| *h = h.max(a)),
            Pooling::Average => self.acc.iter_mut().zip(alphas).for_each(|(h, &a)| *h += a),
        }
    }

    fn push_one_hot(&mut self, j: usize) {
        self.rows += 1;
        match self.pooling {
            Pooling::Max => {
                for (i, h) in self.acc.iter_mut().enumerate() {
                    *h = h.max(if i == j { 1.0 } else { 0.0 });
                }
            }
            Pooling::Average => self.acc[j] += 1.0,
        }
    }

    fn finish(mut self) -> Result<Vec<f64>> {
        if self.rows == 0 {
            return Err(EncodingError::NoRows);
        }
        if self.pooling == Pooling::Average {
            let n = self.rows as f64;
            self.acc.iter_mut().for_each(|h| *h /= n);
        }
        Ok(self.acc)
    }
}

fn l2_normalize(h: &mut [f64]) {
    let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        h.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Encodes every descriptor of `ds` against `cb` and pools the rows.
pub fn encode_image(
    ds: &DescriptorSet,
    cb: &Codebook,
    params: &EncodingParams,
) -> Result<BowVector> {
    params.validate()?;
    let mut pooler = Pooler::new(params.pooling, cb.k());
    let mut sq = Vec::with_capacity(cb.k());
    let mut alphas = Vec::with_capacity(cb.k());
    for d in &ds.descriptors {
        cb.squared_distances_into(d, &mut sq);
        let sq_f = sq.iter().map(|&v| v as f64);
        match params.assignment {
            Assignment::Soft => {
                soft_weights(sq_f, params.sigma, &mut alphas);
                pooler.push(&alphas);
            }
            Assignment::Hard => pooler.push_one_hot(argmin(sq_f)),
        }
    }
    let mut h = pooler.finish()?;
    if params.l2_normalize {
        l2_normalize(&mut h);
    }
    Ok(BowVector {
        h,
        image: ds.source.clone(),
        codebook_id: cb.id(),
    })
}

const MAGIC: &[u8; 8] = b"BOWVECTS";
const VERSION: u32 = 1;

/// Labeled bag-of-words vectors sharing one codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct BowBatch {
    pub codebook_id: String,
    pub k: usize,
    pub vectors: Vec<BowVector>,
    pub labels: Vec<String>,
}

impl BowBatch {
    /// Layout: magic `BOWVECTS`, version u32, count u32, k u32, codebook id,
    /// then per row: image id, label, k × f64. Strings are u32-length
    /// prefixed UTF-8; everything little-endian.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(w, VERSION)?;
        binio::write_len(w, self.vectors.len())?;
        binio::write_len(w, self.k)?;
        binio::write_str(w, &self.codebook_id)?;
        for (v, label) in self.vectors.iter().zip(&self.labels) {
            binio::write_str(w, &v.image)?;
            binio::write_str(w, label)?;
            for &x in &v.h {
                binio::write_f64(w, x)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> io::Result<Self> {
        binio::expect_magic(r, MAGIC, "bow")?;
        binio::expect_version(r, VERSION, "bow")?;
        let count = binio::read_u32(r)? as usize;
        let k = binio::read_u32(r)? as usize;
        let codebook_id = binio::read_str(r)?;
        let mut vectors = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let image = binio::read_str(r)?;
            labels.push(binio::read_str(r)?);
            let h = (0..k)
                .map(|_| binio::read_f64(r))
                .collect::<io::Result<_>>()?;
            vectors.push(BowVector {
                h,
                image,
                codebook_id: codebook_id.clone(),
            });
        }
        Ok(BowBatch {
            codebook_id,
            k,
            vectors,
            labels,
        })
    }

    /// Plain CSV: `image,h0,...,h{k-1}` with a header row.
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        write!(w, "image")?;
        for j in 0..self.k {
            write!(w, ",h{j}")?;
        }
        writeln!(w)?;
        for v in &self.vectors {
            write!(w, "{}", v.image)?;
            for x in &v.h {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Descriptor, Keypoint};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile(d: &[f64]) -> DistanceProfile {
        DistanceProfile::new(d.to_vec())
    }

    fn row(a: &[f64]) -> AssignmentRow {
        AssignmentRow { alphas: a.to_vec() }
    }

    #[test]
    fn single_word_gets_everything() {
        assert_eq!(
            soft_assign(&profile(&[1234.5]), 60.0).unwrap().alphas,
            vec![1.0]
        );
    }

    #[test]
    fn equal_distances_split_evenly() {
        assert_eq!(
            soft_assign(&profile(&[7.0, 7.0]), 60.0).unwrap().alphas,
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn two_word_scalar_oracle() {
        // exp(-0/7200) : exp(-3600/7200) = 1 : e^{-1/2}
        let a = soft_assign(&profile(&[0.0, 60.0]), 60.0).unwrap().alphas;
        let e = (-0.5f64).exp();
        assert!((a[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((a[1] - e / (1.0 + e)).abs() < 1e-12);
        assert!((a[0] - 0.62246).abs() < 1e-5);
        assert!((a[1] - 0.37754).abs() < 1e-5);
    }

    #[test]
    fn far_distances_do_not_underflow() {
        let a = soft_assign(&profile(&[2884.0, 2885.0, 2000.0]), 60.0)
            .unwrap()
            .alphas;
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a[2] > 0.999);
    }

    #[test]
    fn invalid_sigma_and_empty_profile() {
        assert!(matches!(
            soft_assign(&profile(&[1.0]), 0.0),
            Err(EncodingError::InvalidSigma(_))
        ));
        assert!(soft_assign(&profile(&[1.0]), f64::NAN).is_err());
        assert!(matches!(
            soft_assign(&profile(&[]), 1.0),
            Err(EncodingError::EmptyProfile)
        ));
        assert!(hard_assign(&profile(&[])).is_err());
    }

    #[test]
    fn hard_assign_cases() {
        assert_eq!(
            hard_assign(&profile(&[3.0, 1.0, 2.0])).unwrap().alphas,
            vec![0.0, 1.0, 0.0]
        );
        assert_eq!(
            hard_assign(&profile(&[1.0, 1.0])).unwrap().alphas,
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn hard_assign_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let k = rng.random_range(1..50);
            // small integer range so ties are frequent
            let d: Vec<f64> = (0..k).map(|_| rng.random_range(0..20) as f64).collect();
            let mut best = 0;
            for j in 1..k {
                if d[j] < d[best] {
                    best = j;
                }
            }
            let a = hard_assign(&profile(&d)).unwrap().alphas;
            assert_eq!(a[best], 1.0);
            assert_eq!(a.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn pooling_cases() {
        let single = [row(&[0.2, 0.8])];
        assert_eq!(max_pool(&single).unwrap(), vec![0.2, 0.8]);
        assert_eq!(average_pool(&single).unwrap(), vec![0.2, 0.8]);
        assert_eq!(
            max_pool(&[row(&[0.2, 0.8]), row(&[0.7, 0.3])]).unwrap(),
            vec![0.7, 0.8]
        );
        assert_eq!(
            max_pool(&[row(&[0.4, 0.6]), row(&[0.4, 0.6])]).unwrap(),
            vec![0.4, 0.6]
        );
        assert_eq!(
            average_pool(&[row(&[1.0, 0.0]), row(&[0.0, 1.0])]).unwrap(),
            vec![0.5, 0.5]
        );
        assert!(matches!(max_pool(&[]), Err(EncodingError::NoRows)));
        assert!(matches!(average_pool(&[]), Err(EncodingError::NoRows)));
        assert!(matches!(
            max_pool(&[row(&[1.0]), row(&[0.5, 0.5])]),
            Err(EncodingError::RowLength { .. })
        ));
    }

    fn desc(seed: u8) -> Descriptor {
        let mut d = [0u8; 128];
        for (i, v) in d.iter_mut().enumerate() {
            *v = seed
                .wrapping_mul(31)
                .wrapping_add((i as u8).wrapping_mul(7));
        }
        Descriptor(d)
    }

    fn set(ds: Vec<Descriptor>) -> DescriptorSet {
        DescriptorSet {
            source: "img".into(),
            keypoints: vec![Keypoint { x: 0, y: 0 }; ds.len()],
            descriptors: ds,
        }
    }

    #[test]
    fn forced_single_point_single_word() {
        let cb = Codebook::new(vec![desc(1)], "s", vec![], 0).unwrap();
        let bow = encode_image(&set(vec![desc(9)]), &cb, &EncodingParams::default()).unwrap();
        assert_eq!(bow.h, vec![1.0]);
        assert_eq!(bow.image, "img");
        assert_eq!(bow.codebook_id, cb.id());
    }

    #[test]
    fn hard_average_is_word_histogram() {
        let words = vec![desc(1), desc(2), desc(3)];
        let cb = Codebook::new(words.clone(), "s", vec![], 0).unwrap();
        let points = vec![
            words[0].clone(),
            words[2].clone(),
            words[2].clone(),
            words[0].clone(),
            words[2].clone(),
        ];
        let params = EncodingParams {
            assignment: Assignment::Hard,
            pooling: Pooling::Average,
            ..Default::default()
        };
        let bow = encode_image(&set(points), &cb, &params).unwrap();
        assert_eq!(bow.h, vec![0.4, 0.0, 0.6]);
    }

    #[test]
    fn empty_descriptor_set_rejected() {
        let cb = Codebook::new(vec![desc(1)], "s", vec![], 0).unwrap();
        assert!(matches!(
            encode_image(&set(vec![]), &cb, &EncodingParams::default()),
            Err(EncodingError::NoRows)
        ));
    }

    #[test]
    fn l2_flag_normalizes() {
        let cb = Codebook::new(vec![desc(1), desc(2)], "s", vec![], 0).unwrap();
        let params = EncodingParams {
            l2_normalize: true,
            ..Default::default()
        };
        let bow = encode_image(&set(vec![desc(1), desc(5)]), &cb, &params).unwrap();
        let n: f64 = bow.h.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shuffled_points_pool_identically() {
        let words: Vec<_> = (0..6).map(desc).collect();
        let cb = Codebook::new(words, "s", vec![], 0).unwrap();
        let points: Vec<_> = (10..40).map(desc).collect();
        let mut shuffled = points.clone();
        crate::rng::shuffle(&mut shuffled, &mut crate::rng::seeded(4));
        for pooling in [Pooling::Max, Pooling::Average] {
            let p = EncodingParams {
                sigma: 200.0,
                pooling,
                ..Default::default()
            };
            let a = encode_image(&set(points.clone()), &cb, &p).unwrap().h;
            let b = encode_image(&set(shuffled.clone()), &cb, &p).unwrap().h;
            for (x, y) in a.iter().zip(&b) {
                match pooling {
                    Pooling::Max => assert_eq!(x, y),
                    Pooling::Average => assert!((x - y).abs() < 1e-12),
                }
            }
        }
    }

    #[test]
    fn word_permutation_permutes_coordinates() {
        let words: Vec<_> = (0..5).map(desc).collect();
        let perm = [3usize, 0, 4, 1, 2];
        let permuted: Vec<_> = perm.iter().map(|&i| words[i].clone()).collect();
        let a = Codebook::new(words, "s", vec![], 0).unwrap();
        let b = Codebook::new(permuted, "s", vec![], 0).unwrap();
        let points = set((20..30).map(desc).collect());
        let p = EncodingParams {
            sigma: 300.0,
            ..Default::default()
        };
        let ha = encode_image(&points, &a, &p).unwrap().h;
        let hb = encode_image(&points, &b, &p).unwrap().h;
        for (j, &i) in perm.iter().enumerate() {
            assert!((hb[j] - ha[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_roundtrip_and_csv() {
        let batch = BowBatch {
            codebook_id: "cb".into(),
            k: 2,
            vectors: vec![
                BowVector {
                    h: vec![0.25, 1.0],
                    image: "a.pgm".into(),
                    codebook_id: "cb".into(),
                },
                BowVector {
                    h: vec![0.5, 0.125],
                    image: "b.pgm".into(),
                    codebook_id: "cb".into(),
                },
            ],
            labels: vec!["x".into(), "y".into()],
        };
        let mut buf = Vec::new();
        batch.write_to(&mut buf).unwrap();
        assert_eq!(BowBatch::read_from(&mut buf.as_slice()).unwrap(), batch);
        let mut csv = Vec::new();
        batch.write_csv(&mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "image,h0,h1\na.pgm,0.25,1\nb.pgm,0.5,0.125\n"
        );
    }

    fn arb_profile() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..3000.0, 1..64)
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(d in arb_profile(), sigma in 0.5f64..500.0) {
            let a = soft_assign(&profile(&d), sigma).unwrap().alphas;
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn closer_words_weigh_more(d in arb_profile(), sigma in 20.0f64..500.0) {
            let a = soft_assign(&profile(&d), sigma).unwrap().alphas;
            for i in 0..d.len() {
                for j in 0..d.len() {
                    if d[i] < d[j] {
                        prop_assert!(a[i] >= a[j]);
                        let gap = (d[j] * d[j] - d[i] * d[i]) / (2.0 * sigma * sigma);
                        if gap > 1e-9 && a[i] > 0.0 {
                            prop_assert!(a[i] > a[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn tiny_sigma_is_hard(mut d in prop::collection::vec(1.0f64..100.0, 1..16)) {
            d.iter_mut().enumerate().for_each(|(i, x)| *x += i as f64 * 1e-1);
            d.sort_by(f64::total_cmp);
            d.dedup_by(|a, b| (*a - *b).abs() < 0.05);
            let soft = soft_assign(&profile(&d), 1e-3).unwrap().alphas;
            let hard = hard_assign(&profile(&d)).unwrap().alphas;
            for (s, h) in soft.iter().zip(&hard) {
                prop_assert!((s - h).abs() < 1e-9);
            }
        }

        #[test]
        fn huge_sigma_is_uniform(d in arb_profile()) {
            let a = soft_assign(&profile(&d), 1e9).unwrap().alphas;
            let u = 1.0 / d.len() as f64;
            prop_assert!(a.iter().all(|&x| (x - u).abs() < 1e-6));
        }

        #[test]
        fn max_dominates_average(rows in (1usize..16, 1usize..10).prop_flat_map(|(k, n)| {
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, k), n)
        })) {
            let rows: Vec<_> = rows.into_iter().map(|a| AssignmentRow { alphas: a }).collect();
            let mx = max_pool(&rows).unwrap();
            let av = average_pool(&rows).unwrap();
            for (m, a) in mx.iter().zip(&av) {
                prop_assert!(m + 1e-15 >= *a);
            }
        }
    }
}
