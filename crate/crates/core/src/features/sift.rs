use std::f64::consts::TAU;

use super::{
    Descriptor, FeaturesError, GridParams, Keypoint, Result, DESCRIPTOR_LEN, ORIENTATION_BINS,
    SPATIAL_CELLS,
};
use crate::corpus::Image;

const CLAMP: f64 = 0.2;
const BYTE_SCALE: f64 = 512.0;

/// Upright SIFT for one patch size.
///
/// The per-pixel Gaussian weights and spatial-cell interpolation weights
/// depend only on the patch size, so they are tabulated once and reused
/// for every keypoint.
#[derive(Debug, Clone)]
pub struct SiftKernel {
    patch_size: usize,
    /// For each patch pixel (row-major): up to four `(cell, weight)` pairs
    /// with the Gaussian window already folded into the weight.
    spatial: Vec<([(usize, f64); 4], usize)>,
}

/// Splits a continuous cell coordinate between its two neighbouring
/// cells, dropping the part that falls outside the 4-cell grid.
fn cell_split(coord: f64) -> [(Option<usize>, f64); 2] {
    let lo = coord.floor();
    let frac = coord - lo;
    let idx = |c: f64| (c >= 0.0 && c < SPATIAL_CELLS as f64).then_some(c as usize);
    [(idx(lo), 1.0 - frac), (idx(lo + 1.0), frac)]
}

impl SiftKernel {
    pub fn new(patch_size: usize) -> Self {
        let p = patch_size as f64;
        let cell_width = p / SPATIAL_CELLS as f64;
        let sigma = p / 2.0;
        let mut spatial = Vec::with_capacity(patch_size * patch_size);
        for r in 0..patch_size {
            for c in 0..patch_size {
                let (u, v) = (c as f64 + 0.5, r as f64 + 0.5);
                let du = u - p / 2.0;
                let dv = v - p / 2.0;
                let gauss = (-(du * du + dv * dv) / (2.0 * sigma * sigma)).exp();
                let mut pairs = [(0usize, 0.0f64); 4];
                let mut n = 0;
                for (row_cell, wr) in cell_split(v / cell_width - 0.5) {
                    for (col_cell, wc) in cell_split(u / cell_width - 0.5) {
                        if let (Some(rc), Some(cc)) = (row_cell, col_cell) {
                            let w = gauss * wr * wc;
                            if w > 0.0 {
                                pairs[n] = (rc * SPATIAL_CELLS + cc, w);
                                n += 1;
                            }
                        }
                    }
                }
                spatial.push((pairs, n));
            }
        }
        SiftKernel {
            patch_size,
            spatial,
        }
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Descriptor of the patch centered at `kp`.
    pub fn describe(&self, image: &Image, kp: Keypoint) -> Result<Descriptor> {
        let p = self.patch_size;
        let h = p / 2;
        let (x, y) = (kp.x as usize, kp.y as usize);
        if x < h || y < h || x + h > image.width() || y + h > image.height() {
            return Err(FeaturesError::PatchOutOfBounds { x: kp.x, y: kp.y });
        }
        let (x0, y0) = (x - h, y - h);
        // replicate border inside the patch window
        let at = |r: usize, c: usize| image.get(x0 + c, y0 + r) as i32;

        let mut hist = [0.0f64; DESCRIPTOR_LEN];
        for r in 0..p {
            let (up, down) = (r.saturating_sub(1), (r + 1).min(p - 1));
            for c in 0..p {
                let (left, right) = (c.saturating_sub(1), (c + 1).min(p - 1));
                let gx = (at(r, right) - at(r, left)) as f64;
                let gy = (at(down, c) - at(up, c)) as f64;
                if gx == 0.0 && gy == 0.0 {
                    continue;
                }
                let mag = (gx * gx + gy * gy).sqrt();
                let mut o = gy.atan2(gx) / TAU * ORIENTATION_BINS as f64;
                if o < 0.0 {
                    o += ORIENTATION_BINS as f64;
                }
                let o_lo = o.floor();
                let o_frac = o - o_lo;
                let b0 = (o_lo as usize) % ORIENTATION_BINS;
                let b1 = (b0 + 1) % ORIENTATION_BINS;

                let (pairs, n) = &self.spatial[r * p + c];
                for &(cell, w) in &pairs[..*n] {
                    let m = mag * w;
                    hist[cell * ORIENTATION_BINS + b0] += m * (1.0 - o_frac);
                    hist[cell * ORIENTATION_BINS + b1] += m * o_frac;
                }
            }
        }
        Ok(quantize(&hist))
    }
}

fn l2_normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Normalize, clamp at 0.2, renormalize, then scale to bytes.
fn quantize(hist: &[f64; DESCRIPTOR_LEN]) -> Descriptor {
    let mut v = *hist;
    if !l2_normalize(&mut v) {
        return Descriptor::zeros();
    }
    v.iter_mut().for_each(|x| *x = x.min(CLAMP));
    l2_normalize(&mut v);
    let mut out = [0u8; DESCRIPTOR_LEN];
    for (o, x) in out.iter_mut().zip(v) {
        *o = (x * BYTE_SCALE).min(255.0).round() as u8;
    }
    Descriptor(out)
}

/// Upright SIFT descriptor of the patch centered at `kp`.
pub fn sift_descriptor(image: &Image, kp: Keypoint, params: &GridParams) -> Result<Descriptor> {
    params.validate()?;
    SiftKernel::new(params.patch_size).describe(image, kp)
}
