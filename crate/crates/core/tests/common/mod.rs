//! Independent reference implementations used to check the library.
//!
//! These are written for clarity, not speed, and avoid the library's
//! formulations where possible (tabulated kernels, bare exponentials,
//! embedded t tables).

#![allow(dead_code)]

use std::f64::consts::PI;

/// Upright SIFT on a `p`×`p` row-major patch, accumulating every pixel
/// into every (cell row, cell col, orientation) bin with triangular
/// kernel weights.
pub fn sift_oracle(patch: &[u8], p: usize) -> [u8; 128] {
    assert_eq!(patch.len(), p * p);
    let px = |r: usize, c: usize| patch[r * p + c] as f64;
    let cell = p as f64 / 4.0;
    let sigma = p as f64 / 2.0;
    let tri = |t: f64| (1.0 - t.abs()).max(0.0);
    let mut hist = [0.0f64; 128];
    for r in 0..p {
        for c in 0..p {
            let gx = px(r, (c + 1).min(p - 1)) - px(r, c.saturating_sub(1));
            let gy = px((r + 1).min(p - 1), c) - px(r.saturating_sub(1), c);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += 2.0 * PI;
            }
            let t = theta * 8.0 / (2.0 * PI);
            let (cx, cy) = (c as f64 + 0.5, r as f64 + 0.5);
            let centre = p as f64 / 2.0;
            let g =
                (-((cx - centre).powi(2) + (cy - centre).powi(2)) / (2.0 * sigma * sigma)).exp();
            for i in 0..4 {
                let wy = tri(cy / cell - 0.5 - i as f64);
                for j in 0..4 {
                    let wx = tri(cx / cell - 0.5 - j as f64);
                    for b in 0..8 {
                        let diff = (t - b as f64).abs();
                        let wo = tri(diff.min(8.0 - diff));
                        hist[(i * 4 + j) * 8 + b] += mag * g * wx * wy * wo;
                    }
                }
            }
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n = norm(&hist);
    let mut out = [0u8; 128];
    if n == 0.0 {
        return out;
    }
    let clamped: Vec<f64> = hist.iter().map(|x| (x / n).min(0.2)).collect();
    let n2 = norm(&clamped);
    for (o, x) in out.iter_mut().zip(&clamped) {
        *o = ((x / n2) * 512.0).round().clamp(0.0, 255.0) as u8;
    }
    out
}

fn gaussian_kernel(d: f64, sigma: f64) -> f64 {
    (-d * d / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Soft assignment with the full Gaussian kernel, prefactor included,
/// exactly as written: `K(d_j) / Σ_l K(d_l)`. `None` when the
/// denominator is not a normal float.
pub fn soft_full_kernel_literal(distances: &[f64], sigma: f64) -> Option<Vec<f64>> {
    let k: Vec<f64> = distances
        .iter()
        .map(|&d| gaussian_kernel(d, sigma))
        .collect();
    let total: f64 = k.iter().sum();
    total
        .is_normal()
        .then(|| k.iter().map(|v| v / total).collect())
}

/// Full-kernel soft assignment with the common factor `exp(d_min² / 2σ²)`
/// divided out of numerator and denominator, so it stays finite for any
/// profile.
pub fn soft_full_kernel(distances: &[f64], sigma: f64) -> Vec<f64> {
    let pref = 1.0 / ((2.0 * PI).sqrt() * sigma);
    let m = distances
        .iter()
        .map(|d| d * d)
        .fold(f64::INFINITY, f64::min);
    let k: Vec<f64> = distances
        .iter()
        .map(|d| pref * (-(d * d - m) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter().map(|v| v / total).collect()
}

/// Soft assignment as `1 / Σ_l exp((d_j² − d_l²) / 2σ²)`.
pub fn soft_ratio(distances: &[f64], sigma: f64) -> Vec<f64> {
    distances
        .iter()
        .map(|dj| {
            let denom: f64 = distances
                .iter()
                .map(|dl| ((dj * dj - dl * dl) / (2.0 * sigma * sigma)).exp())
                .sum();
            1.0 / denom
        })
        .collect()
}

pub fn euclid(a: &[u8; 128], b: &[u8; 128]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Straight-line evaluation of assignment then pooling over all points.
pub fn encode_oracle(
    points: &[[u8; 128]],
    words: &[[u8; 128]],
    sigma: Option<f64>,
    max: bool,
) -> Vec<f64> {
    let k = words.len();
    let mut alphas = Vec::new();
    for p in points {
        let d: Vec<f64> = words.iter().map(|w| euclid(p, w)).collect();
        let row = match sigma {
            Some(s) => soft_ratio(&d, s),
            None => {
                let mut best = 0;
                for j in 1..k {
                    if d[j] < d[best] {
                        best = j;
                    }
                }
                (0..k).map(|j| if j == best { 1.0 } else { 0.0 }).collect()
            }
        };
        alphas.push(row);
    }
    (0..k)
        .map(|j| {
            let col = alphas.iter().map(|r| r[j]);
            if max {
                col.fold(f64::NEG_INFINITY, f64::max)
            } else {
                col.sum::<f64>() / points.len() as f64
            }
        })
        .collect()
}

/// Γ(n/2) for positive integer n.
fn gamma_half(n: usize) -> f64 {
    let mut x = if n.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut m = if n.is_multiple_of(2) { 2 } else { 1 };
    while m < n {
        x *= m as f64 / 2.0;
        m += 2;
    }
    x
}

fn t_pdf(t: f64, df: usize) -> f64 {
    let v = df as f64;
    gamma_half(df + 1) / ((v * PI).sqrt() * gamma_half(df))
        * (1.0 + t * t / v).powf(-(v + 1.0) / 2.0)
}

/// P(0 < T < x) by composite Simpson quadrature.
fn t_mass(x: f64, df: usize) -> f64 {
    let n = 4000;
    let h = x / n as f64;
    let mut s = t_pdf(0.0, df) + t_pdf(x, df);
    for i in 1..n {
        s += t_pdf(i as f64 * h, df) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Two-sided critical value t_{1−α/2, df} by bisection.
pub fn t_quantile(alpha: f64, df: usize) -> f64 {
    let target = 0.5 - alpha / 2.0;
    let (mut lo, mut hi) = (0.0, 200.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if t_mass(mid, df) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mean and two-sided Student-t interval.
pub fn ci_oracle(values: &[f64], alpha: f64) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = t_quantile(alpha, values.len() - 1) * var.sqrt() / n.sqrt();
    (mean, mean - half, mean + half)
}

/// Minimal CSV row reader for the harness report (no quoted fields).
pub fn read_report(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().expect("header").split(',').collect();
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            header
                .iter()
                .zip(l.split(','))
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}
