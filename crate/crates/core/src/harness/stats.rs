//! Student-t confidence intervals over repeated runs.

use super::{HarnessError, Result};

/// Two-sided Student-t critical values `t_{1-alpha/2, df}` for df = 1..=30.
const T_TABLE: [(f64, [f64; 30]); 4] = [
    (
        0.10,
        [
            6.3138, 2.9200, 2.3534, 2.1318, 2.0150, 1.9432, 1.8946, 1.8595, 1.8331, 1.8125, 1.7959,
            1.7823, 1.7709, 1.7613, 1.7531, 1.7459, 1.7396, 1.7341, 1.7291, 1.7247, 1.7207, 1.7171,
            1.7139, 1.7109, 1.7081, 1.7056, 1.7033, 1.7011, 1.6991, 1.6973,
        ],
    ),
    (
        0.05,
        [
            12.7062, 4.3027, 3.1824, 2.7764, 2.5706, 2.4469, 2.3646, 2.3060, 2.2622, 2.2281,
            2.2010, 2.1788, 2.1604, 2.1448, 2.1314, 2.1199, 2.1098, 2.1009, 2.0930, 2.0860, 2.0796,
            2.0739, 2.0687, 2.0639, 2.0595, 2.0555, 2.0518, 2.0484, 2.0452, 2.0423,
        ],
    ),
    (
        0.02,
        [
            31.8205, 6.9646, 4.5407, 3.7469, 3.3649, 3.1427, 2.9980, 2.8965, 2.8214, 2.7638,
            2.7181, 2.6810, 2.6503, 2.6245, 2.6025, 2.5835, 2.5669, 2.5524, 2.5395, 2.5280, 2.5176,
            2.5083, 2.4999, 2.4922, 2.4851, 2.4786, 2.4727, 2.4671, 2.4620, 2.4573,
        ],
    ),
    (
        0.01,
        [
            63.6567, 9.9248, 5.8409, 4.6041, 4.0321, 3.7074, 3.4995, 3.3554, 3.2498, 3.1693,
            3.1058, 3.0545, 3.0123, 2.9768, 2.9467, 2.9208, 2.8982, 2.8784, 2.8609, 2.8453, 2.8314,
            2.8188, 2.8073, 2.7969, 2.7874, 2.7787, 2.7707, 2.7633, 2.7564, 2.7500,
        ],
    ),
];

pub const SUPPORTED_ALPHAS: [f64; 4] = [0.10, 0.05, 0.02, 0.01];

/// Critical value for `alpha` (one of [`SUPPORTED_ALPHAS`]). Degrees of
/// freedom past 30 use the df = 30 entry, which widens the interval slightly.
pub fn t_critical(alpha: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(HarnessError::InvalidArgument(
            "t critical value needs df >= 1".into(),
        ));
    }
    let row = T_TABLE
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-12)
        .ok_or_else(|| {
            HarnessError::InvalidArgument(format!(
                "alpha {alpha} not tabulated (supported: 0.10, 0.05, 0.02, 0.01)"
            ))
        })?;
    Ok(row.1[df.min(30) - 1])
}

/// `(mean, low, high)` with half-width `t_{1-alpha/2, n-1} * s / sqrt(n)`,
/// `s` the sample standard deviation.
pub fn confidence_interval(values: &[f64], alpha: f64) -> Result<(f64, f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(HarnessError::InvalidArgument(format!(
            "confidence interval needs at least 2 values, got {n}"
        )));
    }
    let t = t_critical(alpha, n - 1)?;
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let half = t * var.sqrt() / nf.sqrt();
    Ok((mean, mean - half, mean + half))
}
