//! Scores for fitted models and the rank test used to compare procedures.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MlrError, Result};

/// Threshold below which a coefficient counts as discarded.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-3;

/// Largest smaller-sample size for which the exact null distribution is used.
pub const EXACT_MW_MAX: usize = 8;

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(MlrError::ShapeMismatch(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

/// Coefficient of determination. `squared = false` replaces both sums of
/// squares by the corresponding Euclidean norms.
pub fn r2_score(y_true: &[f64], y_pred: &[f64], squared: bool) -> Result<f64> {
    same_len(y_true.len(), y_pred.len(), "r2_score")?;
    if y_true.len() < 2 {
        return Err(MlrError::InvalidInput("r2_score needs at least two observations".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    let ss_tot: f64 = y_true.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(MlrError::InvalidInput("r2_score is undefined for a constant target".into()));
    }
    Ok(if squared { 1.0 - ss_res / ss_tot } else { 1.0 - (ss_res / ss_tot).sqrt() })
}

pub fn l2_error(beta_hat: &[f64], beta_star: &[f64]) -> Result<f64> {
    same_len(beta_hat.len(), beta_star.len(), "l2_error")?;
    Ok(beta_hat.iter().zip(beta_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Coordinates whose magnitude exceeds a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEstimate {
    pub indices: Vec<usize>,
    pub threshold: f64,
}

impl SupportEstimate {
    pub fn from_coefficients(beta: &[f64], threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(MlrError::InvalidInput(format!("support threshold must be positive, got {threshold}")));
        }
        let indices = beta.iter().enumerate().filter(|(_, b)| b.abs() > threshold).map(|(j, _)| j).collect();
        Ok(Self { indices, threshold })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }
}

/// Fraction of coordinates whose in/out-of-support status at threshold
/// `tau` agrees with the non-zero pattern of `beta_star`.
pub fn support_accuracy(beta_hat: &[f64], beta_star: &[f64], tau: f64) -> Result<f64> {
    same_len(beta_hat.len(), beta_star.len(), "support_accuracy")?;
    if beta_hat.is_empty() {
        return Err(MlrError::InvalidInput("support_accuracy of an empty vector".into()));
    }
    let est = SupportEstimate::from_coefficients(beta_hat, tau)?;
    let correct = beta_star.iter().enumerate().filter(|&(j, b)| est.contains(j) == (*b != 0.0)).count();
    Ok(correct as f64 / beta_hat.len() as f64)
}

/// Affine map of `values` onto `[0, 1]`.
pub fn rescale_curve(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(MlrError::InvalidInput("rescale_curve needs at least two values".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(MlrError::NonFinite("rescale_curve input".into()));
    }
    if hi == lo {
        return Err(MlrError::InvalidInput("cannot rescale a constant curve".into()));
    }
    Ok(values.iter().map(|v| if *v == hi { 1.0 } else { (v - lo) / (hi - lo) }).collect())
}

/// Index of the smallest value; the first one on ties.
pub fn argmin(values: &[f64]) -> Option<usize> {
    values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `U` of the first sample: pairs where it is larger, ties counting half.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample, doubled so they stay integral.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // positions start+1..=end share rank (start+1+end)/2
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

/// Counts, for each achievable doubled rank sum, the size-`k` subsets of
/// `ranks` attaining it.
fn subset_sum_counts(ranks: &[u64], k: usize) -> Vec<u128> {
    let max_sum: u64 = {
        let mut sorted = ranks.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        sorted.iter().take(k).sum()
    };
    let width = max_sum as usize + 1;
    // table[c][s]: subsets of size c with doubled rank sum s
    let mut table = vec![vec![0u128; width]; k + 1];
    table[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for c in (1..=k).rev() {
            let (lower, upper) = table.split_at_mut(c);
            let prev = &lower[c - 1];
            let cur = &mut upper[0];
            for s in (r..width).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    table.swap_remove(k)
}

/// Two-sided Mann-Whitney test. Exact under the permutation null when the
/// smaller sample has at most [`EXACT_MW_MAX`] values, otherwise the normal
/// approximation with tie-corrected variance and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(MlrError::InvalidInput("mann_whitney_u needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MlrError::NonFinite("mann_whitney_u sample".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);
    let rank_sum_a: u64 = ranks[..na].iter().sum();
    // 2·U_a = 2·R_a − n_a(n_a + 1)
    let u2 = rank_sum_a - (na * (na + 1)) as u64;
    let u = u2 as f64 / 2.0;
    if ties.len() == 1 {
        return Ok(MannWhitney { u, p_value: 1.0, exact: na.min(nb) <= EXACT_MW_MAX });
    }

    if na.min(nb) <= EXACT_MW_MAX {
        let (k, observed) = if na <= nb { (na, rank_sum_a) } else { (nb, ranks[na..].iter().sum()) };
        let counts = subset_sum_counts(&ranks, k);
        let total: u128 = counts.iter().sum();
        let le: u128 = counts[..=observed as usize].iter().sum();
        let ge: u128 = counts[observed as usize..].iter().sum();
        let p_value = (2.0 * le.min(ge) as f64 / total as f64).min(1.0);
        return Ok(MannWhitney { u, p_value, exact: true });
    }

    let n = (na + nb) as f64;
    let (fa, fb) = (na as f64, nb as f64);
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = fa * fb / 12.0 * ((n + 1.0) - tie_term);
    let dev = (u - fa * fb / 2.0).abs();
    let z = ((dev - 0.5).max(0.0)) / var.sqrt();
    let normal = Normal::standard();
    let p_value = (2.0 * (1.0 - normal.cdf(z))).min(1.0);
    Ok(MannWhitney { u, p_value, exact: false })
}

/// Indices of the samples that no other sample beats, where `i` beats `j`
/// when `i` is larger in the rank sense at two-sided `p < alpha`.
pub fn best_by_mann_whitney(samples: &[Vec<f64>], alpha: f64) -> Result<Vec<usize>> {
    let mut best = Vec::new();
    for i in 0..samples.len() {
        let mut beaten = false;
        for j in 0..samples.len() {
            if i == j {
                continue;
            }
            let t = mann_whitney_u(&samples[j], &samples[i])?;
            let n = (samples[i].len() * samples[j].len()) as f64;
            if t.p_value < alpha && t.u > n / 2.0 {
                beaten = true;
                break;
            }
        }
        if !beaten {
            best.push(i);
        }
    }
    Ok(best)
}
