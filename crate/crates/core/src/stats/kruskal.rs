use serde::{Deserialize, Serialize};

use super::{chi_square_sf, StatsError};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis<T> {
    pub h: T,
    pub p_value: T,
    pub dof: usize,
}

/// Kruskal-Wallis H test with mid-ranks and tie correction; the p-value is
/// the chi-square approximation on k − 1 degrees of freedom.
pub fn kruskal_wallis<T: Scalar>(samples: &[Vec<T>]) -> Result<KruskalWallis<T>, StatsError> {
    let k = samples.len();
    if k < 2 {
        return Err(StatsError::TooFewObservations { need: 2, got: k });
    }
    if let Some(i) = samples.iter().position(|s| s.is_empty()) {
        return Err(StatsError::Domain(format!("group {i} is empty")));
    }
    let mut pooled: Vec<(T, usize)> = Vec::new();
    for (g, s) in samples.iter().enumerate() {
        for &v in s {
            if !v.is_finite() {
                return Err(StatsError::NonFinite(format!("group {g}")));
            }
            pooled.push((v, g));
        }
    }
    let n = pooled.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations { need: 3, got: n });
    }
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));

    let mut rank_sums = vec![T::zero(); k];
    let mut tie_term = T::zero();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share the mid-rank
        let mid = T::from_count(i + 1 + j) / T::lit(2.0);
        for &(_, g) in &pooled[i..j] {
            rank_sums[g] = rank_sums[g] + mid;
        }
        let t = T::from_count(j - i);
        tie_term = tie_term + t * t * t - t;
        i = j;
    }

    let nn = T::from_count(n);
    let correction = T::one() - tie_term / (nn * nn * nn - nn);
    let dof = k - 1;
    if correction <= T::zero() {
        return Ok(KruskalWallis {
            h: T::zero(),
            p_value: T::one(),
            dof,
        });
    }
    let center = (nn + T::one()) / T::lit(2.0);
    let mut s = T::zero();
    for (sum, sample) in rank_sums.iter().zip(samples) {
        let ni = T::from_count(sample.len());
        let dev = *sum / ni - center;
        s = s + ni * dev * dev;
    }
    let h = (T::lit(12.0) / (nn * (nn + T::one())) * s / correction).max(T::zero());
    let p_value = chi_square_sf(h, dof)?;
    Ok(KruskalWallis { h, p_value, dof })
}
