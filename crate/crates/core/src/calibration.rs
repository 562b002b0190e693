//! Global threshold selection over the pooled score set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::trials::TrialSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("no {0} scores")]
    EmptyClass(&'static str),
    #[error("non-finite score")]
    NonFinite,
    #[error("FAR target {0} is unreachable")]
    UnreachableTarget(f64),
    #[error("unknown threshold policy `{0}` (expected eer or far@<fraction>)")]
    BadPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Candidate threshold where |FAR − FRR| is smallest.
    Eer,
    /// Smallest candidate threshold with FAR at or below the target.
    FarAt(f64),
}

impl ThresholdPolicy {
    /// File-name friendly tag, e.g. `eer` or `far_at_0.01`.
    pub fn slug(&self) -> String {
        match self {
            ThresholdPolicy::Eer => "eer".into(),
            ThresholdPolicy::FarAt(t) => format!("far_at_{t}"),
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::Eer => f.write_str("eer"),
            ThresholdPolicy::FarAt(t) => write!(f, "far@{t}"),
        }
    }
}

impl FromStr for ThresholdPolicy {
    type Err = CalibrationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("eer") {
            return Ok(ThresholdPolicy::Eer);
        }
        let target = s
            .strip_prefix("far@")
            .and_then(|t| t.parse::<f64>().ok())
            .filter(|t| t.is_finite())
            .ok_or_else(|| CalibrationError::BadPolicy(s.to_string()))?;
        Ok(ThresholdPolicy::FarAt(target))
    }
}

impl Serialize for ThresholdPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ThresholdPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub tau: f64,
    pub far: f64,
    pub frr: f64,
    pub false_accepts: usize,
    pub false_rejects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocTable {
    pub genuine_count: usize,
    pub impostor_count: usize,
    /// Ascending in `tau`.
    pub points: Vec<RocPoint>,
}

/// Empirical operating point; `far` and `frr` are exact rates of
/// `decide(score, tau)` over the pooled trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub policy: ThresholdPolicy,
    pub tau: f64,
    pub far: f64,
    pub frr: f64,
    /// (far + frr) / 2, reported for the EER policy.
    pub eer: Option<f64>,
    pub genuine_count: usize,
    pub impostor_count: usize,
}

/// Number of values in the ascending slice strictly greater than `tau`.
fn count_above(sorted: &[f64], tau: f64) -> usize {
    sorted.len() - sorted.partition_point(|&s| s <= tau)
}

/// FAR/FRR at every candidate threshold: the distinct scores plus one
/// sentinel below the minimum and one above the maximum.
pub fn sweep_scores(genuine: &[f64], impostor: &[f64]) -> Result<RocTable, CalibrationError> {
    if genuine.is_empty() {
        return Err(CalibrationError::EmptyClass("genuine"));
    }
    if impostor.is_empty() {
        return Err(CalibrationError::EmptyClass("impostor"));
    }
    if genuine.iter().chain(impostor).any(|s| !s.is_finite()) {
        return Err(CalibrationError::NonFinite);
    }
    let mut g = genuine.to_vec();
    let mut i = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    i.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = g.iter().chain(&i).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let lo = candidates[0] - 1.0;
    let hi = candidates[candidates.len() - 1] + 1.0;
    candidates.insert(0, lo);
    candidates.push(hi);

    let ng = g.len();
    let ni = i.len();
    let points = candidates
        .into_iter()
        .map(|tau| {
            let false_accepts = count_above(&i, tau);
            let false_rejects = ng - count_above(&g, tau);
            RocPoint {
                tau,
                far: false_accepts as f64 / ni as f64,
                frr: false_rejects as f64 / ng as f64,
                false_accepts,
                false_rejects,
            }
        })
        .collect();
    Ok(RocTable {
        genuine_count: ng,
        impostor_count: ni,
        points,
    })
}

pub fn sweep_rates(trials: &TrialSet) -> Result<RocTable, CalibrationError> {
    let (g, i) = trials.scores_by_label();
    sweep_scores(&g, &i)
}

/// Picks the operating point for `policy` from a ROC table. EER ties break
/// toward the smallest threshold; no interpolation between candidates.
pub fn calibrate_roc(
    roc: &RocTable,
    policy: ThresholdPolicy,
) -> Result<OperatingPoint, CalibrationError> {
    let ng = roc.genuine_count as u128;
    let ni = roc.impostor_count as u128;
    let point = match policy {
        ThresholdPolicy::Eer => {
            // |fa/ni - fr/ng| compared exactly as |fa*ng - fr*ni|
            let gap = |p: &RocPoint| {
                let a = p.false_accepts as u128 * ng;
                let b = p.false_rejects as u128 * ni;
                a.abs_diff(b)
            };
            let mut best = &roc.points[0];
            for p in &roc.points[1..] {
                if gap(p) < gap(best) {
                    best = p;
                }
            }
            best
        }
        ThresholdPolicy::FarAt(target) => {
            if !(target >= 0.0) {
                return Err(CalibrationError::UnreachableTarget(target));
            }
            roc.points
                .iter()
                .find(|p| p.far <= target)
                .ok_or(CalibrationError::UnreachableTarget(target))?
        }
    };
    Ok(OperatingPoint {
        policy,
        tau: point.tau,
        far: point.far,
        frr: point.frr,
        eer: matches!(policy, ThresholdPolicy::Eer).then(|| (point.far + point.frr) / 2.0),
        genuine_count: roc.genuine_count,
        impostor_count: roc.impostor_count,
    })
}

pub fn calibrate(
    trials: &TrialSet,
    policy: ThresholdPolicy,
) -> Result<OperatingPoint, CalibrationError> {
    calibrate_roc(&sweep_rates(trials)?, policy)
}
