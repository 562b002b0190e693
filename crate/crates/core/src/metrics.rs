//! Per-individual FAR/FRR aggregated over demographic groups, with fairness
//! deltas and pairwise Kruskal-Wallis comparisons between groups.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{AttributeProfile, AttributeSchema};
use crate::stats::{kruskal_wallis, StatsError};
use crate::trials::{decide, PairLabel, TrialSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("threshold must be finite, got {0}")]
    BadThreshold(f64),
    #[error("pair {0} has no score")]
    Unscored(String),
    #[error("`{0}` is not a categorical protected attribute")]
    NotGroupable(String),
    #[error("group spec needs at least one attribute")]
    EmptySpec,
    #[error("group `{0}` is empty")]
    EmptyGroup(String),
    #[error("group `{0}` not found")]
    UnknownGroup(String),
    #[error("group `{group}` has {size} member(s); at least 2 required")]
    DegenerateGroup { group: String, size: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    Far,
    Frr,
}

impl ErrorMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorMetric::Far => "far",
            ErrorMetric::Frr => "frr",
        }
    }
}

impl fmt::Display for ErrorMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRates {
    pub identity_id: String,
    pub far: f64,
    pub frr: f64,
    pub genuine_count: usize,
    pub impostor_count: usize,
    pub false_accepts: usize,
    pub false_rejects: usize,
}

impl IndividualRates {
    pub fn get(&self, metric: ErrorMetric) -> f64 {
        match metric {
            ErrorMetric::Far => self.far,
            ErrorMetric::Frr => self.frr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub identity_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualAudit {
    pub tau: f64,
    pub rates: Vec<IndividualRates>,
    pub excluded: Vec<Exclusion>,
}

/// FRR(u) = rejected genuine / genuine and FAR(u) = accepted impostor /
/// impostor over the pairs owned by `u`. Identities lacking either pair
/// class are excluded and reported.
pub fn individual_rates(trials: &TrialSet, tau: f64) -> Result<IndividualAudit, MetricsError> {
    if !tau.is_finite() {
        return Err(MetricsError::BadThreshold(tau));
    }
    let mut rates = Vec::with_capacity(trials.identities.len());
    let mut excluded = Vec::new();
    for ident in &trials.identities {
        let (mut ng, mut ni, mut fr, mut fa) = (0usize, 0usize, 0usize, 0usize);
        for p in &ident.pairs {
            let score = p.score.ok_or_else(|| {
                MetricsError::Unscored(format!("{}/{}", p.probe_image_id, p.reference_image_id))
            })?;
            let accepted = decide(score, tau);
            match p.label {
                PairLabel::Genuine => {
                    ng += 1;
                    fr += usize::from(!accepted);
                }
                PairLabel::Impostor => {
                    ni += 1;
                    fa += usize::from(accepted);
                }
            }
        }
        if ng == 0 || ni == 0 {
            excluded.push(Exclusion {
                identity_id: ident.identity_id.clone(),
                reason: if ng == 0 {
                    "no genuine pairs".into()
                } else {
                    "no impostor pairs".into()
                },
            });
            continue;
        }
        rates.push(IndividualRates {
            identity_id: ident.identity_id.clone(),
            far: fa as f64 / ni as f64,
            frr: fr as f64 / ng as f64,
            genuine_count: ng,
            impostor_count: ni,
            false_accepts: fa,
            false_rejects: fr,
        });
    }
    Ok(IndividualAudit {
        tau,
        rates,
        excluded,
    })
}

/// One level index per grouping attribute; `None` collapses the attribute
/// (the union of all its levels).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupKey(pub Vec<Option<usize>>);

impl GroupKey {
    pub fn is_leaf(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    /// Which attributes are collapsed.
    pub fn pattern(&self) -> Vec<bool> {
        self.0.iter().map(Option::is_none).collect()
    }
}

/// Grouping over categorical protected attributes, with per-attribute
/// union rows/columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub attributes: Vec<String>,
    pub levels: Vec<Vec<String>>,
}

impl GroupSpec {
    pub fn new(schema: &AttributeSchema, attributes: &[String]) -> Result<Self, MetricsError> {
        if attributes.is_empty() {
            return Err(MetricsError::EmptySpec);
        }
        let mut levels = Vec::new();
        for a in attributes {
            let var = schema
                .variable(a)
                .filter(|_| schema.is_protected(a))
                .ok_or_else(|| MetricsError::NotGroupable(a.clone()))?;
            let l = var
                .kind
                .levels()
                .ok_or_else(|| MetricsError::NotGroupable(a.clone()))?;
            levels.push(l.to_vec());
        }
        Ok(Self {
            attributes: attributes.to_vec(),
            levels,
        })
    }

    /// Every level tuple including union markers, attribute-major with the
    /// union last (e.g. Man/Asian, Man/Black, ..., Man/∪, Woman/Asian, ..., ∪/∪).
    pub fn keys(&self) -> Vec<GroupKey> {
        let mut keys = vec![Vec::new()];
        for levels in &self.levels {
            let choices: Vec<Option<usize>> = (0..levels.len())
                .map(Some)
                .chain(std::iter::once(None))
                .collect();
            keys = keys
                .into_iter()
                .flat_map(|k| {
                    choices.iter().map(move |c| {
                        let mut k = k.clone();
                        k.push(*c);
                        k
                    })
                })
                .collect();
        }
        keys.into_iter().map(GroupKey).collect()
    }

    pub fn leaf_keys(&self) -> Vec<GroupKey> {
        self.keys().into_iter().filter(GroupKey::is_leaf).collect()
    }

    pub fn level_label(&self, attr: usize, sel: Option<usize>) -> String {
        match sel {
            Some(l) => self.levels[attr][l].clone(),
            None => self.levels[attr].join("∪"),
        }
    }

    pub fn label(&self, key: &GroupKey) -> String {
        key.0
            .iter()
            .enumerate()
            .map(|(a, sel)| self.level_label(a, *sel))
            .collect::<Vec<_>>()
            .join(" / ")
    }

    /// Key built from level names; `*` collapses an attribute.
    pub fn key_from_names(&self, names: &[&str]) -> Option<GroupKey> {
        if names.len() != self.attributes.len() {
            return None;
        }
        names
            .iter()
            .zip(&self.levels)
            .map(|(n, levels)| {
                if *n == "*" {
                    Some(None)
                } else {
                    levels.iter().position(|l| l == n).map(Some)
                }
            })
            .collect::<Option<Vec<_>>>()
            .map(GroupKey)
    }

    /// Level indices of a profile, or `None` if any attribute is missing.
    pub fn assign(&self, profile: &AttributeProfile) -> Option<Vec<usize>> {
        self.attributes
            .iter()
            .map(|a| profile.get(a).map(|v| v as usize))
            .collect()
    }

    fn matches(key: &GroupKey, levels: &[usize]) -> bool {
        key.0
            .iter()
            .zip(levels)
            .all(|(sel, l)| sel.is_none_or(|s| s == *l))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub key: GroupKey,
    pub label: String,
    /// Unweighted mean of member rates; `None` for an empty group.
    pub far: Option<f64>,
    pub frr: Option<f64>,
    pub member_count: usize,
}

impl GroupRates {
    pub fn get(&self, metric: ErrorMetric) -> Option<f64> {
        match metric {
            ErrorMetric::Far => self.far,
            ErrorMetric::Frr => self.frr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAudit {
    pub spec: GroupSpec,
    pub groups: Vec<GroupRates>,
    /// Individuals with rates but no value for some grouping attribute.
    pub unassigned: Vec<String>,
}

impl GroupAudit {
    pub fn find(&self, key: &GroupKey) -> Option<&GroupRates> {
        self.groups.iter().find(|g| &g.key == key)
    }
}

struct Membership<'a> {
    members: Vec<(&'a IndividualRates, Vec<usize>)>,
    unassigned: Vec<String>,
}

fn membership<'a>(
    rates: &'a [IndividualRates],
    profiles: &[AttributeProfile],
    spec: &GroupSpec,
) -> Membership<'a> {
    let by_id: HashMap<&str, &AttributeProfile> = profiles
        .iter()
        .map(|p| (p.identity_id.as_str(), p))
        .collect();
    let mut members = Vec::new();
    let mut unassigned = Vec::new();
    for r in rates {
        match by_id
            .get(r.identity_id.as_str())
            .and_then(|p| spec.assign(p))
        {
            Some(levels) => members.push((r, levels)),
            None => unassigned.push(r.identity_id.clone()),
        }
    }
    Membership {
        members,
        unassigned,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Macro-averaged FAR/FRR for every group of `spec`, unions included; the
/// all-union group is the mean over every assigned individual.
pub fn group_rates(
    rates: &[IndividualRates],
    profiles: &[AttributeProfile],
    spec: &GroupSpec,
) -> GroupAudit {
    let m = membership(rates, profiles, spec);
    let groups = spec
        .keys()
        .into_iter()
        .map(|key| {
            let members: Vec<&IndividualRates> = m
                .members
                .iter()
                .filter(|(_, l)| GroupSpec::matches(&key, l))
                .map(|(r, _)| *r)
                .collect();
            GroupRates {
                label: spec.label(&key),
                far: mean(members.iter().map(|r| r.far)),
                frr: mean(members.iter().map(|r| r.frr)),
                member_count: members.len(),
                key,
            }
        })
        .collect();
    GroupAudit {
        spec: spec.clone(),
        groups,
        unassigned: m.unassigned,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessDelta {
    pub group_i: String,
    pub group_j: String,
    pub key_i: GroupKey,
    pub key_j: GroupKey,
    /// far(i) − far(j)
    pub delta_far: f64,
    /// frr(i) − frr(j)
    pub delta_frr: f64,
}

/// Equalized-odds gaps between two groups.
pub fn fairness_delta(a: &GroupRates, b: &GroupRates) -> Result<FairnessDelta, MetricsError> {
    let (Some(far_a), Some(frr_a)) = (a.far, a.frr) else {
        return Err(MetricsError::EmptyGroup(a.label.clone()));
    };
    let (Some(far_b), Some(frr_b)) = (b.far, b.frr) else {
        return Err(MetricsError::EmptyGroup(b.label.clone()));
    };
    Ok(FairnessDelta {
        group_i: a.label.clone(),
        group_j: b.label.clone(),
        key_i: a.key.clone(),
        key_j: b.key.clone(),
        delta_far: far_a - far_b,
        delta_frr: frr_a - frr_b,
    })
}

pub fn fairness_deltas(
    audit: &GroupAudit,
    pairs: &[(GroupKey, GroupKey)],
) -> Result<Vec<FairnessDelta>, MetricsError> {
    pairs
        .iter()
        .map(|(i, j)| {
            let a = audit
                .find(i)
                .ok_or_else(|| MetricsError::UnknownGroup(audit.spec.label(i)))?;
            let b = audit
                .find(j)
                .ok_or_else(|| MetricsError::UnknownGroup(audit.spec.label(j)))?;
            fairness_delta(a, b)
        })
        .collect()
}

/// Unordered pairs of non-empty groups sharing the same collapse pattern
/// (leaf vs leaf, gender-only vs gender-only, ...).
pub fn comparable_pairs(audit: &GroupAudit) -> Vec<(GroupKey, GroupKey)> {
    let groups: Vec<&GroupRates> = audit.groups.iter().filter(|g| g.member_count > 0).collect();
    let mut out = Vec::new();
    for (i, a) in groups.iter().enumerate() {
        for b in &groups[i + 1..] {
            let pa = a.key.pattern();
            if pa == b.key.pattern() && pa.iter().any(|c| !c) {
                out.push((a.key.clone(), b.key.clone()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Significance {
    pub p10: bool,
    pub p05: bool,
    pub p01: bool,
}

impl Significance {
    pub fn of(p: f64) -> Self {
        Self {
            p10: p < 0.1,
            p05: p < 0.05,
            p01: p < 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KruskalMatrix {
    pub metric: ErrorMetric,
    pub keys: Vec<GroupKey>,
    pub labels: Vec<String>,
    /// Symmetric, unit diagonal.
    pub p_values: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub significance: Vec<Vec<Significance>>,
    pub multiple_comparison_correction: String,
}

/// Pairwise two-group Kruskal-Wallis tests on per-individual `metric`
/// samples. Defaults to the leaf groups of `spec`.
pub fn kruskal_pairwise(
    rates: &[IndividualRates],
    profiles: &[AttributeProfile],
    spec: &GroupSpec,
    metric: ErrorMetric,
    keys: Option<&[GroupKey]>,
) -> Result<KruskalMatrix, MetricsError> {
    let keys: Vec<GroupKey> = match keys {
        Some(k) => k.to_vec(),
        None => spec.leaf_keys(),
    };
    let m = membership(rates, profiles, spec);
    let samples: Vec<Vec<f64>> = keys
        .iter()
        .map(|k| {
            m.members
                .iter()
                .filter(|(_, l)| GroupSpec::matches(k, l))
                .map(|(r, _)| r.get(metric))
                .collect()
        })
        .collect();
    for (k, s) in keys.iter().zip(&samples) {
        if s.len() < 2 {
            return Err(MetricsError::DegenerateGroup {
                group: spec.label(k),
                size: s.len(),
            });
        }
    }
    let n = keys.len();
    let mut p_values = vec![vec![1.0; n]; n];
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let kw = kruskal_wallis(&[samples[i].clone(), samples[j].clone()])?;
            p_values[i][j] = kw.p_value;
            p_values[j][i] = kw.p_value;
            h[i][j] = kw.h;
            h[j][i] = kw.h;
        }
    }
    let significance = p_values
        .iter()
        .map(|row| row.iter().map(|&p| Significance::of(p)).collect())
        .collect();
    Ok(KruskalMatrix {
        metric,
        labels: keys.iter().map(|k| spec.label(k)).collect(),
        keys,
        p_values,
        h,
        significance,
        multiple_comparison_correction: "none".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trials::{IdentityTrials, TrialPair};
    use std::collections::BTreeMap;

    fn pair(owner: &str, label: PairLabel, score: f64, k: usize) -> TrialPair {
        TrialPair {
            probe_image_id: format!("{owner}_p{k}"),
            reference_image_id: format!("{owner}_r{k}"),
            probe_identity: owner.into(),
            reference_identity: if label == PairLabel::Genuine {
                owner.into()
            } else {
                "other".into()
            },
            label,
            score: Some(score),
        }
    }

    fn rates(id: &str, far: f64, frr: f64) -> IndividualRates {
        IndividualRates {
            identity_id: id.into(),
            far,
            frr,
            genuine_count: 6,
            impostor_count: 50,
            false_accepts: (far * 50.0) as usize,
            false_rejects: (frr * 6.0) as usize,
        }
    }

    fn profile(id: &str, gender: Option<f64>, ethnicity: Option<f64>) -> AttributeProfile {
        let mut values = BTreeMap::new();
        if let Some(g) = gender {
            values.insert("gender".to_string(), g);
        }
        if let Some(e) = ethnicity {
            values.insert("ethnicity".to_string(), e);
        }
        AttributeProfile {
            identity_id: id.into(),
            image_count: 4,
            values,
            coverage: BTreeMap::new(),
        }
    }

    fn spec() -> GroupSpec {
        GroupSpec::new(
            &AttributeSchema::standard(),
            &["gender".to_string(), "ethnicity".to_string()],
        )
        .unwrap()
    }

    #[test]
    fn frr_and_far_counts() {
        let mut pairs: Vec<TrialPair> = (0..6)
            .map(|k| pair("u", PairLabel::Genuine, if k < 2 { 0.1 } else { 0.9 }, k))
            .collect();
        pairs.extend((0..50).map(|k| pair("u", PairLabel::Impostor, 0.2, 100 + k)));
        let t = TrialSet {
            identities: vec![
                IdentityTrials {
                    identity_id: "u".into(),
                    pairs,
                },
                IdentityTrials {
                    identity_id: "v".into(),
                    pairs: vec![pair("v", PairLabel::Impostor, 0.9, 0)],
                },
            ],
            provenance: None,
            skipped: vec![],
        };
        let audit = individual_rates(&t, 0.5).unwrap();
        assert_eq!(audit.rates.len(), 1);
        assert_eq!(audit.rates[0].frr, 1.0 / 3.0);
        assert_eq!(audit.rates[0].far, 0.0);
        assert_eq!(audit.excluded[0].identity_id, "v");
        assert!(individual_rates(&t, f64::NAN).is_err());
    }

    #[test]
    fn keys_layout() {
        let s = spec();
        let keys = s.keys();
        assert_eq!(keys.len(), 3 * 4);
        assert_eq!(keys[0], GroupKey(vec![Some(0), Some(0)]));
        assert_eq!(keys.last().unwrap(), &GroupKey(vec![None, None]));
        assert_eq!(
            s.label(&GroupKey(vec![Some(1), None])),
            "Woman / Asian∪Black∪Caucasian"
        );
        assert_eq!(s.leaf_keys().len(), 6);
        assert!(GroupSpec::new(&AttributeSchema::standard(), &["age".to_string()]).is_err());
        assert!(GroupSpec::new(&AttributeSchema::standard(), &["smile".to_string()]).is_err());
    }

    #[test]
    fn union_means_and_unassigned() {
        let r = vec![
            rates("a", 0.2, 0.0),
            rates("b", 0.4, 0.5),
            rates("c", 0.9, 0.9),
        ];
        let p = vec![
            profile("a", Some(0.0), Some(0.0)),
            profile("b", Some(0.0), Some(2.0)),
            profile("c", None, Some(2.0)),
        ];
        let s = spec();
        let audit = group_rates(&r, &p, &s);
        let man_all = audit.find(&GroupKey(vec![Some(0), None])).unwrap();
        assert!((man_all.far.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(man_all.member_count, 2);
        let empty = audit.find(&GroupKey(vec![Some(1), Some(1)])).unwrap();
        assert_eq!((empty.far, empty.member_count), (None, 0));
        assert_eq!(audit.unassigned, vec!["c".to_string()]);
        let overall = audit.find(&GroupKey(vec![None, None])).unwrap();
        assert_eq!(overall.member_count, 2);
    }

    #[test]
    fn single_attribute_equals_collapsed_combination() {
        let r: Vec<IndividualRates> = (0..12)
            .map(|i| {
                rates(
                    &format!("u{i}"),
                    (i as f64) / 50.0,
                    ((i * 7) % 6) as f64 / 6.0,
                )
            })
            .collect();
        let p: Vec<AttributeProfile> = (0..12)
            .map(|i| profile(&format!("u{i}"), Some((i % 2) as f64), Some((i % 3) as f64)))
            .collect();
        let single = GroupSpec::new(&AttributeSchema::standard(), &["gender".to_string()]).unwrap();
        let a = group_rates(&r, &p, &single);
        let b = group_rates(&r, &p, &spec());
        for g in 0..2 {
            let x = a.find(&GroupKey(vec![Some(g)])).unwrap();
            let y = b.find(&GroupKey(vec![Some(g), None])).unwrap();
            assert_eq!(
                (x.far, x.frr, x.member_count),
                (y.far, y.frr, y.member_count)
            );
        }
    }

    #[test]
    fn reported_deltas() {
        let g = |label: &str, far: f64, frr: f64| GroupRates {
            key: GroupKey(vec![]),
            label: label.into(),
            far: Some(far),
            frr: Some(frr),
            member_count: 1,
        };
        let d = fairness_delta(&g("CM", 0.051, 0.0), &g("BW", 0.044, 0.0)).unwrap();
        assert!((d.delta_far - 0.007).abs() < 1e-12);
        let d = fairness_delta(&g("BM", 0.0, 0.087), &g("CW", 0.0, 0.061)).unwrap();
        assert!((d.delta_frr - 0.026).abs() < 1e-12);
        let same = fairness_delta(&g("x", 0.3, 0.2), &g("x", 0.3, 0.2)).unwrap();
        assert_eq!((same.delta_far, same.delta_frr), (0.0, 0.0));
        let mut empty = g("e", 0.0, 0.0);
        empty.far = None;
        assert!(fairness_delta(&empty, &g("x", 0.1, 0.1)).is_err());
    }

    #[test]
    fn kruskal_matrix() {
        let mut r = Vec::new();
        let mut p = Vec::new();
        for i in 0..5 {
            r.push(rates(&format!("m{i}"), (i + 1) as f64 / 50.0, 0.0));
            p.push(profile(&format!("m{i}"), Some(0.0), Some(0.0)));
            r.push(rates(&format!("w{i}"), (i + 6) as f64 / 50.0, 0.0));
            p.push(profile(&format!("w{i}"), Some(1.0), Some(0.0)));
        }
        let single = GroupSpec::new(&AttributeSchema::standard(), &["gender".to_string()]).unwrap();
        let m = kruskal_pairwise(&r, &p, &single, ErrorMetric::Far, None).unwrap();
        assert_eq!(m.p_values[0][0], 1.0);
        assert_eq!(m.p_values[0][1], m.p_values[1][0]);
        assert!((m.h[0][1] - 75.0 / 11.0).abs() < 1e-12);
        assert!(m.significance[0][1].p01);

        // only the Man/Asian and Woman/Asian cells are populated
        assert!(matches!(
            kruskal_pairwise(&r, &p, &spec(), ErrorMetric::Far, None),
            Err(MetricsError::DegenerateGroup { .. })
        ));
    }
}
