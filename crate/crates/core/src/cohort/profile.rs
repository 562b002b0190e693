use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AttributeSchema, IdentityIndex, ImageAttributes, VariableKind};

/// One individual's characteristics aggregated over their images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeProfile {
    pub identity_id: String,
    pub image_count: usize,
    /// Present variables only; a variable with no observed value is absent
    /// here and has coverage 0.
    pub values: BTreeMap<String, f64>,
    /// Fraction of the individual's images carrying a value.
    pub coverage: BTreeMap<String, f64>,
}

impl AttributeProfile {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn is_missing(&self, name: &str) -> bool {
        !self.values.contains_key(name)
    }
}

/// Mean of the present values, summed in sorted order relative to the
/// smallest value. Identical inputs return that value exactly.
fn mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let base = values[0];
    let shift: f64 = values.iter().map(|v| v - base).sum();
    base + shift / values.len() as f64
}

/// Boolean mode; exact ties resolve to 1.
fn boolean_mode(values: &[f64]) -> f64 {
    let ones = values.iter().filter(|&&v| v == 1.0).count();
    if 2 * ones >= values.len() {
        1.0
    } else {
        0.0
    }
}

/// Most frequent level; ties resolve to the lowest level index.
fn categorical_mode(values: &[f64], n_levels: usize) -> f64 {
    let mut counts = vec![0usize; n_levels];
    for &v in values {
        counts[v as usize] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best as f64
}

/// Aggregates per-image attributes into one profile per identity: the mean
/// for continuous variables, the mode for boolean and categorical ones.
/// Missing image values are skipped.
pub fn aggregate_profiles(
    identities: &IdentityIndex,
    attributes: &BTreeMap<String, ImageAttributes>,
    schema: &AttributeSchema,
) -> Vec<AttributeProfile> {
    let mut profiles = Vec::with_capacity(identities.len());
    for (identity_id, images) in identities {
        let image_count = images.len();
        let mut values = BTreeMap::new();
        let mut coverage = BTreeMap::new();
        for (slot, var) in schema.variables.iter().enumerate() {
            let mut present: Vec<f64> = images
                .iter()
                .filter_map(|img| attributes.get(img).and_then(|a| a.values[slot]))
                .collect();
            let frac = if image_count == 0 {
                0.0
            } else {
                present.len() as f64 / image_count as f64
            };
            coverage.insert(var.name.clone(), frac);
            if present.is_empty() {
                continue;
            }
            let v = match &var.kind {
                VariableKind::Boolean => boolean_mode(&present),
                VariableKind::Categorical { levels } => categorical_mode(&present, levels.len()),
                _ => mean(&mut present),
            };
            values.insert(var.name.clone(), v);
        }
        profiles.push(AttributeProfile {
            identity_id: identity_id.clone(),
            image_count,
            values,
            coverage,
        });
    }
    profiles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Family, Variable};
    use proptest::prelude::*;

    fn schema() -> AttributeSchema {
        AttributeSchema::new(
            vec![
                Variable {
                    name: "beard".into(),
                    family: Family::FacialHair,
                    kind: VariableKind::ContinuousUnit,
                },
                Variable {
                    name: "glasses".into(),
                    family: Family::Accessory,
                    kind: VariableKind::Boolean,
                },
                Variable {
                    name: "yaw".into(),
                    family: Family::Orientation,
                    kind: VariableKind::ContinuousRange {
                        lo: -180.0,
                        hi: 180.0,
                    },
                },
                Variable {
                    name: "ethnicity".into(),
                    family: Family::Protected,
                    kind: VariableKind::Categorical {
                        levels: vec!["Asian".into(), "Black".into(), "Caucasian".into()],
                    },
                },
            ],
            vec!["ethnicity".into()],
        )
        .unwrap()
    }

    fn build(rows: &[[Option<f64>; 4]]) -> (IdentityIndex, BTreeMap<String, ImageAttributes>) {
        let mut idx = IdentityIndex::new();
        let mut attrs = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            let img = format!("img{i}");
            idx.entry("u".to_string()).or_default().push(img.clone());
            attrs.insert(
                img.clone(),
                ImageAttributes {
                    image_id: img,
                    values: r.to_vec(),
                },
            );
        }
        (idx, attrs)
    }

    #[test]
    fn paper_style_examples() {
        let rows = [
            [Some(0.2), Some(1.0), Some(10.0), Some(2.0)],
            [Some(0.4), Some(1.0), Some(-10.0), Some(0.0)],
            [Some(0.6), Some(0.0), Some(30.0), Some(2.0)],
            [Some(0.8), Some(0.0), None, Some(0.0)],
        ];
        let (idx, attrs) = build(&rows);
        let p = &aggregate_profiles(&idx, &attrs, &schema())[0];
        assert!((p.get("beard").unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(p.get("glasses"), Some(1.0));
        assert_eq!(p.get("yaw"), Some(10.0));
        // 2-2 tie between Asian and Caucasian resolves to Asian
        assert_eq!(p.get("ethnicity"), Some(0.0));
        assert_eq!(p.coverage["yaw"], 0.75);
        assert_eq!(p.image_count, 4);
    }

    #[test]
    fn all_missing_is_flagged() {
        let (idx, attrs) = build(&[[None, None, None, None], [None, Some(0.0), None, None]]);
        let p = &aggregate_profiles(&idx, &attrs, &schema())[0];
        assert!(p.is_missing("beard"));
        assert_eq!(p.coverage["beard"], 0.0);
        assert_eq!(p.get("glasses"), Some(0.0));
    }

    proptest! {
        #[test]
        fn identical_values_are_exact(v in 0.0f64..=1.0, n in 1usize..9) {
            let rows: Vec<[Option<f64>; 4]> = (0..n).map(|_| [Some(v), Some(1.0), Some(v * 90.0), Some(1.0)]).collect();
            let (idx, attrs) = build(&rows);
            let p = &aggregate_profiles(&idx, &attrs, &schema())[0];
            prop_assert_eq!(p.get("beard"), Some(v));
            prop_assert_eq!(p.get("yaw"), Some(v * 90.0));
        }

        #[test]
        fn permutation_invariant(
            vals in proptest::collection::vec((0.0f64..=1.0, any::<bool>(), proptest::option::of(-180.0f64..180.0)), 1..8),
            seed in any::<u64>(),
        ) {
            let rows: Vec<[Option<f64>; 4]> = vals.iter().map(|(b, g, y)| [Some(*b), Some(*g as u8 as f64), *y, Some(0.0)]).collect();
            let mut shuffled = rows.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let (i1, a1) = build(&rows);
            let (i2, a2) = build(&shuffled);
            let p1 = &aggregate_profiles(&i1, &a1, &schema())[0];
            let p2 = &aggregate_profiles(&i2, &a2, &schema())[0];
            prop_assert_eq!(&p1.values, &p2.values);
            for (name, c) in &p1.coverage {
                let scaled = c * p1.image_count as f64;
                prop_assert!((scaled - scaled.round()).abs() < 1e-9, "{}", name);
            }
        }
    }
}
