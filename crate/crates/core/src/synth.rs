//! Seeded synthetic cohorts with plantable biases.
//!
//! Geometry: coordinate 0 is a direction shared by every identity. A small
//! block of coordinates carries per-image nuisance shared across identities;
//! the remaining coordinates hold identity-specific directions. An identity's centroid leans toward the
//! shared direction by its *proximity*; higher proximity raises its impostor
//! scores (FAR). Its images add nuisance and isotropic noise scaled by a
//! per-identity *noise scale*; a higher scale lowers its genuine scores (FRR).
//!
//! proximity = clamp(1 − margin, 0, 0.95), with
//! margin = base_margin + cell margin_shift − Σ far-like strength · (q − ½)
//! and noise scale = exp(Σ frr-like strength · (q − ½)), where q ∈ [0, 1] is
//! the identity's latent level of the affected characteristic.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{
    write_attributes, write_embeddings_binary, AttributeSchema, Cohort, CohortError,
    EmbeddingRecord, ImageAttributes, VariableKind,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("simpson planting needs two categorical group attributes with 2+ levels each")]
    InsufficientStructure,
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCell {
    /// One level name per group attribute.
    pub levels: Vec<String>,
    pub count: usize,
    #[serde(default)]
    pub margin_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectTarget {
    FarLike,
    FrrLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEffect {
    pub variable: String,
    pub target: EffectTarget,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub group_attributes: Vec<String>,
    pub groups: Vec<GroupCell>,
    pub images_per_identity: usize,
    pub dim: usize,
    pub base_margin: f64,
    pub attribute_effects: Vec<AttributeEffect>,
    pub seed: u64,
    /// Weight of the identity centroid in each image.
    pub signal: f64,
    /// Weight of the shared nuisance block.
    pub nuisance: f64,
    /// Weight of isotropic noise.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::balanced(&AttributeSchema::standard(), 50)
            .expect("standard schema has gender and ethnicity")
    }
}

impl SynthConfig {
    /// Every (gender, ethnicity) cell with `per_group` identities and no shifts.
    pub fn balanced(schema: &AttributeSchema, per_group: usize) -> Result<Self, SynthError> {
        let attrs = vec!["gender".to_string(), "ethnicity".to_string()];
        let levels: Vec<Vec<String>> = attrs
            .iter()
            .map(|a| {
                schema
                    .variable(a)
                    .and_then(|v| v.kind.levels())
                    .map(|l| l.to_vec())
                    .ok_or(SynthError::InsufficientStructure)
            })
            .collect::<Result<_, _>>()?;
        let mut groups = Vec::new();
        for g in &levels[0] {
            for e in &levels[1] {
                groups.push(GroupCell {
                    levels: vec![g.clone(), e.clone()],
                    count: per_group,
                    margin_shift: 0.0,
                });
            }
        }
        Ok(Self {
            group_attributes: attrs,
            groups,
            images_per_identity: 4,
            dim: 512,
            base_margin: 0.7,
            attribute_effects: Vec::new(),
            seed: 0,
            signal: 0.72,
            nuisance: 0.45,
            noise: 0.2,
        })
    }

    pub fn total_identities(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    pub fn validate(&self, schema: &AttributeSchema) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.dim < 2 {
            return bad(format!("dim must be >= 2, got {}", self.dim));
        }
        if self.images_per_identity < 2 {
            return bad("images_per_identity must be >= 2".into());
        }
        if self.groups.is_empty() {
            return bad("no groups".into());
        }
        for w in [self.base_margin, self.signal, self.nuisance, self.noise] {
            if !w.is_finite() {
                return bad("non-finite geometry parameter".into());
            }
        }
        if !(self.signal > 0.0) || self.nuisance < 0.0 || self.noise < 0.0 {
            return bad("signal must be > 0, nuisance and noise >= 0".into());
        }
        for a in &self.group_attributes {
            match schema.variable(a) {
                Some(v) if v.kind.is_categorical() => {}
                _ => return bad(format!("group attribute `{a}` is not categorical")),
            }
        }
        for cell in &self.groups {
            if cell.count < 1 {
                return bad(format!("group {:?} has count 0", cell.levels));
            }
            if !cell.margin_shift.is_finite() {
                return bad(format!("group {:?} has non-finite shift", cell.levels));
            }
            if cell.levels.len() != self.group_attributes.len() {
                return bad(format!(
                    "group {:?} does not match group attributes",
                    cell.levels
                ));
            }
            for (a, l) in self.group_attributes.iter().zip(&cell.levels) {
                let levels = schema
                    .variable(a)
                    .and_then(|v| v.kind.levels())
                    .unwrap_or(&[]);
                if !levels.contains(l) {
                    return bad(format!("unknown level `{l}` for `{a}`"));
                }
            }
        }
        for e in &self.attribute_effects {
            if !e.strength.is_finite() {
                return bad(format!(
                    "effect on `{}` has non-finite strength",
                    e.variable
                ));
            }
            match schema.variable(&e.variable) {
                Some(v) if !v.kind.is_categorical() && !self.group_attributes.contains(&v.name) => {
                }
                _ => return bad(format!("`{}` cannot carry an effect", e.variable)),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityTruth {
    pub identity_id: String,
    pub group: Vec<String>,
    pub proximity: f64,
    pub noise_scale: f64,
}

/// Intended sign pattern of a Simpson-style reversal: the marginal gap
/// between two levels of the first attribute versus one cross-cell gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpsonPattern {
    pub marginal_i: Vec<String>,
    pub marginal_j: Vec<String>,
    pub cell_i: Vec<String>,
    pub cell_j: Vec<String>,
    /// Expected sign of far(marginal_i) − far(marginal_j) (−1, 0, 1).
    pub expected_marginal_sign: i8,
    /// Expected sign of far(cell_i) − far(cell_j).
    pub expected_cell_sign: i8,
    pub reversal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub config: SynthConfig,
    pub planted_effects: Vec<AttributeEffect>,
    pub simpson: Option<SimpsonPattern>,
    pub identities: Vec<IdentityTruth>,
}

pub struct SynthOutput {
    pub records: Vec<EmbeddingRecord>,
    pub attributes: Vec<ImageAttributes>,
    pub cohort: Cohort,
    pub ground_truth: GroundTruth,
}

fn sign(v: f64) -> i8 {
    if v > 1e-12 {
        1
    } else if v < -1e-12 {
        -1
    } else {
        0
    }
}

/// The comparison planted by [`plant_simpson`], evaluated on the config's
/// cell shifts: marginal = second vs first level of attribute 0; cell =
/// (second level, last level) vs (first level, second level of attribute 1,
/// or its first level when it has only two).
pub fn expected_simpson_pattern(
    config: &SynthConfig,
    schema: &AttributeSchema,
) -> Option<SimpsonPattern> {
    if config.group_attributes.len() != 2 {
        return None;
    }
    let levels: Vec<&[String]> = config
        .group_attributes
        .iter()
        .map(|a| schema.variable(a).and_then(|v| v.kind.levels()))
        .collect::<Option<_>>()?;
    if levels.iter().any(|l| l.len() < 2) {
        return None;
    }
    let (a, b) = (levels[0], levels[1]);
    let bx = b.len() - 1;
    let by = if b.len() >= 3 { 1 } else { 0 };
    // expected FAR gaps carry the sign of the negated count-weighted margin gap
    let weighted = |level: &str| -> Option<f64> {
        let cells: Vec<&GroupCell> = config
            .groups
            .iter()
            .filter(|c| c.levels[0] == level)
            .collect();
        let n: usize = cells.iter().map(|c| c.count).sum();
        (n > 0).then(|| {
            cells
                .iter()
                .map(|c| c.margin_shift * c.count as f64)
                .sum::<f64>()
                / n as f64
        })
    };
    let cell = |la: &str, lb: &str| -> Option<f64> {
        config
            .groups
            .iter()
            .find(|c| c.levels[0] == la && c.levels[1] == lb)
            .map(|c| c.margin_shift)
    };
    let marginal = -(weighted(&a[1])? - weighted(&a[0])?);
    let cross = -(cell(&a[1], &b[bx])? - cell(&a[0], &b[by])?);
    let (ms, cs) = (sign(marginal), sign(cross));
    Some(SimpsonPattern {
        marginal_i: vec![a[1].clone(), "*".into()],
        marginal_j: vec![a[0].clone(), "*".into()],
        cell_i: vec![a[1].clone(), b[bx].clone()],
        cell_j: vec![a[0].clone(), b[by].clone()],
        expected_marginal_sign: ms,
        expected_cell_sign: cs,
        reversal: ms != 0 && cs != 0 && ms != cs,
    })
}

/// Rewrites the cell sizes and shifts of `base` so that the marginal FAR gap
/// between the two levels of the first group attribute points one way while
/// the cross-cell gap of [`expected_simpson_pattern`] points the other way.
pub fn plant_simpson(
    base: &SynthConfig,
    schema: &AttributeSchema,
) -> Result<SynthConfig, SynthError> {
    if base.group_attributes.len() != 2 {
        return Err(SynthError::InsufficientStructure);
    }
    let levels: Vec<Vec<String>> = base
        .group_attributes
        .iter()
        .map(|a| {
            schema
                .variable(a)
                .and_then(|v| v.kind.levels())
                .map(|l| l.to_vec())
        })
        .collect::<Option<_>>()
        .ok_or(SynthError::InsufficientStructure)?;
    if levels.iter().any(|l| l.len() < 2) {
        return Err(SynthError::InsufficientStructure);
    }
    let (a, b) = (&levels[0], &levels[1]);
    let bx = b.len() - 1;
    let by = if b.len() >= 3 { 1 } else { 0 };
    let cells = a.len() * b.len();
    let n = (base.total_identities() / cells).max(4);
    let (large, small) = (2 * n, (n / 2).max(2));

    let mut groups = Vec::new();
    for (ia, la) in a.iter().enumerate() {
        for (ib, lb) in b.iter().enumerate() {
            let (count, margin_shift) = match ia {
                // first level: mostly a large low-FAR cell, plus a small high-FAR cell
                0 if ib == bx => (large, 0.10),
                0 if ib == by => (small, -0.10),
                0 => (small, 0.05),
                // second level: large high-FAR cells, small moderate cell at bx
                1 if ib == bx => (small, 0.0),
                1 => (large, -0.05),
                _ => (n, 0.0),
            };
            groups.push(GroupCell {
                levels: vec![la.clone(), lb.clone()],
                count,
                margin_shift,
            });
        }
    }
    Ok(SynthConfig {
        groups,
        ..base.clone()
    })
}

fn unit_gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Generates the cohort. Every identity draws from its own ChaCha stream
/// keyed by (seed, identity index), so output is a pure function of the config.
pub fn generate(config: &SynthConfig, schema: &AttributeSchema) -> Result<SynthOutput, SynthError> {
    config.validate(schema)?;
    let dim = config.dim;
    let k = 3.min((dim - 1) / 2);
    let nuisance_range = 1..1 + k;
    let identity_range = 1 + k..dim;

    let group_slots: Vec<usize> = config
        .group_attributes
        .iter()
        .map(|a| schema.index_of(a).expect("validated"))
        .collect();
    let jitter_unit = Normal::new(0.0, 0.05).expect("valid sd");

    let mut records = Vec::with_capacity(config.total_identities() * config.images_per_identity);
    let mut attributes = Vec::with_capacity(records.capacity());
    let mut truths = Vec::with_capacity(config.total_identities());
    let mut index = 0u64;
    for cell in &config.groups {
        let cell_levels: Vec<f64> = group_slots
            .iter()
            .zip(&cell.levels)
            .map(|(&slot, l)| {
                let levels = schema.variables[slot].kind.levels().expect("categorical");
                levels.iter().position(|x| x == l).expect("validated") as f64
            })
            .collect();
        for _ in 0..cell.count {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(index + 1);
            let identity_id = format!("id{index:05}");
            index += 1;

            // one latent level per variable, drawn in schema order
            let latent: Vec<f64> = schema
                .variables
                .iter()
                .map(|_| rng.random::<f64>())
                .collect();
            let mut margin = config.base_margin + cell.margin_shift;
            let mut log_scale = 0.0;
            for e in &config.attribute_effects {
                let q = latent[schema.index_of(&e.variable).expect("validated")] - 0.5;
                match e.target {
                    EffectTarget::FarLike => margin -= e.strength * q,
                    EffectTarget::FrrLike => log_scale += e.strength * q,
                }
            }
            let proximity = (1.0 - margin).clamp(0.0, 0.95);
            let noise_scale = f64::exp(log_scale);

            let mut centroid = vec![0.0; dim];
            centroid[0] = proximity.sqrt();
            let z = unit_gaussian(&mut rng, identity_range.len());
            let spread = (1.0 - proximity).sqrt();
            for (c, zi) in centroid[identity_range.clone()].iter_mut().zip(&z) {
                *c = spread * zi;
            }

            for img in 0..config.images_per_identity {
                let mut x: Vec<f64> = centroid.iter().map(|c| config.signal * c).collect();
                if k > 0 {
                    let w = unit_gaussian(&mut rng, k);
                    for (xi, wi) in x[nuisance_range.clone()].iter_mut().zip(&w) {
                        *xi += noise_scale * config.nuisance * wi;
                    }
                }
                let e = unit_gaussian(&mut rng, dim);
                for (xi, ei) in x.iter_mut().zip(&e) {
                    *xi += noise_scale * config.noise * ei;
                }
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let image_id = format!("{identity_id}_{img}");
                records.push(EmbeddingRecord {
                    image_id: image_id.clone(),
                    identity_id: identity_id.clone(),
                    vector: x.iter().map(|v| (v / norm) as f32).collect(),
                });

                let mut values = Vec::with_capacity(schema.len());
                for (slot, var) in schema.variables.iter().enumerate() {
                    if let Some(g) = group_slots.iter().position(|&s| s == slot) {
                        values.push(Some(cell_levels[g]));
                        continue;
                    }
                    let q = latent[slot];
                    let v = match &var.kind {
                        VariableKind::ContinuousUnit => {
                            (q + jitter_unit.sample(&mut rng)).clamp(0.0, 1.0)
                        }
                        VariableKind::ContinuousRange { lo, hi } => {
                            let mid = 0.5 * (lo + hi);
                            let half = 0.5 * (hi - lo);
                            let jitter: f64 = StandardNormal.sample(&mut rng);
                            (mid + half * (q - 0.5) + 0.02 * half * jitter).clamp(*lo, *hi)
                        }
                        VariableKind::Boolean => f64::from(rng.random::<f64>() < 0.6 * q),
                        VariableKind::Categorical { levels } => {
                            ((q * levels.len() as f64) as usize).min(levels.len() - 1) as f64
                        }
                    };
                    values.push(Some(v));
                }
                attributes.push(ImageAttributes { image_id, values });
            }
            truths.push(IdentityTruth {
                identity_id,
                group: cell.levels.clone(),
                proximity,
                noise_scale,
            });
        }
    }

    let cohort = Cohort::new(records.clone(), attributes.clone(), schema)?;
    Ok(SynthOutput {
        records,
        attributes,
        cohort,
        ground_truth: GroundTruth {
            seed: config.seed,
            config: config.clone(),
            planted_effects: config.attribute_effects.clone(),
            simpson: expected_simpson_pattern(config, schema),
            identities: truths,
        },
    })
}

pub const EMBEDDINGS_FILE: &str = "embeddings.freb";
pub const ATTRIBUTES_FILE: &str = "attributes.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SCHEMA_FILE: &str = "schema.toml";

/// Writes embeddings (binary), attributes, schema and the ground-truth manifest.
pub fn write_synth(
    dir: &Path,
    out: &SynthOutput,
    schema: &AttributeSchema,
) -> Result<(), SynthError> {
    let io = |p: &Path, e: std::io::Error| SynthError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write_embeddings_binary(&dir.join(EMBEDDINGS_FILE), &out.records)?;
    write_attributes(&dir.join(ATTRIBUTES_FILE), &out.attributes, schema)?;
    let schema_path = dir.join(SCHEMA_FILE);
    std::fs::write(&schema_path, schema.to_toml_string()).map_err(|e| io(&schema_path, e))?;
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let json = serde_json::to_string_pretty(&out.ground_truth).expect("ground truth serializes");
    std::fs::write(&gt_path, json + "\n").map_err(|e| io(&gt_path, e))
}
