//! Verification trials: genuine/impostor pair generation per identity and
//! cosine scoring.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Cohort;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrialsError {
    #[error("need at least 2 identities with 2+ images, found {0}")]
    TooFewIdentities(usize),
    #[error("identity `{identity}` cannot get {requested} distinct impostor pairs (only {available} exist)")]
    NegativesUnattainable {
        identity: String,
        requested: usize,
        available: usize,
    },
    #[error("no embedding for image `{0}`")]
    MissingEmbedding(String),
    #[error("zero-norm embedding for image `{0}`")]
    ZeroNorm(String),
    #[error("no identity known for image `{0}`")]
    UnknownIdentity(String),
    #[error("pair {probe}/{reference}: label `{label}` contradicts identities")]
    LabelMismatch {
        probe: String,
        reference: String,
        label: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Genuine,
    Impostor,
}

impl PairLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PairLabel::Genuine => "genuine",
            PairLabel::Impostor => "impostor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPair {
    pub probe_image_id: String,
    pub reference_image_id: String,
    pub probe_identity: String,
    pub reference_identity: String,
    pub label: PairLabel,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveMode {
    /// Every unordered image pair, subsampled without replacement down to
    /// `positives_per_identity` when there are more.
    AllPairsCapped,
    /// Every unordered image pair, no cap.
    AllPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialPolicy {
    pub positives_per_identity: usize,
    pub negatives_per_identity: usize,
    pub positive_mode: PositiveMode,
}

impl Default for TrialPolicy {
    fn default() -> Self {
        Self {
            positives_per_identity: 6,
            negatives_per_identity: 50,
            positive_mode: PositiveMode::AllPairsCapped,
        }
    }
}

/// The trials owned by one identity (the probe side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityTrials {
    pub identity_id: String,
    pub pairs: Vec<TrialPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialProvenance {
    pub seed: u64,
    pub policy: TrialPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub identities: Vec<IdentityTrials>,
    /// Generation parameters; absent for imported trial files.
    pub provenance: Option<TrialProvenance>,
    /// Identities left out of generation (fewer than two images).
    pub skipped: Vec<String>,
}

impl TrialSet {
    pub fn pairs(&self) -> impl Iterator<Item = &TrialPair> {
        self.identities.iter().flat_map(|t| t.pairs.iter())
    }

    pub fn len(&self) -> usize {
        self.identities.iter().map(|t| t.pairs.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scored(&self) -> bool {
        self.pairs().all(|p| p.score.is_some())
    }

    /// Scores split by label, in pair order. Unscored pairs are skipped.
    pub fn scores_by_label(&self) -> (Vec<f64>, Vec<f64>) {
        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        for p in self.pairs() {
            if let Some(s) = p.score {
                match p.label {
                    PairLabel::Genuine => genuine.push(s),
                    PairLabel::Impostor => impostor.push(s),
                }
            }
        }
        (genuine, impostor)
    }
}

/// Accept decision: true iff `score` strictly exceeds `tau`.
#[inline]
pub fn decide(score: f64, tau: f64) -> bool {
    score > tau
}

/// Cosine similarity accumulated in `f64`; `None` if either vector has zero norm.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let x = x.to_f64().unwrap_or(f64::NAN);
        let y = y.to_f64().unwrap_or(f64::NAN);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

fn binomial2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Generates genuine and impostor pairs for every identity with two or more
/// images. Output depends only on (cohort, policy, seed).
pub fn generate_trials(
    cohort: &Cohort,
    policy: &TrialPolicy,
    seed: u64,
) -> Result<TrialSet, TrialsError> {
    let all: Vec<(&String, &Vec<String>)> = cohort.identities().iter().collect();
    let eligible: Vec<usize> = (0..all.len()).filter(|&i| all[i].1.len() >= 2).collect();
    let skipped: Vec<String> = all
        .iter()
        .filter(|(_, imgs)| imgs.len() < 2)
        .map(|(id, _)| (*id).clone())
        .collect();
    for id in &skipped {
        log::warn!("identity `{id}` has fewer than 2 images; skipped");
    }
    if eligible.len() < 2 {
        return Err(TrialsError::TooFewIdentities(eligible.len()));
    }
    let total_images: usize = all.iter().map(|(_, imgs)| imgs.len()).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(eligible.len());
    for &u in &eligible {
        let (identity, images) = all[u];
        let n = images.len();
        let available = n * (total_images - n);
        if available < policy.negatives_per_identity {
            return Err(TrialsError::NegativesUnattainable {
                identity: identity.clone(),
                requested: policy.negatives_per_identity,
                available,
            });
        }

        let mut all_pairs = Vec::with_capacity(binomial2(n));
        for i in 0..n {
            for j in i + 1..n {
                all_pairs.push((i, j));
            }
        }
        let chosen: Vec<(usize, usize)> = match policy.positive_mode {
            PositiveMode::AllPairsCapped if all_pairs.len() > policy.positives_per_identity => {
                let mut idx =
                    sample(&mut rng, all_pairs.len(), policy.positives_per_identity).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|k| all_pairs[k]).collect()
            }
            _ => all_pairs,
        };
        let mut pairs: Vec<TrialPair> = chosen
            .into_iter()
            .map(|(i, j)| TrialPair {
                probe_image_id: images[i].clone(),
                reference_image_id: images[j].clone(),
                probe_identity: identity.clone(),
                reference_identity: identity.clone(),
                label: PairLabel::Genuine,
                score: None,
            })
            .collect();

        let mut seen: HashSet<(usize, usize, usize)> = HashSet::new();
        while seen.len() < policy.negatives_per_identity {
            let probe = rng.random_range(0..n);
            let mut other = rng.random_range(0..all.len() - 1);
            if other >= u {
                other += 1;
            }
            let ref_images = all[other].1;
            let reference = rng.random_range(0..ref_images.len());
            if seen.insert((probe, other, reference)) {
                pairs.push(TrialPair {
                    probe_image_id: images[probe].clone(),
                    reference_image_id: ref_images[reference].clone(),
                    probe_identity: identity.clone(),
                    reference_identity: all[other].0.clone(),
                    label: PairLabel::Impostor,
                    score: None,
                });
            }
        }
        out.push(IdentityTrials {
            identity_id: identity.clone(),
            pairs,
        });
    }
    Ok(TrialSet {
        identities: out,
        provenance: Some(TrialProvenance {
            seed,
            policy: *policy,
        }),
        skipped,
    })
}

/// Scores every pair with the cosine similarity of its two embeddings.
/// Pairs are scored in parallel; output order is the input order.
pub fn score_trials(trials: &TrialSet, cohort: &Cohort) -> Result<TrialSet, TrialsError> {
    let mut scored = trials.clone();
    for ident in scored.identities.iter_mut() {
        let scores: Vec<Result<f64, TrialsError>> = ident
            .pairs
            .par_iter()
            .map(|p| {
                let a = cohort
                    .record(&p.probe_image_id)
                    .ok_or_else(|| TrialsError::MissingEmbedding(p.probe_image_id.clone()))?;
                let b = cohort
                    .record(&p.reference_image_id)
                    .ok_or_else(|| TrialsError::MissingEmbedding(p.reference_image_id.clone()))?;
                match cosine(&a.vector, &b.vector) {
                    Some(s) => Ok(s),
                    None => {
                        let zero = if a.vector.iter().all(|v| *v == 0.0) {
                            a
                        } else {
                            b
                        };
                        Err(TrialsError::ZeroNorm(zero.image_id.clone()))
                    }
                }
            })
            .collect();
        for (p, s) in ident.pairs.iter_mut().zip(scores) {
            p.score = Some(s?);
        }
    }
    Ok(scored)
}

const TRIAL_HEADER: [&str; 6] = [
    "probe_image_id",
    "reference_image_id",
    "label",
    "score",
    "probe_identity",
    "reference_identity",
];

fn io_err(path: &Path, e: impl ToString) -> TrialsError {
    TrialsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes the trial table. The first four columns are
/// `probe_image_id,reference_image_id,label,score`; the two identity columns
/// follow so the file can be audited without embeddings.
pub fn write_trials(path: &Path, trials: &TrialSet) -> Result<(), TrialsError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(TRIAL_HEADER).map_err(|e| io_err(path, e))?;
    for p in trials.pairs() {
        let score = p.score.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            p.probe_image_id.as_str(),
            p.reference_image_id.as_str(),
            p.label.as_str(),
            score.as_str(),
            p.probe_identity.as_str(),
            p.reference_identity.as_str(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a trial table. Identities come from the identity columns when
/// present, otherwise from `identity_of` (image_id -> identity_id).
pub fn read_trials(
    path: &Path,
    identity_of: Option<&HashMap<String, String>>,
) -> Result<TrialSet, TrialsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let header = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(c_probe), Some(c_ref), Some(c_label), Some(c_score)) = (
        col("probe_image_id"),
        col("reference_image_id"),
        col("label"),
        col("score"),
    ) else {
        return Err(io_err(
            path,
            "missing one of probe_image_id, reference_image_id, label, score",
        ));
    };
    let c_pid = col("probe_identity");
    let c_rid = col("reference_identity");

    let lookup =
        |row: &csv::StringRecord, c: Option<usize>, image: &str| -> Result<String, TrialsError> {
            match c.and_then(|c| row.get(c)).filter(|s| !s.is_empty()) {
                Some(s) => Ok(s.to_string()),
                None => identity_of
                    .and_then(|m| m.get(image).cloned())
                    .ok_or_else(|| TrialsError::UnknownIdentity(image.to_string())),
            }
        };

    let mut grouped: BTreeMap<String, Vec<TrialPair>> = BTreeMap::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| io_err(path, e))?;
        let probe = row[c_probe].to_string();
        let reference = row[c_ref].to_string();
        let label = match &row[c_label] {
            "genuine" => PairLabel::Genuine,
            "impostor" => PairLabel::Impostor,
            other => {
                return Err(io_err(
                    path,
                    format!("row {}: bad label `{other}`", line + 2),
                ))
            }
        };
        let score = match &row[c_score] {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .map_err(|e| io_err(path, format!("row {}: {e}", line + 2)))?,
            ),
        };
        let probe_identity = lookup(&row, c_pid, &probe)?;
        let reference_identity = lookup(&row, c_rid, &reference)?;
        let consistent = (label == PairLabel::Genuine) == (probe_identity == reference_identity);
        if !consistent || (label == PairLabel::Genuine && probe == reference) {
            return Err(TrialsError::LabelMismatch {
                probe,
                reference,
                label: label.as_str().into(),
            });
        }
        grouped
            .entry(probe_identity.clone())
            .or_default()
            .push(TrialPair {
                probe_image_id: probe,
                reference_image_id: reference,
                probe_identity,
                reference_identity,
                label,
                score,
            });
    }
    Ok(TrialSet {
        identities: grouped
            .into_iter()
            .map(|(identity_id, pairs)| IdentityTrials { identity_id, pairs })
            .collect(),
        provenance: None,
        skipped: Vec::new(),
    })
}
