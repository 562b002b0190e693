//! End-to-end orchestration: trials → calibration → group audit →
//! explanatory analysis → bundle.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, ThresholdPolicy};
use crate::cohort::{AttributeProfile, AttributeSchema, Cohort};
use crate::explain::{explain, EncodingConfig};
use crate::metrics::{
    comparable_pairs, fairness_deltas, group_rates, individual_rates, kruskal_pairwise,
    ErrorMetric, GroupSpec,
};
use crate::report::{emit_bundle, AuditBundle, PolicyAnalysis, SeedRecord, ToolInfo, TrialSummary};
use crate::synth::{self, plant_simpson, write_synth, SynthConfig};
use crate::trials::{
    generate_trials, score_trials, write_trials, PairLabel, TrialPolicy, TrialSet,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub policies: Vec<ThresholdPolicy>,
    pub group_by: Vec<String>,
    pub encoding: EncodingConfig,
    /// Run the correlation and regression analyses.
    pub explain: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            policies: vec![ThresholdPolicy::Eer],
            group_by: default_group_by(),
            encoding: EncodingConfig::default(),
            explain: true,
        }
    }
}

fn default_group_by() -> Vec<String> {
    vec!["gender".into(), "ethnicity".into()]
}

fn default_policies() -> Vec<ThresholdPolicy> {
    vec![ThresholdPolicy::Eer]
}

pub fn analyze_policy(
    trials: &TrialSet,
    profiles: &[AttributeProfile],
    schema: &AttributeSchema,
    spec: &GroupSpec,
    policy: ThresholdPolicy,
    options: &AnalysisOptions,
) -> Result<PolicyAnalysis> {
    let op = calibrate(trials, policy)?;
    let individual = individual_rates(trials, op.tau)?;
    let groups = group_rates(&individual.rates, profiles, spec);
    let deltas = fairness_deltas(&groups, &comparable_pairs(&groups))?;

    let mut notes = Vec::new();
    if !groups.unassigned.is_empty() {
        notes.push(format!(
            "{} individuals lack a grouping attribute and are unassigned",
            groups.unassigned.len()
        ));
    }
    let mut kw = |metric: ErrorMetric| match kruskal_pairwise(
        &individual.rates,
        profiles,
        spec,
        metric,
        None,
    ) {
        Ok(m) => Some(m),
        Err(e) => {
            notes.push(format!("kruskal-wallis {metric} skipped: {e}"));
            None
        }
    };
    let kruskal_far = kw(ErrorMetric::Far);
    let kruskal_frr = kw(ErrorMetric::Frr);

    let (explanatory_far, explanatory_frr) = if options.explain {
        let run = |m| {
            explain(
                profiles,
                schema,
                &individual.rates,
                &op,
                m,
                &options.encoding,
            )
        };
        (Some(run(ErrorMetric::Far)?), Some(run(ErrorMetric::Frr)?))
    } else {
        (None, None)
    };

    Ok(PolicyAnalysis {
        operating_point: op,
        individual_exclusions: individual.excluded,
        groups,
        deltas,
        kruskal_far,
        kruskal_frr,
        explanatory_far,
        explanatory_frr,
        notes,
    })
}

/// Audits scored trials of `cohort` under every policy in `options`.
pub fn audit(
    trials: &TrialSet,
    cohort: &Cohort,
    schema: &AttributeSchema,
    options: &AnalysisOptions,
    seeds: SeedRecord,
) -> Result<AuditBundle> {
    if options.policies.is_empty() {
        return Err(Error::Config("no threshold policy given".into()));
    }
    let profiles = cohort.profiles(schema);
    let spec = GroupSpec::new(schema, &options.group_by)?;
    let analyses = options
        .policies
        .iter()
        .map(|&p| analyze_policy(trials, &profiles, schema, &spec, p, options))
        .collect::<Result<Vec<_>>>()?;
    let count = |l| trials.pairs().filter(|p| p.label == l).count();
    let mut notes = Vec::new();
    if !cohort.unattributed().is_empty() {
        notes.push(format!(
            "{} images have no attribute row",
            cohort.unattributed().len()
        ));
    }
    Ok(AuditBundle {
        tool: ToolInfo::default(),
        seeds,
        trials: TrialSummary {
            identities: trials.identities.len(),
            genuine_pairs: count(PairLabel::Genuine),
            impostor_pairs: count(PairLabel::Impostor),
            skipped_identities: trials.skipped.clone(),
        },
        notes,
        analyses,
    })
}

/// `run-all` configuration. The synthetic cohort uses `seed`; trial
/// sampling uses `seed + 1` (wrapping).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threshold_policies: Vec<ThresholdPolicy>,
    pub group_by: Vec<String>,
    pub standardize: bool,
    pub explain: bool,
    pub plant_simpson: bool,
    pub trials: TrialPolicy,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threshold_policies: default_policies(),
            group_by: default_group_by(),
            standardize: false,
            explain: true,
            plant_simpson: false,
            trials: TrialPolicy::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn trial_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            policies: self.threshold_policies.clone(),
            group_by: self.group_by.clone(),
            encoding: EncodingConfig {
                standardize: self.standardize,
                ..Default::default()
            },
            explain: self.explain,
        }
    }

    /// The synthetic cohort configuration actually generated.
    pub fn effective_synth(&self, schema: &AttributeSchema) -> Result<SynthConfig> {
        let base = SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        };
        Ok(if self.plant_simpson {
            plant_simpson(&base, schema)?
        } else {
            base
        })
    }
}

/// Generates a cohort, its trials and the full audit bundle under `out`:
/// `cohort/` holds the synthetic inputs, `trials.csv` the scored pairs and
/// the rest is the report bundle.
pub fn run_all(config: &RunConfig, schema: &AttributeSchema, out: &Path) -> Result<AuditBundle> {
    let synth_config = config.effective_synth(schema)?;
    let generated = synth::generate(&synth_config, schema)?;
    write_synth(&out.join("cohort"), &generated, schema)?;
    let trials = generate_trials(&generated.cohort, &config.trials, config.trial_seed())?;
    let trials = score_trials(&trials, &generated.cohort)?;
    write_trials(&out.join("trials.csv"), &trials)?;
    let seeds = SeedRecord {
        synth: Some(synth_config.seed),
        trials: Some(config.trial_seed()),
    };
    let bundle = audit(
        &trials,
        &generated.cohort,
        schema,
        &config.analysis_options(),
        seeds,
    )?;
    emit_bundle(out, &bundle)?;
    Ok(bundle)
}
