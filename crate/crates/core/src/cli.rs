//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::calibration::{calibrate, ThresholdPolicy};
use crate::cohort::{load_cohort, read_embeddings, AttributeSchema, Cohort};
use crate::pipeline::{audit, run_all, AnalysisOptions, RunConfig};
use crate::report::{emit_bundle, SeedRecord};
use crate::synth::{generate, write_synth, SynthConfig};
use crate::trials::{
    generate_trials, read_trials, score_trials, write_trials, PositiveMode, TrialPolicy, TrialSet,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

fn parse_policy(s: &str) -> std::result::Result<ThresholdPolicy, String> {
    s.parse()
        .map_err(|e: crate::calibration::CalibrationError| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "biasaudit",
    version,
    about = "Fairness audit for face verification",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Seed for synthetic cohorts and trial sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Operating point: eer or far@<target>. Repeatable.
    #[arg(long = "threshold-policy", global = true, value_parser = parse_policy)]
    pub threshold_policy: Vec<ThresholdPolicy>,
    /// Protected attributes to group by, comma separated.
    #[arg(long = "group-by", global = true, value_delimiter = ',')]
    pub group_by: Vec<String>,
    /// Attribute schema (TOML). Defaults to the built-in 20-variable schema.
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for scoring.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CohortInputs {
    /// Embedding file (binary or delimited text).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Per-image attribute table.
    #[arg(long)]
    pub attributes: PathBuf,
    /// Scored trial table.
    #[arg(long)]
    pub trials: PathBuf,
    /// Z-score the explanatory variables before regression.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort (embeddings, attributes, ground truth).
    Synth {
        /// run-all style config; its [synth] table and plant_simpson flag are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        identities_per_group: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        plant_simpson: bool,
    },
    /// Sample genuine and impostor pairs.
    Pairs {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 6)]
        positives: usize,
        #[arg(long, default_value_t = 50)]
        negatives: usize,
        /// Keep every genuine pair instead of capping at --positives.
        #[arg(long)]
        all_positives: bool,
    },
    /// Score pairs by cosine similarity.
    Score {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        trials: PathBuf,
    },
    /// Compute operating points from scored pairs.
    Calibrate {
        #[arg(long)]
        trials: PathBuf,
        /// Needed only when the trial table lacks identity columns.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Group error rates, deltas and Kruskal-Wallis tests.
    Audit(CohortInputs),
    /// Correlation and regression of individual error rates on characteristics.
    Explain(CohortInputs),
    /// Full report bundle: tables, figures and report.json.
    Report(CohortInputs),
    /// Synthesize, pair, score, audit and report in one go.
    RunAll {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_schema(cli: &Cli) -> Result<AttributeSchema> {
    match &cli.schema {
        Some(p) => Ok(AttributeSchema::load(p)?),
        None => Ok(AttributeSchema::standard()),
    }
}

fn out_or(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn options(cli: &Cli, standardize: bool, explain: bool) -> AnalysisOptions {
    let mut o = AnalysisOptions {
        explain,
        ..Default::default()
    };
    if !cli.threshold_policy.is_empty() {
        o.policies = cli.threshold_policy.clone();
    }
    if !cli.group_by.is_empty() {
        o.group_by = cli.group_by.clone();
    }
    o.encoding.standardize = standardize;
    o
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_inputs(inputs: &CohortInputs, schema: &AttributeSchema) -> Result<(Cohort, TrialSet)> {
    let cohort = load_cohort(&inputs.embeddings, Some(&inputs.attributes), schema)?;
    let trials = read_trials(&inputs.trials, Some(&cohort.identity_lookup()))?;
    Ok((cohort, trials))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let schema = load_schema(cli)?;
    match &cli.command {
        Command::Synth {
            config,
            identities_per_group,
            dim,
            plant_simpson,
        } => {
            let mut run = match config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(n) = identities_per_group {
                let balanced = SynthConfig::balanced(&schema, *n)?;
                run.synth.group_attributes = balanced.group_attributes;
                run.synth.groups = balanced.groups;
            }
            if let Some(d) = dim {
                run.synth.dim = *d;
            }
            if let Some(s) = cli.seed {
                run.seed = s;
            }
            run.plant_simpson |= plant_simpson;
            let out = out_or(cli, "cohort");
            let generated = generate(&run.effective_synth(&schema)?, &schema)?;
            write_synth(&out, &generated, &schema)?;
            println!(
                "wrote {} identities, {} images to {}",
                generated.cohort.identities().len(),
                generated.records.len(),
                out.display()
            );
        }
        Command::Pairs {
            embeddings,
            positives,
            negatives,
            all_positives,
        } => {
            let cohort = Cohort::new(read_embeddings(embeddings)?, Vec::new(), &schema)?;
            let policy = TrialPolicy {
                positives_per_identity: *positives,
                negatives_per_identity: *negatives,
                positive_mode: if *all_positives {
                    PositiveMode::AllPairs
                } else {
                    PositiveMode::AllPairsCapped
                },
            };
            let trials = generate_trials(&cohort, &policy, cli.seed.unwrap_or(0))?;
            let out = out_or(cli, "trials.csv");
            write_trials(&out, &trials)?;
            println!("wrote {} pairs to {}", trials.len(), out.display());
        }
        Command::Score { embeddings, trials } => {
            let cohort = Cohort::new(read_embeddings(embeddings)?, Vec::new(), &schema)?;
            let trials = read_trials(trials, Some(&cohort.identity_lookup()))?;
            let scored = score_trials(&trials, &cohort)?;
            let out = out_or(cli, "scored.csv");
            write_trials(&out, &scored)?;
            println!("scored {} pairs into {}", scored.len(), out.display());
        }
        Command::Calibrate { trials, embeddings } => {
            let lookup = match embeddings {
                Some(p) => {
                    Some(Cohort::new(read_embeddings(p)?, Vec::new(), &schema)?.identity_lookup())
                }
                None => None,
            };
            let trials = read_trials(trials, lookup.as_ref())?;
            let policies = options(cli, false, false).policies;
            let points = policies
                .iter()
                .map(|&p| calibrate(&trials, p))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let out = out_or(cli, "operating_points.json");
            write_json(&out, &points)?;
            for p in &points {
                println!("{}: tau={} far={} frr={}", p.policy, p.tau, p.far, p.frr);
            }
        }
        Command::Audit(inputs) => {
            let (cohort, trials) = load_inputs(inputs, &schema)?;
            let bundle = audit(
                &trials,
                &cohort,
                &schema,
                &options(cli, inputs.standardize, false),
                SeedRecord::default(),
            )?;
            let out = out_or(cli, "audit.json");
            write_json(&out, &bundle)?;
            println!("wrote {}", out.display());
        }
        Command::Explain(inputs) => {
            let (cohort, trials) = load_inputs(inputs, &schema)?;
            let bundle = audit(
                &trials,
                &cohort,
                &schema,
                &options(cli, inputs.standardize, true),
                SeedRecord::default(),
            )?;
            let reports: Vec<_> = bundle
                .analyses
                .iter()
                .flat_map(|a| [a.explanatory_far.clone(), a.explanatory_frr.clone()])
                .flatten()
                .collect();
            let out = out_or(cli, "explain.json");
            write_json(&out, &reports)?;
            println!("wrote {}", out.display());
        }
        Command::Report(inputs) => {
            let (cohort, trials) = load_inputs(inputs, &schema)?;
            let bundle = audit(
                &trials,
                &cohort,
                &schema,
                &options(cli, inputs.standardize, true),
                SeedRecord::default(),
            )?;
            let out = out_or(cli, "report");
            let written = emit_bundle(&out, &bundle)?;
            println!("wrote {} files to {}", written.len(), out.display());
        }
        Command::RunAll { config } => {
            let mut run = match config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = cli.seed {
                run.seed = s;
            }
            if !cli.threshold_policy.is_empty() {
                run.threshold_policies = cli.threshold_policy.clone();
            }
            if !cli.group_by.is_empty() {
                run.group_by = cli.group_by.clone();
            }
            let out = out_or(cli, "biasaudit-out");
            info!("run-all into {}", out.display());
            let bundle = run_all(&run, &schema, &out)?;
            println!(
                "wrote {} analyses to {}",
                bundle.analyses.len(),
                out.display()
            );
        }
    }
    Ok(())
}
