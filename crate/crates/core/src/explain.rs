//! Explanatory analyses relating per-individual error rates to image
//! characteristics by Pearson correlation and multiple regression.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::OperatingPoint;
use crate::cohort::{AttributeProfile, AttributeSchema, VariableKind};
use crate::metrics::{ErrorMetric, Exclusion, IndividualRates};
use crate::stats::{fit_ols, pearson, CorrelationResult, DesignMatrix, RegressionFit, StatsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExplainError {
    #[error("{complete} complete case(s) for {columns} design columns; need at least columns + 1")]
    TooFewCases { complete: usize, columns: usize },
    #[error("no rates for individual `{0}` in the design")]
    MissingRates(String),
    #[error("reference level {level} out of range for `{variable}`")]
    BadReference { variable: String, level: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    /// Reference level per categorical variable; the first level otherwise.
    pub reference_levels: BTreeMap<String, usize>,
    /// Z-score every explanatory column before fitting.
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBinding {
    pub design: DesignMatrix<f64>,
    pub excluded: Vec<Exclusion>,
    pub dropped_constant: Vec<String>,
    pub standardized: bool,
    pub encoding_notes: Vec<String>,
}

/// Encodes complete-case profiles into a design: intercept, protected
/// attributes, then the remaining variables in schema order. A categorical
/// variable with k levels contributes k − 1 indicator columns named
/// `variable=level`. Constant columns are dropped and listed.
pub fn build_design(
    profiles: &[AttributeProfile],
    schema: &AttributeSchema,
    config: &EncodingConfig,
) -> Result<DesignBinding, ExplainError> {
    let mut order: Vec<usize> = schema
        .protected
        .iter()
        .filter_map(|p| schema.index_of(p))
        .collect();
    let rest: Vec<usize> = (0..schema.len()).filter(|i| !order.contains(i)).collect();
    order.extend(rest);

    let mut complete = Vec::new();
    let mut excluded = Vec::new();
    for p in profiles {
        match schema.variables.iter().find(|v| p.is_missing(&v.name)) {
            None => complete.push(p),
            Some(v) => excluded.push(Exclusion {
                identity_id: p.identity_id.clone(),
                reason: format!("missing `{}`", v.name),
            }),
        }
    }

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut notes = Vec::new();
    for &slot in &order {
        let var = &schema.variables[slot];
        let values: Vec<f64> = complete
            .iter()
            .map(|p| p.get(&var.name).unwrap_or(0.0))
            .collect();
        match &var.kind {
            VariableKind::Categorical { levels } => {
                let reference = config.reference_levels.get(&var.name).copied().unwrap_or(0);
                if reference >= levels.len() {
                    return Err(ExplainError::BadReference {
                        variable: var.name.clone(),
                        level: reference,
                    });
                }
                notes.push(format!(
                    "`{}` dummy-encoded with {} indicator(s) against reference `{}`",
                    var.name,
                    levels.len() - 1,
                    levels[reference]
                ));
                for (l, level) in levels.iter().enumerate() {
                    if l == reference {
                        continue;
                    }
                    let col = values.iter().map(|&v| f64::from(v as usize == l)).collect();
                    columns.push((format!("{}={}", var.name, level), col));
                }
            }
            _ => columns.push((var.name.clone(), values)),
        }
    }

    let mut dropped_constant = Vec::new();
    columns.retain(|(name, col)| {
        let constant = col.windows(2).all(|w| w[0] == w[1]);
        if constant {
            dropped_constant.push(name.clone());
        }
        !constant
    });

    let n_cols = columns.len() + 1;
    if complete.len() < n_cols + 1 {
        return Err(ExplainError::TooFewCases {
            complete: complete.len(),
            columns: n_cols,
        });
    }
    let row_ids = complete.iter().map(|p| p.identity_id.clone()).collect();
    let mut design = DesignMatrix::with_intercept(row_ids, columns)?;
    if config.standardize {
        design = design.standardized();
    }
    Ok(DesignBinding {
        design,
        excluded,
        dropped_constant,
        standardized: config.standardize,
        encoding_notes: notes,
    })
}

/// Per-row response vector, aligned with the design's rows.
pub fn response(
    design: &DesignMatrix<f64>,
    rates: &[IndividualRates],
    dependent: ErrorMetric,
) -> Result<Vec<f64>, ExplainError> {
    let by_id: HashMap<&str, &IndividualRates> =
        rates.iter().map(|r| (r.identity_id.as_str(), r)).collect();
    design
        .row_ids()
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|r| r.get(dependent))
                .ok_or_else(|| ExplainError::MissingRates(id.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub column: String,
    /// `None` when the correlation is undefined (zero variance).
    pub result: Option<CorrelationResult<f64>>,
    pub significant_05: bool,
    pub significant_01: bool,
    pub note: Option<String>,
}

/// Pearson correlation of every explanatory column with the chosen rate.
pub fn run_correlations(
    design: &DesignMatrix<f64>,
    rates: &[IndividualRates],
    dependent: ErrorMetric,
) -> Result<Vec<CorrelationEntry>, ExplainError> {
    let y = response(design, rates, dependent)?;
    if y.len() < 3 {
        return Err(StatsError::TooFewObservations {
            need: 3,
            got: y.len(),
        }
        .into());
    }
    design
        .regressors()
        .map(|(name, col)| match pearson(col, &y) {
            Ok(r) => Ok(CorrelationEntry {
                column: name.to_string(),
                significant_05: r.p_value < 0.05,
                significant_01: r.p_value < 0.01,
                result: Some(r),
                note: None,
            }),
            Err(StatsError::ConstantInput(which)) => Ok(CorrelationEntry {
                column: name.to_string(),
                result: None,
                significant_05: false,
                significant_01: false,
                note: Some(if which == "y" {
                    format!("{dependent} is constant")
                } else {
                    "column is constant".to_string()
                }),
            }),
            Err(e) => Err(e.into()),
        })
        .collect()
}

pub fn run_regression(
    design: &DesignMatrix<f64>,
    rates: &[IndividualRates],
    dependent: ErrorMetric,
) -> Result<RegressionFit<f64>, ExplainError> {
    let y = response(design, rates, dependent)?;
    Ok(fit_ols(design, &y)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanatoryReport {
    pub dependent: ErrorMetric,
    pub operating_point: OperatingPoint,
    pub n_individuals: usize,
    pub standardized: bool,
    pub columns: Vec<String>,
    pub dropped_columns: Vec<String>,
    pub encoding_notes: Vec<String>,
    pub correlations: Vec<CorrelationEntry>,
    pub regression: RegressionFit<f64>,
    pub excluded_individuals: Vec<Exclusion>,
}

/// Full explanatory analysis for one dependent rate under one operating
/// point. Correlations and regression share the same complete-case rows.
pub fn explain(
    profiles: &[AttributeProfile],
    schema: &AttributeSchema,
    rates: &[IndividualRates],
    operating_point: &OperatingPoint,
    dependent: ErrorMetric,
    config: &EncodingConfig,
) -> Result<ExplanatoryReport, ExplainError> {
    let rated: std::collections::HashSet<&str> =
        rates.iter().map(|r| r.identity_id.as_str()).collect();
    let mut excluded = Vec::new();
    let usable: Vec<AttributeProfile> = profiles
        .iter()
        .filter(|p| {
            let ok = rated.contains(p.identity_id.as_str());
            if !ok {
                excluded.push(Exclusion {
                    identity_id: p.identity_id.clone(),
                    reason: "no error rates".into(),
                });
            }
            ok
        })
        .cloned()
        .collect();
    let binding = build_design(&usable, schema, config)?;
    excluded.extend(binding.excluded.iter().cloned());
    excluded.sort_by(|a, b| a.identity_id.cmp(&b.identity_id));

    let correlations = run_correlations(&binding.design, rates, dependent)?;
    let regression = run_regression(&binding.design, rates, dependent)?;
    Ok(ExplanatoryReport {
        dependent,
        operating_point: operating_point.clone(),
        n_individuals: binding.design.n_rows(),
        standardized: binding.standardized,
        columns: binding.design.column_names().to_vec(),
        dropped_columns: binding.dropped_constant,
        encoding_notes: binding.encoding_notes,
        correlations,
        regression,
        excluded_individuals: excluded,
    })
}
