use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::calibration::OperatingPoint;
use crate::explain::ExplanatoryReport;
use crate::metrics::{ErrorMetric, Exclusion, FairnessDelta, GroupAudit, KruskalMatrix};
use crate::stats::INTERCEPT;

use super::svg::{render_heatmap_svg, HeatmapOptions};
use super::table::render_group_table;
use super::ReportError;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SeedRecord {
    pub synth: Option<u64>,
    pub trials: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrialSummary {
    pub identities: usize,
    pub genuine_pairs: usize,
    pub impostor_pairs: usize,
    pub skipped_identities: Vec<String>,
}

/// Everything computed at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyAnalysis {
    pub operating_point: OperatingPoint,
    pub individual_exclusions: Vec<Exclusion>,
    pub groups: GroupAudit,
    pub deltas: Vec<FairnessDelta>,
    pub kruskal_far: Option<KruskalMatrix>,
    pub kruskal_frr: Option<KruskalMatrix>,
    pub explanatory_far: Option<ExplanatoryReport>,
    pub explanatory_frr: Option<ExplanatoryReport>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditBundle {
    pub tool: ToolInfo,
    pub seeds: SeedRecord,
    pub trials: TrialSummary,
    pub notes: Vec<String>,
    pub analyses: Vec<PolicyAnalysis>,
}

impl AuditBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }
}

fn write(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|e| ReportError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn explanatory_figure(
    far: Option<&ExplanatoryReport>,
    frr: Option<&ExplanatoryReport>,
    title: &str,
    pick: impl Fn(&ExplanatoryReport, &str) -> Option<(f64, f64)>,
) -> Result<Option<String>, ReportError> {
    let reports: Vec<(&str, &ExplanatoryReport)> = [("FAR", far), ("FRR", frr)]
        .into_iter()
        .filter_map(|(n, r)| r.map(|r| (n, r)))
        .collect();
    if reports.is_empty() {
        return Ok(None);
    }
    let mut rows: Vec<String> = Vec::new();
    for (_, r) in &reports {
        for c in &r.columns {
            if c != INTERCEPT && !rows.contains(c) {
                rows.push(c.clone());
            }
        }
    }
    let mut values = vec![vec![f64::NAN; reports.len()]; rows.len()];
    let mut p_values = vec![vec![f64::NAN; reports.len()]; rows.len()];
    for (j, (_, r)) in reports.iter().enumerate() {
        for (i, name) in rows.iter().enumerate() {
            if let Some((v, p)) = pick(r, name) {
                values[i][j] = v;
                p_values[i][j] = p;
            }
        }
    }
    let cols: Vec<String> = reports.iter().map(|(n, _)| n.to_string()).collect();
    let opts = HeatmapOptions {
        title: title.to_string(),
        ..Default::default()
    };
    render_heatmap_svg(&values, &p_values, &rows, &cols, &opts).map(Some)
}

fn kruskal_figure(m: &KruskalMatrix, title: &str) -> Result<String, ReportError> {
    // cells show -log10(p), capped at 4
    let values: Vec<Vec<f64>> = m
        .p_values
        .iter()
        .map(|row| {
            row.iter()
                .map(|&p| if p > 0.0 { (-p.log10()).min(4.0) } else { 4.0 })
                .collect()
        })
        .collect();
    let opts = HeatmapOptions {
        title: title.to_string(),
        scale: Some(4.0),
        ..Default::default()
    };
    render_heatmap_svg(&values, &m.p_values, &m.labels, &m.labels, &opts)
}

/// Writes `report.json`, `tables/*.csv` and `figures/*.svg` under `dir` and
/// returns the written paths relative to `dir`, in write order.
pub fn emit_bundle(dir: &Path, bundle: &AuditBundle) -> Result<Vec<PathBuf>, ReportError> {
    if bundle.analyses.is_empty() {
        return Err(ReportError::EmptyAnalysis);
    }
    let mkdir = |p: &Path| {
        std::fs::create_dir_all(p).map_err(|e| ReportError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        })
    };
    let tables = dir.join("tables");
    let figures = dir.join("figures");
    mkdir(&tables)?;
    mkdir(&figures)?;

    let mut written = Vec::new();
    let mut put = |rel: PathBuf, text: &str| -> Result<(), ReportError> {
        write(&dir.join(&rel), text)?;
        written.push(rel);
        Ok(())
    };
    put(PathBuf::from(REPORT_FILE), &bundle.to_json())?;
    for a in &bundle.analyses {
        let slug = a.operating_point.policy.slug();
        for metric in [ErrorMetric::Far, ErrorMetric::Frr] {
            let name = format!("{slug}_groups_{}.csv", metric.as_str());
            put(
                Path::new("tables").join(name),
                &render_group_table(&a.groups, metric)?,
            )?;
        }
        let corr = explanatory_figure(
            a.explanatory_far.as_ref(),
            a.explanatory_frr.as_ref(),
            &format!("Pearson correlation ({slug})"),
            |r, c| {
                r.correlations
                    .iter()
                    .find(|e| e.column == c)
                    .and_then(|e| e.result.as_ref())
                    .map(|res| (res.r, res.p_value))
            },
        )?;
        if let Some(svg) = corr {
            put(
                Path::new("figures").join(format!("{slug}_correlation.svg")),
                &svg,
            )?;
        }
        let coef = explanatory_figure(
            a.explanatory_far.as_ref(),
            a.explanatory_frr.as_ref(),
            &format!("Regression t statistics ({slug})"),
            |r, c| {
                let i = r.regression.column_names.iter().position(|n| n == c)?;
                Some((r.regression.t_stats[i], r.regression.p_values[i]))
            },
        )?;
        if let Some(svg) = coef {
            put(
                Path::new("figures").join(format!("{slug}_regression.svg")),
                &svg,
            )?;
        }
        for m in [&a.kruskal_far, &a.kruskal_frr].into_iter().flatten() {
            let metric = m.metric.as_str();
            let svg = kruskal_figure(m, &format!("Kruskal-Wallis -log10 p, {metric} ({slug})"))?;
            put(
                Path::new("figures").join(format!("{slug}_kruskal_{metric}.svg")),
                &svg,
            )?;
        }
    }
    Ok(written)
}
