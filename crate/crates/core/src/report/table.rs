use crate::metrics::{ErrorMetric, GroupAudit, GroupKey};

use super::ReportError;

/// Rendered in place of a rate for groups without members.
pub const EMPTY_CELL: &str = "—";

/// Three decimals, ties to even.
pub fn format_rate(x: f64) -> String {
    if !x.is_finite() {
        return EMPTY_CELL.to_string();
    }
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

/// Inverse of [`format_rate`]; `None` for the empty marker.
pub fn parse_rate(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if cell == EMPTY_CELL {
        None
    } else {
        cell.parse().ok()
    }
}

/// Table of group means for one metric. With two grouping attributes the
/// rows are the first attribute's levels plus its union and the columns are
/// the second attribute's levels plus its union; with one attribute a single
/// column holds the levels plus the union row.
pub fn render_group_table(audit: &GroupAudit, metric: ErrorMetric) -> Result<String, ReportError> {
    let spec = &audit.spec;
    let cell = |key: Vec<Option<usize>>| -> String {
        audit
            .find(&GroupKey(key))
            .and_then(|g| g.get(metric))
            .map(format_rate)
            .unwrap_or_else(|| EMPTY_CELL.to_string())
    };
    let with_union = |n: usize| {
        (0..n)
            .map(Some)
            .chain(std::iter::once(None))
            .collect::<Vec<_>>()
    };
    let mut rows: Vec<Vec<String>> = Vec::new();
    match spec.attributes.len() {
        1 => {
            rows.push(vec![
                spec.attributes[0].clone(),
                metric.as_str().to_string(),
            ]);
            for sel in with_union(spec.levels[0].len()) {
                rows.push(vec![spec.level_label(0, sel), cell(vec![sel])]);
            }
        }
        2 => {
            let cols = with_union(spec.levels[1].len());
            let mut header = vec![format!("{}/{}", spec.attributes[0], spec.attributes[1])];
            header.extend(cols.iter().map(|&c| spec.level_label(1, c)));
            rows.push(header);
            for r in with_union(spec.levels[0].len()) {
                let mut row = vec![spec.level_label(0, r)];
                row.extend(cols.iter().map(|&c| cell(vec![r, c])));
                rows.push(row);
            }
        }
        n => return Err(ReportError::UnsupportedLayout(n)),
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    Ok(String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 input"))
}
