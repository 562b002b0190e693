//! Renders audit results as CSV tables and SVG figures, and writes the
//! report bundle.

mod bundle;
mod svg;
mod table;

pub use bundle::{
    emit_bundle, AuditBundle, PolicyAnalysis, SeedRecord, ToolInfo, TrialSummary, REPORT_FILE,
};
pub use svg::{diverging_color, render_heatmap_svg, xml_escape, GlyphPolicy, HeatmapOptions};
pub use table::{format_rate, parse_rate, render_group_table, EMPTY_CELL};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("grid shape {values:?} does not match p-value shape {p_values:?}")]
    ShapeMismatch {
        values: (usize, usize),
        p_values: (usize, usize),
    },
    #[error("label count mismatch: {what} has {expected} entries, got {got} labels")]
    LabelMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("group tables support 1 or 2 attributes, got {0}")]
    UnsupportedLayout(usize),
    #[error("refusing to write a bundle with no analyses")]
    EmptyAnalysis,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}
