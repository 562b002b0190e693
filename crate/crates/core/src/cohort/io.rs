//! File formats.
//!
//! Embedding binary layout (little-endian):
//!
//! ```text
//! "FREB" 0x01 | u32 record_count | u32 dim |
//!   per record: u16 len, image_id utf-8 | u16 len, identity_id utf-8 | dim x f32
//! ```
//!
//! The delimited alternative has rows `image_id,identity_id,v0,...,v{dim-1}`
//! with an optional header row starting with `image_id`.

use std::fs;
use std::path::Path;

use super::{AttributeSchema, Cohort, CohortError, EmbeddingRecord, ImageAttributes, VariableKind};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"FREB";
pub const EMBEDDING_VERSION: u8 = 0x01;

fn io_err(path: &Path, e: impl ToString) -> CohortError {
    CohortError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> CohortError {
    CohortError::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Encodes records in the binary embedding format.
pub fn encode_embeddings(records: &[EmbeddingRecord]) -> Result<Vec<u8>, CohortError> {
    let dim = records.first().map(|r| r.vector.len()).unwrap_or(0);
    let mut out = Vec::with_capacity(13 + records.len() * (dim * 4 + 24));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.push(EMBEDDING_VERSION);
    let count = u32::try_from(records.len())
        .map_err(|_| CohortError::Columns("too many records".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for r in records {
        if r.vector.len() != dim {
            return Err(CohortError::DimensionMismatch {
                image_id: r.image_id.clone(),
                expected: dim,
                found: r.vector.len(),
            });
        }
        for s in [&r.image_id, &r.identity_id] {
            let len = u16::try_from(s.len())
                .map_err(|_| CohortError::Columns(format!("identifier too long: `{s}`")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        for v in &r.vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Option<Result<String, std::string::FromUtf8Error>> {
        let len = self.u16()? as usize;
        self.take(len).map(|b| String::from_utf8(b.to_vec()))
    }
}

/// Decodes the binary embedding format.
pub fn decode_embeddings(bytes: &[u8], path: &Path) -> Result<Vec<EmbeddingRecord>, CohortError> {
    let truncated = || parse_err(path, "truncated embedding file");
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4) != Some(EMBEDDING_MAGIC.as_slice()) {
        return Err(parse_err(path, "missing FREB magic"));
    }
    match r.take(1) {
        Some([EMBEDDING_VERSION]) => {}
        Some([v]) => return Err(parse_err(path, format!("unsupported version {v}"))),
        _ => return Err(truncated()),
    }
    let count = r.u32().ok_or_else(truncated)? as usize;
    let dim = r.u32().ok_or_else(truncated)? as usize;
    if dim == 0 && count > 0 {
        return Err(CohortError::ZeroDimension);
    }
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let image_id = r
            .string()
            .ok_or_else(truncated)?
            .map_err(|_| parse_err(path, "image_id is not UTF-8"))?;
        let identity_id = r
            .string()
            .ok_or_else(truncated)?
            .map_err(|_| parse_err(path, "identity_id is not UTF-8"))?;
        let raw = r.take(dim * 4).ok_or_else(truncated)?;
        let vector: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(CohortError::NonFiniteEmbedding(image_id));
        }
        records.push(EmbeddingRecord {
            image_id,
            identity_id,
            vector,
        });
    }
    if r.pos != bytes.len() {
        return Err(parse_err(path, "trailing bytes after last record"));
    }
    Ok(records)
}

pub fn write_embeddings_binary(
    path: &Path,
    records: &[EmbeddingRecord],
) -> Result<(), CohortError> {
    fs::write(path, encode_embeddings(records)?).map_err(|e| io_err(path, e))
}

pub fn write_embeddings_csv(path: &Path, records: &[EmbeddingRecord]) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let dim = records.first().map(|r| r.vector.len()).unwrap_or(0);
    let mut header = vec!["image_id".to_string(), "identity_id".to_string()];
    header.extend((0..dim).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for r in records {
        let mut row = vec![r.image_id.clone(), r.identity_id.clone()];
        row.extend(r.vector.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_embeddings_csv(path: &Path, bytes: &[u8]) -> Result<Vec<EmbeddingRecord>, CohortError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut records = Vec::new();
    let mut dim: Option<usize> = None;
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| parse_err(path, e.to_string()))?;
        if line == 0 && row.get(0) == Some("image_id") {
            continue;
        }
        if row.len() < 3 {
            return Err(parse_err(
                path,
                format!("row {} has no vector values", line + 1),
            ));
        }
        let image_id = row[0].to_string();
        let vector = row
            .iter()
            .skip(2)
            .map(|s| s.parse::<f32>())
            .collect::<Result<Vec<f32>, _>>()
            .map_err(|e| parse_err(path, format!("row {}: {e}", line + 1)))?;
        let expected = *dim.get_or_insert(vector.len());
        if vector.len() != expected {
            return Err(CohortError::DimensionMismatch {
                image_id,
                expected,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(CohortError::NonFiniteEmbedding(image_id));
        }
        records.push(EmbeddingRecord {
            image_id,
            identity_id: row[1].to_string(),
            vector,
        });
    }
    Ok(records)
}

/// Reads embeddings, detecting the binary format by its magic bytes and
/// falling back to delimited text.
pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>, CohortError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(EMBEDDING_MAGIC) {
        decode_embeddings(&bytes, path)
    } else {
        read_embeddings_csv(path, &bytes)
    }
}

fn format_value(kind: &VariableKind, v: f64) -> String {
    match kind {
        VariableKind::Categorical { levels } => levels[v as usize].clone(),
        VariableKind::Boolean => if v == 1.0 { "1" } else { "0" }.to_string(),
        _ => v.to_string(),
    }
}

fn parse_value(kind: &VariableKind, cell: &str) -> Option<f64> {
    match kind {
        VariableKind::Categorical { levels } => levels
            .iter()
            .position(|l| l == cell)
            .map(|i| i as f64)
            .or_else(|| cell.parse::<usize>().ok().map(|i| i as f64)),
        VariableKind::Boolean => match cell.to_ascii_lowercase().as_str() {
            "true" => Some(1.0),
            "false" => Some(0.0),
            other => other.parse::<f64>().ok(),
        },
        _ => cell.parse::<f64>().ok(),
    }
}

/// Writes the attribute table: header `image_id,<schema variables>`,
/// categorical values as level names, empty cells for missing values.
pub fn write_attributes(
    path: &Path,
    rows: &[ImageAttributes],
    schema: &AttributeSchema,
) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut header = vec!["image_id".to_string()];
    header.extend(schema.variables.iter().map(|v| v.name.clone()));
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for row in rows {
        let mut out = vec![row.image_id.clone()];
        for (var, v) in schema.variables.iter().zip(&row.values) {
            out.push(v.map(|v| format_value(&var.kind, v)).unwrap_or_default());
        }
        w.write_record(&out).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads an attribute table. Columns after `image_id` may appear in any
/// order but must name exactly the schema's variables.
pub fn read_attributes(
    path: &Path,
    schema: &AttributeSchema,
) -> Result<Vec<ImageAttributes>, CohortError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .clone();
    if header.get(0) != Some("image_id") {
        return Err(CohortError::Columns("first column must be image_id".into()));
    }
    let mut slots = Vec::with_capacity(header.len() - 1);
    for name in header.iter().skip(1) {
        let idx = schema
            .index_of(name)
            .ok_or_else(|| CohortError::Columns(format!("unknown variable column `{name}`")))?;
        if slots.contains(&idx) {
            return Err(CohortError::Columns(format!("duplicate column `{name}`")));
        }
        slots.push(idx);
    }
    if let Some(missing) = schema
        .variables
        .iter()
        .enumerate()
        .find(|(i, _)| !slots.contains(i))
    {
        return Err(CohortError::Columns(format!(
            "missing variable column `{}`",
            missing.1.name
        )));
    }
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| parse_err(path, e.to_string()))?;
        let image_id = row[0].to_string();
        let mut values = vec![None; schema.len()];
        for (cell, &slot) in row.iter().skip(1).zip(&slots) {
            if cell.is_empty() {
                continue;
            }
            let var = &schema.variables[slot];
            let v = parse_value(&var.kind, cell).ok_or_else(|| CohortError::RangeViolation {
                variable: var.name.clone(),
                image_id: image_id.clone(),
                value: cell.to_string(),
            })?;
            values[slot] = Some(v);
        }
        let attrs = ImageAttributes { image_id, values };
        attrs.validate(schema)?;
        rows.push(attrs);
    }
    Ok(rows)
}

/// Loads embeddings plus, optionally, their attribute table.
pub fn load_cohort(
    embeddings: &Path,
    attributes: Option<&Path>,
    schema: &AttributeSchema,
) -> Result<Cohort, CohortError> {
    let records = read_embeddings(embeddings)?;
    let attrs = match attributes {
        Some(p) => read_attributes(p, schema)?,
        None => Vec::new(),
    };
    let cohort = Cohort::new(records, attrs, schema)?;
    if !cohort.unattributed().is_empty() && attributes.is_some() {
        log::warn!(
            "{} embedded image(s) have no attribute row",
            cohort.unattributed().len()
        );
    }
    log::info!(
        "loaded {} records (dim {}) for {} identities",
        cohort.len(),
        cohort.dim(),
        cohort.identities().len()
    );
    Ok(cohort)
}
