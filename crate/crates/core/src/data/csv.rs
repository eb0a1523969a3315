//! Streaming CSV ingestion with dummy coding and interaction expansion.
//!
//! Dialect: comma separated, header row required, UTF-8, `.` as the decimal
//! point. Expanded column names are `name` for numeric columns,
//! `name_level` for each non-reference categorical level, and parents joined
//! by `:` for interactions.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PasaError, Result};
use crate::glm::BatchData;

pub const INTERCEPT_NAME: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericColumn {
    pub name: String,
    #[serde(default)]
    pub standardize: bool,
    /// Supplied centering constant; computed in a first pass when absent.
    #[serde(default)]
    pub mean: Option<f64>,
    #[serde(default)]
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalColumn {
    pub name: String,
    pub levels: Vec<String>,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub outcome: String,
    #[serde(default = "default_true")]
    pub intercept: bool,
    #[serde(default)]
    pub numeric: Vec<NumericColumn>,
    #[serde(default)]
    pub categorical: Vec<CategoricalColumn>,
    /// Products of expanded columns, e.g. `["gender_3", "clicks"]`.
    #[serde(default)]
    pub interactions: Vec<Vec<String>>,
    /// Allow a first pass over the file to compute standardization constants.
    #[serde(default)]
    pub two_pass: bool,
    /// Declared width of the expanded design, checked when present.
    #[serde(default)]
    pub p: Option<usize>,
}

fn default_true() -> bool {
    true
}

/// How to produce one expanded column from a parsed row.
#[derive(Debug, Clone)]
enum Source {
    Intercept,
    Numeric { col: usize, center: f64, scale: f64 },
    Dummy { col: usize, level: usize },
    Product(Vec<usize>),
}

impl CsvSchema {
    /// Names of the expanded design columns in order.
    pub fn expanded_names(&self) -> Result<Vec<String>> {
        let mut names = Vec::new();
        if self.intercept {
            names.push(INTERCEPT_NAME.to_string());
        }
        for c in &self.numeric {
            names.push(c.name.clone());
        }
        for c in &self.categorical {
            if !c.levels.contains(&c.reference) {
                return Err(PasaError::Schema(format!(
                    "reference level `{}` is not among the levels of `{}`",
                    c.reference, c.name
                )));
            }
            for l in c.levels.iter().filter(|l| **l != c.reference) {
                names.push(format!("{}_{}", c.name, l));
            }
        }
        let mains: HashSet<String> = names.iter().cloned().collect();
        for term in &self.interactions {
            if term.len() < 2 {
                return Err(PasaError::Schema(format!("interaction {term:?} needs two or more parents")));
            }
            for parent in term {
                if !mains.contains(parent) || parent == INTERCEPT_NAME {
                    return Err(PasaError::Schema(format!("interaction parent `{parent}` is not a main-effect column")));
                }
            }
            names.push(term.join(":"));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(PasaError::Schema(format!("duplicate expanded column `{n}`")));
            }
        }
        if let Some(p) = self.p {
            if p != names.len() {
                return Err(PasaError::Schema(format!(
                    "schema declares p = {p} but expands to {} columns",
                    names.len()
                )));
            }
        }
        Ok(names)
    }

    fn needs_first_pass(&self) -> bool {
        self.numeric.iter().any(|c| c.standardize && (c.mean.is_none() || c.sd.is_none()))
    }
}

/// Raw cell positions of the columns the schema reads.
struct Layout {
    outcome: usize,
    numeric: Vec<usize>,
    categorical: Vec<usize>,
}

fn layout(schema: &CsvSchema, headers: &csv::StringRecord) -> Result<Layout> {
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let find = |name: &str| {
        index.get(name).copied().ok_or_else(|| PasaError::Ingestion {
            row: 0,
            column: name.to_string(),
            message: "column missing from header".into(),
        })
    };
    Ok(Layout {
        outcome: find(&schema.outcome)?,
        numeric: schema.numeric.iter().map(|c| find(&c.name)).collect::<Result<_>>()?,
        categorical: schema.categorical.iter().map(|c| find(&c.name)).collect::<Result<_>>()?,
    })
}

fn parse_cell(record: &csv::StringRecord, col: usize, row: usize, name: &str) -> Result<f64> {
    let raw = record.get(col).ok_or_else(|| PasaError::Ingestion {
        row,
        column: name.to_string(),
        message: "row is shorter than the header".into(),
    })?;
    raw.trim().parse::<f64>().map_err(|_| PasaError::Ingestion {
        row,
        column: name.to_string(),
        message: format!("cannot parse `{raw}` as a number"),
    })
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().has_headers(true).from_path(path)?)
}

/// First pass: mean and sample standard deviation of numeric columns.
fn column_moments(path: &Path, schema: &CsvSchema) -> Result<Vec<(f64, f64)>> {
    let mut reader = open_reader(path)?;
    let lay = layout(schema, reader.headers()?)?;
    let k = schema.numeric.len();
    let mut count = 0usize;
    let mut mean = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        count += 1;
        for (j, c) in schema.numeric.iter().enumerate() {
            let v = parse_cell(&rec, lay.numeric[j], i + 1, &c.name)?;
            let d = v - mean[j];
            mean[j] += d / count as f64;
            m2[j] += d * (v - mean[j]);
        }
    }
    Ok(mean
        .into_iter()
        .zip(m2)
        .map(|(m, s)| (m, (s / (count.max(2) - 1) as f64).sqrt()))
        .collect())
}

/// Iterator over design batches read from a CSV file.
pub struct CsvBatches {
    reader: csv::Reader<File>,
    layout: Layout,
    sources: Vec<Source>,
    categorical: Vec<CategoricalColumn>,
    numeric_names: Vec<String>,
    outcome: String,
    batch_size: usize,
    row: usize,
    names: Vec<String>,
    done: bool,
}

/// Opens `path` and yields batches of `batch_size` expanded rows (the last may be smaller).
pub fn read_csv_batches(path: impl AsRef<Path>, schema: &CsvSchema, batch_size: usize) -> Result<CsvBatches> {
    let path: PathBuf = path.as_ref().to_path_buf();
    if batch_size == 0 {
        return Err(PasaError::Config("batch size must be positive".into()));
    }
    let names = schema.expanded_names()?;
    let moments = if schema.needs_first_pass() {
        if !schema.two_pass {
            return Err(PasaError::Schema(
                "standardized columns without mean/sd need `two_pass = true`".into(),
            ));
        }
        Some(column_moments(&path, schema)?)
    } else {
        None
    };

    let mut reader = open_reader(&path)?;
    let lay = layout(schema, reader.headers()?)?;

    let mut sources = Vec::with_capacity(names.len());
    let mut by_name: HashMap<String, usize> = HashMap::new();
    if schema.intercept {
        sources.push(Source::Intercept);
    }
    for (j, c) in schema.numeric.iter().enumerate() {
        let (center, scale) = if c.standardize {
            let (m, s) = match (c.mean, c.sd, &moments) {
                (Some(m), Some(s), _) => (m, s),
                (_, _, Some(mom)) => (c.mean.unwrap_or(mom[j].0), c.sd.unwrap_or(mom[j].1)),
                _ => unreachable!("first pass runs whenever constants are missing"),
            };
            if !(s > 0.0) {
                return Err(PasaError::Schema(format!("column `{}` has zero spread", c.name)));
            }
            (m, s)
        } else {
            (0.0, 1.0)
        };
        by_name.insert(c.name.clone(), sources.len());
        sources.push(Source::Numeric { col: j, center, scale });
    }
    for (j, c) in schema.categorical.iter().enumerate() {
        for (li, l) in c.levels.iter().enumerate() {
            if *l != c.reference {
                by_name.insert(format!("{}_{}", c.name, l), sources.len());
                sources.push(Source::Dummy { col: j, level: li });
            }
        }
    }
    for term in &schema.interactions {
        let parents = term.iter().map(|t| by_name[t]).collect();
        sources.push(Source::Product(parents));
    }

    Ok(CsvBatches {
        reader,
        layout: lay,
        sources,
        categorical: schema.categorical.clone(),
        numeric_names: schema.numeric.iter().map(|c| c.name.clone()).collect(),
        outcome: schema.outcome.clone(),
        batch_size,
        row: 0,
        names,
        done: false,
    })
}

impl CsvBatches {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn expand(&self, rec: &csv::StringRecord, row: usize, out: &mut Vec<f64>) -> Result<f64> {
        let y = parse_cell(rec, self.layout.outcome, row, &self.outcome)?;
        let numeric: Vec<f64> = self
            .layout
            .numeric
            .iter()
            .zip(&self.numeric_names)
            .map(|(&c, name)| parse_cell(rec, c, row, name))
            .collect::<Result<_>>()?;
        let mut levels = Vec::with_capacity(self.categorical.len());
        for (c, &col) in self.categorical.iter().zip(&self.layout.categorical) {
            let raw = rec.get(col).map(str::trim).unwrap_or_default();
            let idx = c.levels.iter().position(|l| l == raw).ok_or_else(|| PasaError::Ingestion {
                row,
                column: c.name.clone(),
                message: format!("unknown level `{raw}`"),
            })?;
            levels.push(idx);
        }
        let start = out.len();
        for s in &self.sources {
            let v = match s {
                Source::Intercept => 1.0,
                Source::Numeric { col, center, scale } => (numeric[*col] - center) / scale,
                Source::Dummy { col, level } => f64::from(u8::from(levels[*col] == *level)),
                Source::Product(parents) => parents.iter().map(|&i| out[start + i]).product(),
            };
            out.push(v);
        }
        Ok(y)
    }
}

impl Iterator for CsvBatches {
    type Item = Result<BatchData>;

    fn next(&mut self) -> Option<Result<BatchData>> {
        if self.done {
            return None;
        }
        let p = self.sources.len();
        let mut y = Vec::with_capacity(self.batch_size);
        let mut x = Vec::with_capacity(self.batch_size * p);
        let mut record = csv::StringRecord::new();
        while y.len() < self.batch_size {
            match self.reader.read_record(&mut record) {
                Ok(true) => {
                    self.row += 1;
                    match self.expand(&record, self.row, &mut x) {
                        Ok(v) => y.push(v),
                        Err(e) => {
                            self.done = true;
                            return Some(Err(e));
                        }
                    }
                }
                Ok(false) => {
                    self.done = true;
                    break;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
        }
        if y.is_empty() {
            return None;
        }
        Some(BatchData::new(y, x, p))
    }
}

/// Reads the whole file into one batch, returning the expanded column names too.
pub fn read_csv_all(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(BatchData, Vec<String>)> {
    let batches = read_csv_batches(path, schema, 1 << 16)?;
    let names = batches.names().to_vec();
    let parts = batches.collect::<Result<Vec<_>>>()?;
    if parts.is_empty() {
        return Err(PasaError::Ingestion { row: 0, column: String::new(), message: "file has no data rows".into() });
    }
    Ok((BatchData::concat(&parts)?, names))
}

/// Writes `y` followed by the listed design columns, with a header row.
/// Values are printed in shortest round-trip form.
pub fn write_csv<W: Write>(
    out: W,
    outcome: &str,
    columns: &[(String, usize)],
    batches: impl IntoIterator<Item = BatchData>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![outcome.to_string()];
    header.extend(columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    let mut fields = Vec::with_capacity(header.len());
    for batch in batches {
        for (row, y) in batch.rows().zip(batch.y()) {
            fields.clear();
            fields.push(y.to_string());
            fields.extend(columns.iter().map(|(_, j)| row[*j].to_string()));
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema() -> CsvSchema {
        CsvSchema {
            outcome: "y".into(),
            intercept: true,
            numeric: vec![NumericColumn { name: "clicks".into(), standardize: false, mean: None, sd: None }],
            categorical: vec![CategoricalColumn {
                name: "g".into(),
                levels: vec!["a".into(), "b".into()],
                reference: "a".into(),
            }],
            interactions: vec![vec!["g_b".into(), "clicks".into()]],
            two_pass: false,
            p: Some(4),
        }
    }

    #[test]
    fn dummy_and_interaction_expansion() {
        let f = file_with("y,g,clicks\n1,a,2.5\n0,b,-1\n1,b,4\n");
        let mut it = read_csv_batches(f.path(), &schema(), 2).unwrap();
        assert_eq!(it.names(), &["(Intercept)", "clicks", "g_b", "g_b:clicks"]);
        let b1 = it.next().unwrap().unwrap();
        assert_eq!(b1.len(), 2);
        assert_eq!(b1.row(0), &[1.0, 2.5, 0.0, 0.0]);
        assert_eq!(b1.row(1), &[1.0, -1.0, 1.0, -1.0]);
        let b2 = it.next().unwrap().unwrap();
        assert_eq!(b2.len(), 1);
        assert_eq!(b2.row(0), &[1.0, 4.0, 1.0, 4.0]);
        assert!(it.next().is_none());
    }

    #[test]
    fn ingestion_errors_report_position() {
        let f = file_with("y,g,clicks\n1,a,2.5\n0,b,oops\n");
        let err = read_csv_batches(f.path(), &schema(), 10).unwrap().next().unwrap().unwrap_err();
        match err {
            PasaError::Ingestion { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "clicks");
            }
            other => panic!("unexpected {other:?}"),
        }

        let f = file_with("y,g,clicks\n1,c,2.5\n");
        let err = read_csv_batches(f.path(), &schema(), 10).unwrap().next().unwrap().unwrap_err();
        assert!(err.to_string().contains("unknown level `c`"), "{err}");

        let f = file_with("y,clicks\n1,2.5\n");
        assert!(matches!(read_csv_batches(f.path(), &schema(), 10), Err(PasaError::Ingestion { .. })));
    }

    #[test]
    fn schema_validation() {
        let mut s = schema();
        s.p = Some(5);
        assert!(matches!(s.expanded_names(), Err(PasaError::Schema(_))));
        let mut s = schema();
        s.categorical[0].reference = "z".into();
        assert!(s.expanded_names().is_err());
        let mut s = schema();
        s.interactions.push(vec!["clicks".into(), "g_b".into()]);
        s.interactions.push(vec!["clicks".into(), "g_b".into()]);
        s.p = None;
        assert!(s.expanded_names().is_err());
    }

    #[test]
    fn standardization_needs_explicit_two_pass() {
        let f = file_with("y,g,clicks\n1,a,1\n0,b,2\n1,b,3\n");
        let mut s = schema();
        s.numeric[0].standardize = true;
        assert!(matches!(read_csv_batches(f.path(), &s, 10), Err(PasaError::Schema(_))));
        s.two_pass = true;
        let b = read_csv_batches(f.path(), &s, 10).unwrap().next().unwrap().unwrap();
        let col: Vec<f64> = b.rows().map(|r| r[1]).collect();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);

        s.two_pass = false;
        s.numeric[0].mean = Some(1.0);
        s.numeric[0].sd = Some(2.0);
        let b = read_csv_batches(f.path(), &s, 10).unwrap().next().unwrap().unwrap();
        let col: Vec<f64> = b.rows().map(|r| r[1]).collect();
        assert_eq!(col, vec![0.0, 0.5, 1.0]);
    }
}
