//! CSV ingestion and covariate encoding.
//!
//! A covariate spec is a comma-separated list of column names, each
//! optionally suffixed with `:cat` (treatment-coded indicators, first level
//! as baseline) or `:std` (centred and scaled by the sample sd). An intercept
//! column is prepended unless the spec starts with `-1`.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{OpdError, Result};
use crate::lognormal::PredictionSite;
use crate::variogram::{DuplicatePairs, SpatialDataset};

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Numeric(String),
    Categorical(String),
    Standardized(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSpec {
    pub intercept: bool,
    pub terms: Vec<Term>,
}

impl CovariateSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let mut intercept = true;
        let mut terms = Vec::new();
        for raw in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if raw == "-1" {
                intercept = false;
                continue;
            }
            let (name, kind) = match raw.split_once(':') {
                Some((n, k)) => (n.trim(), Some(k.trim())),
                None => (raw, None),
            };
            if name.is_empty() {
                return Err(OpdError::Config(format!("empty covariate name in '{raw}'")));
            }
            terms.push(match kind {
                None | Some("num") => Term::Numeric(name.into()),
                Some("cat") => Term::Categorical(name.into()),
                Some("std") => Term::Standardized(name.into()),
                Some(other) => {
                    return Err(OpdError::Config(format!("unknown covariate kind '{other}' for {name}")))
                }
            });
        }
        if !intercept && terms.is_empty() {
            return Err(OpdError::Config("covariate spec has no columns".into()));
        }
        Ok(Self { intercept, terms })
    }
}

/// One column of the design matrix, with everything needed to rebuild it on new rows.
#[derive(Debug, Clone, PartialEq)]
pub enum EncodedColumn {
    Intercept,
    Numeric { source: String },
    Indicator { source: String, level: String },
    Standardized { source: String, mean: f64, sd: f64 },
}

impl EncodedColumn {
    pub fn name(&self) -> String {
        match self {
            EncodedColumn::Intercept => "intercept".into(),
            EncodedColumn::Numeric { source } => source.clone(),
            EncodedColumn::Indicator { source, level } => format!("{source}={level}"),
            EncodedColumn::Standardized { source, .. } => format!("std({source})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub columns: Vec<EncodedColumn>,
}

impl Encoding {
    /// Levels, means and sds are taken from `table`.
    pub fn fit(spec: &CovariateSpec, table: &Table) -> Result<Self> {
        let mut columns = Vec::new();
        if spec.intercept {
            columns.push(EncodedColumn::Intercept);
        }
        for term in &spec.terms {
            match term {
                Term::Numeric(name) => {
                    table.numeric_column(name)?;
                    columns.push(EncodedColumn::Numeric { source: name.clone() });
                }
                Term::Categorical(name) => {
                    let levels = sorted_levels(table.text_column(name)?);
                    if levels.len() < 2 {
                        return Err(OpdError::Config(format!("categorical column {name} has a single level")));
                    }
                    columns.extend(
                        levels[1..]
                            .iter()
                            .map(|l| EncodedColumn::Indicator { source: name.clone(), level: l.clone() }),
                    );
                }
                Term::Standardized(name) => {
                    let v = table.numeric_column(name)?;
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
                    if !(sd > 0.0) {
                        return Err(OpdError::Config(format!("column {name} is constant and cannot be standardised")));
                    }
                    columns.push(EncodedColumn::Standardized { source: name.clone(), mean, sd });
                }
            }
        }
        Ok(Self { columns })
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(EncodedColumn::name).collect()
    }

    pub fn encode(&self, table: &Table, row: usize) -> Result<Vec<f64>> {
        self.columns
            .iter()
            .map(|col| match col {
                EncodedColumn::Intercept => Ok(1.0),
                EncodedColumn::Numeric { source } => table.number(row, source),
                EncodedColumn::Indicator { source, level } => {
                    Ok(if table.text(row, source)? == level { 1.0 } else { 0.0 })
                }
                EncodedColumn::Standardized { source, mean, sd } => Ok((table.number(row, source)? - mean) / sd),
            })
            .collect()
    }
}

/// Numeric-aware ordering so that "2" sorts before "10".
fn sorted_levels(values: Vec<&str>) -> Vec<String> {
    let mut levels: Vec<String> = values.into_iter().map(str::to_owned).collect();
    levels.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    });
    levels.dedup();
    levels
}

/// A headed CSV held as strings.
#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<String>,
    index: HashMap<String, usize>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| OpdError::Config(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim_matches('"').to_owned()).collect();
        let index = headers.iter().enumerate().map(|(i, h)| (h.clone(), i)).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { headers, index, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    /// Raw fields of one row.
    pub fn row(&self, row: usize) -> &[String] {
        &self.rows[row]
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| OpdError::Config(format!("missing column '{name}'")))
    }

    pub fn text(&self, row: usize, name: &str) -> Result<&str> {
        let c = self.col(name)?;
        let v = self.rows[row].get(c).map(String::as_str).unwrap_or("");
        if v.is_empty() || v == "NA" {
            return Err(OpdError::Config(format!("row {}: '{name}' is missing", row + 1)));
        }
        Ok(v)
    }

    pub fn number(&self, row: usize, name: &str) -> Result<f64> {
        let s = self.text(row, name)?;
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| OpdError::Config(format!("row {}: '{name}' = '{s}' is not a number", row + 1)))
    }

    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        (0..self.len()).map(|r| self.number(r, name)).collect()
    }

    pub fn text_column(&self, name: &str) -> Result<Vec<&str>> {
        (0..self.len()).map(|r| self.text(r, name)).collect()
    }

    pub fn coords(&self, row: usize, names: &[String]) -> Result<Vec<f64>> {
        names.iter().map(|n| self.number(row, n)).collect()
    }
}

/// Column names for coordinates and the measured value.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub coords: Vec<String>,
    pub value: String,
}

impl Default for Layout {
    fn default() -> Self {
        Self { coords: vec!["x".into(), "y".into()], value: "value".into() }
    }
}

/// Reads observations and fits the covariate encoding on them.
pub fn load_dataset(table: &Table, layout: &Layout, spec: &CovariateSpec) -> Result<(SpatialDataset, Encoding)> {
    if table.is_empty() {
        return Err(OpdError::Config("dataset has no rows".into()));
    }
    let encoding = Encoding::fit(spec, table)?;
    let n = table.len();
    let p = encoding.columns.len();
    let mut locations = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, p);
    for r in 0..n {
        locations.push(table.coords(r, &layout.coords)?);
        values.push(table.number(r, &layout.value)?);
        for (j, v) in encoding.encode(table, r)?.into_iter().enumerate() {
            x[(r, j)] = v;
        }
    }
    Ok((SpatialDataset::new(locations, values, x)?, encoding))
}

/// Prediction sites, one result per row so a bad row does not stop the rest.
pub fn load_sites(table: &Table, coords: &[String], encoding: &Encoding) -> Vec<Result<PredictionSite>> {
    (0..table.len())
        .map(|r| Ok(PredictionSite::new(table.coords(r, coords)?, encoding.encode(table, r)?)))
        .collect()
}

pub fn load_duplicates(table: &Table) -> Result<DuplicatePairs> {
    let z1 = table.numeric_column("z1")?;
    let z2 = table.numeric_column("z2")?;
    DuplicatePairs::new(z1.into_iter().zip(z2).collect())
}
