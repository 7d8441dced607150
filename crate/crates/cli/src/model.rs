//! The fitted-model file: flat `key = value` text holding the estimates, the
//! covariate encoding, the estimation trace, the final empirical
//! semivariogram and the observations themselves, so that prediction needs
//! nothing else. Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use opd_core::data::{EncodedColumn, Encoding};
use opd_core::lognormal::LogGaussianModel;
use opd_core::variogram::{BinSpec, CovarianceParams, GlsConfig, GlsFit, SpatialDataset};

use crate::error::CliError;

const FORMAT: &str = "opd-model 1";

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub coords: Vec<String>,
    pub encoding: Encoding,
    pub beta: Vec<f64>,
    pub beta_se: Vec<f64>,
    pub theta: CovarianceParams,
    pub sigma2_eps_source: String,
    /// Estimation settings, reused when LOOCV refits.
    pub gls: GlsConfig,
    /// Per iteration: β, partial sill, range, nugget, WLS objective, max |Δβ|.
    pub trace: Vec<String>,
    /// lag, γ̂, pairs.
    pub semivariogram: Vec<(f64, f64, usize)>,
    pub locations: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub design: Vec<Vec<f64>>,
}

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn encode_column(c: &EncodedColumn) -> String {
    match c {
        EncodedColumn::Intercept => "intercept".into(),
        EncodedColumn::Numeric { source } => format!("numeric {source}"),
        EncodedColumn::Indicator { source, level } => format!("indicator {source} {level}"),
        EncodedColumn::Standardized { source, mean, sd } => format!("standardized {source} {mean} {sd}"),
    }
}

fn decode_column(s: &str) -> Result<EncodedColumn, CliError> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let bad = || CliError::Config(format!("model file: bad encoding entry '{s}'"));
    Ok(match parts.as_slice() {
        ["intercept"] => EncodedColumn::Intercept,
        ["numeric", src] => EncodedColumn::Numeric { source: (*src).into() },
        ["indicator", src, level] => EncodedColumn::Indicator { source: (*src).into(), level: (*level).into() },
        ["standardized", src, mean, sd] => EncodedColumn::Standardized {
            source: (*src).into(),
            mean: mean.parse().map_err(|_| bad())?,
            sd: sd.parse().map_err(|_| bad())?,
        },
        _ => return Err(bad()),
    })
}

impl ModelFile {
    pub fn from_fit(
        fit: &GlsFit,
        data: &SpatialDataset,
        encoding: Encoding,
        coords: Vec<String>,
        sigma2_eps_source: &str,
        gls: &GlsConfig,
    ) -> Self {
        let trace = fit
            .trace
            .iter()
            .map(|it| {
                format!(
                    "beta {} | partial_sill {} | range {} | nugget {} | wls {} | max_change {}",
                    join(it.beta.iter().copied()),
                    it.semivariogram.partial_sill,
                    it.semivariogram.range,
                    it.semivariogram.nugget,
                    it.wls_objective,
                    it.max_beta_change
                )
            })
            .collect();
        let x = data.covariates();
        Self {
            coords,
            encoding,
            beta: fit.beta.iter().copied().collect(),
            beta_se: fit.beta_se.iter().copied().collect(),
            theta: fit.theta,
            sigma2_eps_source: sigma2_eps_source.into(),
            gls: gls.clone(),
            trace,
            semivariogram: fit.semivariogram.bins.iter().map(|b| (b.lag, b.gamma, b.pairs)).collect(),
            locations: data.locations().to_vec(),
            values: data.values().to_vec(),
            design: (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.theta;
        let _ = writeln!(s, "format = {FORMAT}");
        let _ = writeln!(s, "coords = {}", self.coords.join(","));
        let _ = writeln!(s, "columns = {}", self.encoding.names().join(","));
        for (i, c) in self.encoding.columns.iter().enumerate() {
            let _ = writeln!(s, "encoding.{i} = {}", encode_column(c));
        }
        let _ = writeln!(s, "beta = {}", join(self.beta.iter().copied()));
        let _ = writeln!(s, "beta_se = {}", join(self.beta_se.iter().copied()));
        let _ = writeln!(s, "sigma2_eta = {}", t.sigma2_eta);
        let _ = writeln!(s, "range = {}", t.range);
        let _ = writeln!(s, "sigma2_xi = {}", t.sigma2_xi);
        let _ = writeln!(s, "sigma2_eps = {}", t.sigma2_eps);
        let _ = writeln!(s, "sigma2_eps_source = {}", self.sigma2_eps_source);
        let _ = writeln!(s, "fit.bins = {}", self.gls.bins.n_bins);
        if let Some(m) = self.gls.bins.max_lag {
            let _ = writeln!(s, "fit.max_lag = {m}");
        }
        let _ = writeln!(s, "fit.min_pairs = {}", self.gls.bins.min_pairs);
        let _ = writeln!(s, "fit.tolerance = {}", self.gls.tolerance);
        let _ = writeln!(s, "fit.max_iter = {}", self.gls.max_iter);
        let _ = writeln!(s, "iterations = {}", self.trace.len());
        for (i, line) in self.trace.iter().enumerate() {
            let _ = writeln!(s, "trace.{} = {line}", i + 1);
        }
        for (i, (lag, gamma, pairs)) in self.semivariogram.iter().enumerate() {
            let _ = writeln!(s, "semivariogram.{} = {lag} {gamma} {pairs}", i + 1);
        }
        let _ = writeln!(s, "observations = {}", self.values.len());
        for i in 0..self.values.len() {
            let _ = writeln!(
                s,
                "obs.{} = {} | {} | {}",
                i + 1,
                join(self.locations[i].iter().copied()),
                self.values[i],
                join(self.design[i].iter().copied())
            );
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_text())
            .map_err(|e| CliError::Config(format!("cannot write model {}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read model {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let entries: BTreeMap<String, String> = crate::config::parse(text)?.into_iter().collect();
        let get = |k: &str| {
            entries.get(k).map(String::as_str).ok_or_else(|| CliError::Config(format!("model file: missing '{k}'")))
        };
        if get("format")? != FORMAT {
            return Err(CliError::Config(format!("model file: unsupported format '{}'", get("format")?)));
        }
        let num = |k: &str| -> Result<f64, CliError> {
            get(k)?.parse().map_err(|_| CliError::Config(format!("model file: '{k}' is not a number")))
        };
        let nums = |s: &str, what: &str| -> Result<Vec<f64>, CliError> {
            s.split_whitespace()
                .map(|t| t.parse().map_err(|_| CliError::Config(format!("model file: bad number '{t}' in {what}"))))
                .collect()
        };
        let indexed = |prefix: &str| {
            let mut v: Vec<(usize, &String)> = entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).and_then(|i| i.parse().ok()).map(|i| (i, v)))
                .collect();
            v.sort_by_key(|(i, _)| *i);
            v.into_iter().map(|(_, v)| v.clone()).collect::<Vec<_>>()
        };

        let columns = indexed("encoding.").iter().map(|c| decode_column(c)).collect::<Result<Vec<_>, _>>()?;
        let beta = nums(get("beta")?, "beta")?;
        if columns.len() != beta.len() {
            return Err(CliError::Config("model file: encoding and beta lengths differ".into()));
        }
        let theta = CovarianceParams::new(num("sigma2_eta")?, num("range")?, num("sigma2_xi")?, num("sigma2_eps")?)?;
        let mut semivariogram = Vec::new();
        for line in indexed("semivariogram.") {
            let p: Vec<&str> = line.split_whitespace().collect();
            let bad = || CliError::Config(format!("model file: bad semivariogram row '{line}'"));
            if p.len() != 3 {
                return Err(bad());
            }
            semivariogram.push((p[0].parse().map_err(|_| bad())?, p[1].parse().map_err(|_| bad())?, p[2].parse().map_err(|_| bad())?));
        }
        let (mut locations, mut values, mut design) = (Vec::new(), Vec::new(), Vec::new());
        for line in indexed("obs.") {
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != 3 {
                return Err(CliError::Config(format!("model file: bad observation '{line}'")));
            }
            locations.push(nums(parts[0], "observation")?);
            values.push(nums(parts[1], "observation")?.first().copied().unwrap_or(f64::NAN));
            let row = nums(parts[2], "observation")?;
            if row.len() != beta.len() {
                return Err(CliError::Config("model file: observation covariates do not match beta".into()));
            }
            design.push(row);
        }
        if values.is_empty() {
            return Err(CliError::Config("model file: no observations".into()));
        }
        let defaults = GlsConfig::default();
        let opt = |k: &str| -> Result<Option<f64>, CliError> {
            entries
                .get(k)
                .map(|v| v.parse().map_err(|_| CliError::Config(format!("model file: '{k}' is not a number"))))
                .transpose()
        };
        let gls = GlsConfig {
            tolerance: opt("fit.tolerance")?.unwrap_or(defaults.tolerance),
            max_iter: opt("fit.max_iter")?.map_or(defaults.max_iter, |v| v as usize),
            bins: BinSpec {
                n_bins: opt("fit.bins")?.map_or(defaults.bins.n_bins, |v| v as usize),
                max_lag: opt("fit.max_lag")?,
                min_pairs: opt("fit.min_pairs")?.map_or(defaults.bins.min_pairs, |v| v as usize),
            },
            init: None,
        };
        Ok(Self {
            gls,
            coords: get("coords")?.split(',').map(|s| s.trim().to_owned()).collect(),
            encoding: Encoding { columns },
            beta_se: nums(entries.get("beta_se").map(String::as_str).unwrap_or(""), "beta_se")?,
            beta,
            theta,
            sigma2_eps_source: entries.get("sigma2_eps_source").cloned().unwrap_or_default(),
            trace: indexed("trace."),
            semivariogram,
            locations,
            values,
            design,
        })
    }

    pub fn to_model(&self) -> Result<LogGaussianModel, CliError> {
        let n = self.values.len();
        let p = self.beta.len();
        let x = DMatrix::from_fn(n, p, |i, j| self.design[i][j]);
        let data = SpatialDataset::new(self.locations.clone(), self.values.clone(), x)?;
        Ok(LogGaussianModel::new(data, DVector::from_vec(self.beta.clone()), self.theta)?)
    }
}
