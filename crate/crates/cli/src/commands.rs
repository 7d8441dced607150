use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use opd_core::data::{load_dataset, load_duplicates, load_sites, CovariateSpec, Encoding, Layout, Table};
use opd_core::intervals::{
    intervals_at, loocv_coverage, reference_locations, select_lambda_by_width, CutoffKind, IntervalConfig,
    JointSampling, PredictionInterval,
};
use opd_core::lognormal::{LogGaussianModel, PredictionSite};
use opd_core::loss::{asymmetry_classical, asymmetry_pdl, ClassicalLoss};
use opd_core::montecarlo::simulate_data;
use opd_core::variogram::{estimate_measurement_error, iterative_gls_fit, BinSpec, CovarianceParams, GlsConfig};
use opd_core::{OpdError, PowerParameter};
use rayon::prelude::*;

use crate::args::*;
use crate::error::CliError;
use crate::model::ModelFile;
use crate::output::{sig6, writer};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Intervals(a) => intervals(a),
        Command::Coverage(a) => coverage(a),
        Command::Simulate(a) => simulate(a),
        Command::Asymmetry(a) => asymmetry(a),
    }
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| CliError::Config(format!("missing required setting --{flag}")))
}

fn existing(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    let p = require(path, flag)?;
    if !p.is_file() {
        return Err(CliError::Config(format!("--{flag}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn names(list: &str) -> Vec<String> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect()
}

/// `a,b,c` or `start:stop:step` (inclusive).
pub fn number_list(spec: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Config(format!("cannot read '{spec}' as a list of numbers"));
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let [a, b, step] = [parts[0], parts[1], parts[2]].map(|p| p.parse::<f64>());
        let (a, b, step) = (a.map_err(|_| bad())?, b.map_err(|_| bad())?, step.map_err(|_| bad())?);
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // Round away the drift of repeated float steps.
        return Ok((0..=n).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect());
    }
    let v = names(spec).iter().map(|t| t.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(bad());
    }
    Ok(v)
}

fn lambdas(spec: &str) -> Result<Vec<PowerParameter>> {
    number_list(spec)?.into_iter().map(|l| PowerParameter::new(l).map_err(CliError::from)).collect()
}

fn interval_config(mc: &MonteCarloArgs) -> Result<IntervalConfig> {
    if !(mc.alpha > 0.0 && mc.alpha < 1.0) {
        return Err(CliError::Config(format!("--alpha must lie in (0, 1), got {}", mc.alpha)));
    }
    if mc.m < 1000 {
        return Err(CliError::Config(format!("--M must be at least 1000, got {}", mc.m)));
    }
    Ok(IntervalConfig {
        alpha: mc.alpha,
        m: mc.m,
        seed: mc.seed,
        sampling: match mc.joint {
            JointArg::Reduced => JointSampling::Reduced,
            JointArg::Full => JointSampling::Full,
        },
    })
}

fn fit(a: FitArgs) -> Result<()> {
    let data_path = existing(a.data, "data")?;
    let layout = Layout { coords: names(&a.coords), value: a.value.clone() };
    let spec = CovariateSpec::parse(&a.covariates)?;
    let (data, encoding) = load_dataset(&Table::read(&data_path)?, &layout, &spec)?;
    let (sigma2_eps, source) = match (a.duplicates, a.sigma2_eps) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("give either --duplicates or --sigma2-eps, not both".into()));
        }
        (Some(p), None) => {
            let p = existing(Some(p), "duplicates")?;
            (estimate_measurement_error(&load_duplicates(&Table::read(&p)?)?), "duplicates")
        }
        (None, Some(v)) if v >= 0.0 && v.is_finite() => (v, "given"),
        (None, Some(v)) => return Err(CliError::Config(format!("--sigma2-eps must be nonnegative, got {v}"))),
        (None, None) => return Err(CliError::Config("need --duplicates or --sigma2-eps".into())),
    };
    let gls = GlsConfig {
        tolerance: a.tolerance,
        max_iter: a.max_iter,
        bins: BinSpec { n_bins: a.bins, max_lag: a.max_lag, min_pairs: a.min_pairs },
        init: None,
    };
    let fit = iterative_gls_fit(&data, sigma2_eps, &gls)?;

    eprintln!("σ²_ε = {} ({source}); {} iterations", sig6(sigma2_eps), fit.iterations());
    for ((name, b), (lo, hi)) in encoding.names().iter().zip(fit.beta.iter()).zip(fit.confidence_intervals()) {
        eprintln!("  {name:<16} {:>10}  ({}, {})", sig6(*b), sig6(lo), sig6(hi));
    }
    let t = fit.theta;
    eprintln!(
        "  σ²_η = {}, r = {}, σ²_ξ = {}, σ²_W = {}",
        sig6(t.sigma2_eta),
        sig6(t.range),
        sig6(t.sigma2_xi),
        sig6(t.sigma2_w())
    );

    let file = ModelFile::from_fit(&fit, &data, encoding, layout.coords, source, &gls);
    match a.common.out {
        Some(p) => file.write(&p),
        None => {
            print!("{}", file.to_text());
            Ok(())
        }
    }
}

struct Loaded {
    file: ModelFile,
    model: LogGaussianModel,
}

fn load_model(path: Option<PathBuf>) -> Result<Loaded> {
    let file = ModelFile::read(&existing(path, "model")?)?;
    let model = file.to_model()?;
    Ok(Loaded { file, model })
}

fn load_grid(path: Option<PathBuf>, coords: &[String], encoding: &Encoding) -> Result<Vec<opd_core::Result<PredictionSite>>> {
    let table = Table::read(&existing(path, "grid")?)?;
    Ok(load_sites(&table, coords, encoding))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LambdaMode {
    Constant(f64),
    Calibrate(f64),
    SelectByWidth,
}

fn lambda_mode(s: &str) -> Result<LambdaMode> {
    let s = s.trim();
    if s == "select-by-width" {
        return Ok(LambdaMode::SelectByWidth);
    }
    if let Some(q) = s.strip_prefix("calibrate:") {
        let q: f64 = q.parse().map_err(|_| CliError::Config(format!("bad calibration level in '{s}'")))?;
        if !(q > 0.0 && q < 1.0) {
            return Err(CliError::Config(format!("calibration level must lie in (0, 1), got {q}")));
        }
        return Ok(LambdaMode::Calibrate(q));
    }
    let l: f64 = s
        .parse()
        .map_err(|_| CliError::Config(format!("--lambda must be a number, calibrate:q or select-by-width, got '{s}'")))?;
    PowerParameter::new(l)?;
    Ok(LambdaMode::Constant(l))
}

fn kind(k: KindArg) -> CutoffKind {
    match k {
        KindArg::Conditional => CutoffKind::Conditional,
        KindArg::Unconditional => CutoffKind::Unconditional,
    }
}

/// Writes per-row results in input order; failed rows keep their row number
/// and carry the message in the status column.
fn write_rows(
    out: Option<&Path>,
    header: Vec<String>,
    width: usize,
    rows: Vec<std::result::Result<Vec<Vec<String>>, String>>,
) -> Result<()> {
    let mut w = writer(out)?;
    w.write_record(&header)?;
    let mut failures = 0;
    for (i, r) in rows.into_iter().enumerate() {
        match r {
            Ok(lines) => {
                for mut line in lines {
                    line.insert(0, (i + 1).to_string());
                    line.push("ok".into());
                    w.write_record(&line)?;
                }
            }
            Err(msg) => {
                failures += 1;
                eprintln!("row {}: {msg}", i + 1);
                let mut line = vec![(i + 1).to_string()];
                line.extend(std::iter::repeat_n(String::new(), width));
                line.push(msg);
                w.write_record(&line)?;
            }
        }
    }
    w.flush()?;
    if failures > 0 {
        eprintln!("{failures} row(s) failed; the rest were written");
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let config = interval_config(&a.mc)?;
    let mode = lambda_mode(&a.lambda)?;
    let Loaded { file, model } = load_model(a.model)?;
    let sites = load_grid(a.grid, &file.coords, &file.encoding)?;
    let interval_kind = kind(a.interval);

    let constant = match mode {
        LambdaMode::Constant(l) => Some(l),
        LambdaMode::Calibrate(_) => None,
        LambdaMode::SelectByWidth => {
            let good: Vec<&PredictionSite> = sites.iter().filter_map(|s| s.as_ref().ok()).collect();
            let coords: Vec<Vec<f64>> = good.iter().map(|s| s.coords.clone()).collect();
            let chosen: Vec<PredictionSite> = reference_locations(&coords, a.reference_random, config.seed)
                .into_iter()
                .map(|i| good[i].clone())
                .collect();
            let sel = select_lambda_by_width(&model, &chosen, &lambdas(&a.lambda_grid)?, &config)?;
            eprintln!(
                "width-minimising λ at {} reference points: {}; median {}",
                chosen.len(),
                sel.per_site.iter().map(|l| sig6(*l)).collect::<Vec<_>>().join(" "),
                sig6(sel.median)
            );
            Some(sel.median)
        }
    };

    let rows: Vec<_> = sites
        .par_iter()
        .enumerate()
        .map(|(i, site)| -> std::result::Result<Vec<Vec<String>>, String> {
            let site = site.as_ref().map_err(|e| e.to_string())?;
            let row = || -> opd_core::Result<Vec<String>> {
                let law = model.predictive_law(site)?;
                let l = match (constant, mode) {
                    (Some(l), _) => l,
                    (None, LambdaMode::Calibrate(q)) => law.calibrate_lambda(q)?,
                    _ => unreachable!("λ is either constant or calibrated"),
                };
                let p = PowerParameter::new(l)?;
                let iv = &intervals_at(&model, site, &[p], &[interval_kind], &config, i as u64)?[0];
                let norm = model.x_beta(site)?.exp();
                let raw = [
                    iv.predictor,
                    law.bias(p),
                    law.mspe(p).sqrt(),
                    law.elp_min(p),
                    law.elj_min(p),
                    iv.bounds.lower,
                    iv.bounds.upper,
                ];
                let mut line: Vec<String> = site.coords.iter().map(|c| sig6(*c)).collect();
                line.push(sig6(l));
                line.extend(raw.iter().map(|v| sig6(*v)));
                line.push(sig6(norm));
                line.extend(raw.iter().map(|v| sig6(v / norm)));
                Ok(line)
            };
            row().map(|l| vec![l]).map_err(|e| e.to_string())
        })
        .collect();

    let mut header = vec!["row".to_string()];
    header.extend(file.coords.iter().cloned());
    let fields = ["predictor", "bias", "rmspe", "elp", "elj", "lower", "upper"];
    header.push("lambda".into());
    header.extend(fields.iter().map(|s| s.to_string()));
    header.push("normaliser".into());
    header.extend(fields.iter().map(|s| format!("{s}_norm")));
    header.push("status".into());
    let width = header.len() - 2;
    write_rows(a.common.out.as_deref(), header, width, rows)
}

fn intervals(a: IntervalsArgs) -> Result<()> {
    let config = interval_config(&a.mc)?;
    let lams = lambdas(&a.lambda)?;
    let Loaded { file, model } = load_model(a.model)?;
    let sites = load_grid(a.grid, &file.coords, &file.encoding)?;
    let kinds = [CutoffKind::Conditional, CutoffKind::Unconditional];

    let rows: Vec<_> = sites
        .par_iter()
        .enumerate()
        .map(|(i, site)| -> std::result::Result<Vec<Vec<String>>, String> {
            let site = site.as_ref().map_err(|e| e.to_string())?;
            let all = intervals_at(&model, site, &lams, &kinds, &config, i as u64).map_err(|e| e.to_string())?;
            let norm = model.x_beta(site).map_err(|e| e.to_string())?.exp();
            let (cond, uncond) = all.split_at(lams.len());
            Ok(cond
                .iter()
                .zip(uncond)
                .map(|(c, u): (&PredictionInterval, &PredictionInterval)| {
                    let mut line: Vec<String> = site.coords.iter().map(|x| sig6(*x)).collect();
                    line.extend([c.lambda, c.predictor, norm, c.predictor / norm].map(sig6));
                    for iv in [c, u] {
                        line.extend(
                            [iv.bounds.lower, iv.bounds.upper, iv.bounds.width(), iv.cutoff.value].map(sig6),
                        );
                        line.push(iv.bounds.one_sided.to_string());
                    }
                    line.push(sig6(c.bounds.width() / u.bounds.width()));
                    line
                })
                .collect())
        })
        .collect();

    let mut header = vec!["row".to_string()];
    header.extend(file.coords.iter().cloned());
    header.extend(["lambda", "predictor", "normaliser", "predictor_norm"].map(String::from));
    for k in ["conditional", "unconditional"] {
        header.extend(["lower", "upper", "width", "cutoff", "one_sided"].map(|f| format!("{k}_{f}")));
    }
    header.push("width_ratio".into());
    header.push("status".into());
    let width = header.len() - 2;
    write_rows(a.common.out.as_deref(), header, width, rows)
}

fn coverage(a: CoverageArgs) -> Result<()> {
    let config = interval_config(&a.mc)?;
    let lams = lambdas(&a.lambda)?;
    let Loaded { file, model } = load_model(a.model)?;
    let refit = a.loocv_refit.then_some(&file.gls);
    let kinds = [CutoffKind::Conditional, CutoffKind::Unconditional];
    let cov = loocv_coverage(&model, &lams, &kinds, &config, refit)?;

    let mut w = writer(a.common.out.as_deref())?;
    let mut header = vec!["kind".to_string()];
    header.extend(lams.iter().map(|l| sig6(l.value())));
    w.write_record(&header)?;
    for k in kinds {
        let mut line = vec![k.name().to_string()];
        line.extend(cov.iter().filter(|c| c.kind == k).map(|c| format!("{:.3}", c.coverage)));
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let table = Table::read(&existing(a.sites, "sites")?)?;
    let coords = names(&a.coords);
    let spec = CovariateSpec::parse(&a.covariates)?;
    let encoding = Encoding::fit(&spec, &table)?;
    let beta = number_list(&require(a.beta, "beta")?)?;
    if beta.len() != encoding.columns.len() {
        return Err(CliError::Config(format!(
            "--beta has {} values for the columns {}",
            beta.len(),
            encoding.names().join(",")
        )));
    }
    let theta = CovarianceParams::new(
        require(a.sigma2_eta, "sigma2-eta")?,
        require(a.range, "range")?,
        a.sigma2_xi,
        a.sigma2_eps,
    )?;
    if a.replicates == 0 {
        return Err(CliError::Config("--replicates must be positive".into()));
    }
    let n = table.len();
    let mut locations = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, beta.len());
    for r in 0..n {
        locations.push(table.coords(r, &coords)?);
        for (j, v) in encoding.encode(&table, r)?.into_iter().enumerate() {
            x[(r, j)] = v;
        }
    }
    let reps = simulate_data(&locations, &x, &DVector::from_vec(beta), &theta, a.replicates, a.seed)
        .map_err(|e| match e {
            OpdError::Numerical(m) => CliError::Numerical(format!("covariance is not positive definite: {m}")),
            other => other.into(),
        })?;

    let mut w = writer(a.common.out.as_deref())?;
    let keep: Vec<usize> = (0..table.headers().len()).filter(|&i| table.headers()[i] != "value").collect();
    let mut header: Vec<String> = keep.iter().map(|&i| table.headers()[i].clone()).collect();
    if a.replicates > 1 {
        header.push("replicate".into());
    }
    header.push("value".into());
    w.write_record(&header)?;
    for (k, rep) in reps.iter().enumerate() {
        for (r, z) in rep.iter().enumerate() {
            let mut line: Vec<String> = keep.iter().map(|&i| table.row(r)[i].clone()).collect();
            if a.replicates > 1 {
                line.push((k + 1).to_string());
            }
            // Full precision so that a refit sees exactly the simulated data.
            line.push(z.to_string());
            w.write_record(&line)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn classical(spec: &str) -> Result<Vec<ClassicalLoss>> {
    names(spec)
        .iter()
        .map(|s| match s.to_ascii_lowercase().as_str() {
            "sel" => Ok(ClassicalLoss::Sel),
            "ael" => Ok(ClassicalLoss::Ael),
            "arl" => Ok(ClassicalLoss::Arl),
            other => match other.strip_prefix("qtl:") {
                Some(q) => {
                    let q = q.parse().map_err(|_| CliError::Config(format!("bad quantile level in '{s}'")))?;
                    Ok(ClassicalLoss::quantile(q)?)
                }
                None => Err(CliError::Config(format!("unknown classical loss '{s}'"))),
            },
        })
        .collect()
}

fn asymmetry(a: AsymmetryArgs) -> Result<()> {
    let lams = lambdas(&a.lambda)?;
    let losses = classical(&a.classical)?;
    let fs = number_list(&a.f)?;
    if let Some(f) = fs.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
        return Err(CliError::Config(format!("f grid must lie strictly inside (0, 1), got {f}")));
    }
    let mut w = writer(a.common.out.as_deref())?;
    w.write_record(["loss", "param", "f", "A"])?;
    for l in &lams {
        for &f in &fs {
            w.write_record(["pdl".into(), sig6(l.value()), sig6(f), sig6(asymmetry_pdl(f, *l)?)])?;
        }
    }
    for kind in &losses {
        let param = match kind {
            ClassicalLoss::Qtl(q) => sig6(*q),
            _ => String::new(),
        };
        for &f in &fs {
            w.write_record([kind.name().to_lowercase(), param.clone(), sig6(f), sig6(asymmetry_classical(*kind, f)?)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(number_list("-3:3:1").unwrap(), vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(number_list("0.01:0.99:0.01").unwrap().len(), 99);
        assert_eq!(number_list("-0.5, 1").unwrap(), vec![-0.5, 1.0]);
        assert!(number_list("1:0:0.5").is_err());
        assert!(number_list("a,b").is_err());
    }

    #[test]
    fn lambda_modes() {
        assert_eq!(lambda_mode("-0.5").unwrap(), LambdaMode::Constant(-0.5));
        assert_eq!(lambda_mode("calibrate:0.9").unwrap(), LambdaMode::Calibrate(0.9));
        assert_eq!(lambda_mode("select-by-width").unwrap(), LambdaMode::SelectByWidth);
        assert!(lambda_mode("calibrate:1.5").is_err());
        assert!(lambda_mode("nan").is_err());
    }
}
