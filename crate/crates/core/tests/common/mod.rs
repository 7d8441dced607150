#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use opd_core::data::{load_dataset, load_duplicates, CovariateSpec, Encoding, Layout, Table};
use opd_core::lognormal::{LogGaussianModel, PredictionSite};
use opd_core::montecarlo::JointSampler;
use opd_core::rng::substream;
use opd_core::variogram::{
    estimate_measurement_error, iterative_gls_fit, CovarianceParams, GlsConfig, GlsFit, SpatialDataset,
};
use rand::Rng;

pub const MEUSE_COVARIATES: &str = "dist,soil:cat,ffreq:cat,x:std";

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn table(name: &str) -> Table {
    Table::read(&data_dir().join(name)).expect("fixture present")
}

pub fn meuse_sigma2_eps() -> f64 {
    estimate_measurement_error(&load_duplicates(&table("duplicates.csv")).unwrap())
}

pub struct MeuseFit {
    pub fit: GlsFit,
    pub model: LogGaussianModel,
    pub encoding: Encoding,
}

pub fn meuse_fit() -> MeuseFit {
    let spec = CovariateSpec::parse(MEUSE_COVARIATES).unwrap();
    let (data, encoding) = load_dataset(&table("meuse.csv"), &Layout::default(), &spec).unwrap();
    let fit = iterative_gls_fit(&data, meuse_sigma2_eps(), &GlsConfig::default()).unwrap();
    let model = LogGaussianModel::new(data, fit.beta.clone(), fit.theta).unwrap();
    MeuseFit { fit, model, encoding }
}

/// Scattered sites on a square, intercept plus one linear trend column.
pub fn scattered_design(n: usize, side: f64, seed: u64) -> (Vec<Vec<f64>>, DMatrix<f64>) {
    let mut rng = substream(seed, 1000);
    let locs: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(0.0..side), rng.random_range(0.0..side)])
        .collect();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { locs[i][0] / side - 0.5 });
    (locs, x)
}

/// One draw of the data from the model itself, so coverage is nominal by construction.
pub fn simulate_dataset(
    locs: Vec<Vec<f64>>,
    x: DMatrix<f64>,
    beta: &DVector<f64>,
    theta: CovarianceParams,
    seed: u64,
) -> LogGaussianModel {
    let n = locs.len();
    let placeholder = SpatialDataset::new(locs.clone(), vec![1.0; n], x.clone()).unwrap();
    let model = LogGaussianModel::new(placeholder.clone(), beta.clone(), theta).unwrap();
    let site = PredictionSite::new(locs[0].iter().map(|c| c + 1e-3).collect(), x.row(0).iter().copied().collect());
    let sampler = JointSampler::new(&model, &site).unwrap();
    let logs = sampler.log_batch(1, &mut substream(seed, 0));
    let values = logs.column(0).iter().skip(1).map(|l| l.exp()).collect();
    LogGaussianModel::new(placeholder.with_values(values).unwrap(), beta.clone(), theta).unwrap()
}
