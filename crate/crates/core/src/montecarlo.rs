//! Distribution-agnostic OPD estimation from predictive draws, delta-method
//! approximations, block prediction, and exact samplers for the log-Gaussian
//! model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{OpdError, Result};
use crate::lognormal::{checked_exp, LogGaussianModel, PredictionSite, PredictiveLaw};
use crate::loss::{branch_of, Branch, PowerParameter};
use crate::rng::{substream, Stream};
use crate::linalg::euclidean;
use crate::variogram::CovarianceParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    Conditional,
    Joint,
}

/// Draws from a predictive distribution [Y(s₀) | Z].
#[derive(Debug, Clone)]
pub struct PredictiveSamples {
    draws: Vec<f64>,
    pub seed: u64,
    pub source: SampleSource,
}

impl PredictiveSamples {
    pub fn new(draws: Vec<f64>, seed: u64, source: SampleSource) -> Result<Self> {
        if draws.is_empty() {
            return Err(OpdError::domain("no predictive draws"));
        }
        if let Some(y) = draws.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
            return Err(OpdError::domain(format!("predictive draw {y} is not positive")));
        }
        Ok(Self { draws, seed, source })
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// `(M⁻¹ Σ y^{λ+1})^{1/(λ+1)}`, or the geometric mean at λ = −1.
pub fn opd_estimate(samples: &PredictiveSamples, lambda: PowerParameter) -> Result<f64> {
    let logs: Vec<f64> = samples.draws.iter().map(|y| y.ln()).collect();
    checked_exp(log_power_mean(&logs, lambda.value()))
}

/// ln of the (λ+1)-power mean of `exp(logs)`.
pub(crate) fn log_power_mean(logs: &[f64], lambda: f64) -> f64 {
    let m = logs.len() as f64;
    let centre = logs.iter().sum::<f64>() / m;
    if branch_of(lambda) == Branch::MinusOne {
        return centre;
    }
    let a = lambda + 1.0;
    let spread = logs.iter().map(|l| (a * (l - centre)).abs()).fold(0.0, f64::max);
    if spread < 1.0 {
        // Near a = 0 the mean of exp(a d) is 1 + tiny; keep the tiny part exact.
        let s = logs.iter().map(|l| (a * (l - centre)).exp_m1()).sum::<f64>() / m;
        centre + s.ln_1p() / a
    } else {
        let top = logs.iter().map(|l| a * (l - centre)).fold(f64::NEG_INFINITY, f64::max);
        let s = logs.iter().map(|l| (a * (l - centre) - top).exp()).sum::<f64>() / m;
        centre + (top + s.ln()) / a
    }
}

/// Delta-method variance of the Monte Carlo OPD estimator.
pub fn opd_estimator_variance(samples: &PredictiveSamples, lambda: PowerParameter) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(OpdError::domain("estimator variance needs at least two draws"));
    }
    let logs: Vec<f64> = samples.draws.iter().map(|y| y.ln()).collect();
    let lam = lambda.value();
    if branch_of(lam) == Branch::MinusOne {
        let mean = logs.iter().sum::<f64>() / m as f64;
        let svar = sample_variance(logs.iter().copied());
        return Ok((2.0 * mean).exp() * svar / m as f64);
    }
    let a = lam + 1.0;
    let top = logs.iter().map(|l| a * l).fold(f64::NEG_INFINITY, f64::max);
    let svar = sample_variance(logs.iter().map(|l| (a * l - top).exp()));
    if svar == 0.0 {
        return Ok(0.0);
    }
    let log_delta = log_power_mean(&logs, lam);
    let log_var = -(m as f64).ln() - 2.0 * a.abs().ln() - 2.0 * lam * log_delta + 2.0 * top + svar.ln();
    checked_exp(log_var)
}

fn sample_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for x in values {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    if n < 2.0 {
        0.0
    } else {
        (m2 / (n - 1.0)).max(0.0)
    }
}

/// Second-order approximation `mean·(1 + λCV²/2 − λ³CV⁴/8)`.
pub fn delta_method_predictor(mean: f64, variance: f64, lambda: PowerParameter) -> Result<f64> {
    check_moments(mean, variance)?;
    let lam = lambda.value();
    let cv2 = variance / (mean * mean);
    let factor = 1.0 + 0.5 * lam * cv2 - lam.powi(3) * cv2 * cv2 / 8.0;
    if !(factor > 0.0) {
        return Err(OpdError::ApproximationBreakdown { factor });
    }
    Ok(mean * factor)
}

/// Second-order approximation to E(Y^{λ+1}): `mean^{λ+1}(1 + λ(λ+1)CV²/2)`.
pub fn delta_method_fractional_moment(mean: f64, variance: f64, lambda: PowerParameter) -> Result<f64> {
    check_moments(mean, variance)?;
    let lam = lambda.value();
    if branch_of(lam) == Branch::MinusOne {
        return Err(OpdError::Unsupported(
            "the fractional moment of order zero carries no information at λ = −1".into(),
        ));
    }
    let a = lam + 1.0;
    let cv2 = variance / (mean * mean);
    Ok(mean.powf(a) * (1.0 + 0.5 * lam * a * cv2))
}

fn check_moments(mean: f64, variance: f64) -> Result<()> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(OpdError::domain(format!("mean must be positive, got {mean}")));
    }
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(OpdError::domain(format!("variance must be nonnegative, got {variance}")));
    }
    Ok(())
}

/// Quadrature for a block average Y(B).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl BlockSpec {
    /// Positive weights, rescaled to sum to one.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(OpdError::domain("block needs matching, non-empty points and weights"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(OpdError::domain("block weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w)
    }

    /// Midpoint rule on an `nx × ny` grid over a rectangle.
    pub fn rectangle(min: [f64; 2], max: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || !(max[0] > min[0] && max[1] > min[1]) {
            return Err(OpdError::Config("block rectangle needs positive extent and cell counts".into()));
        }
        let dx = (max[0] - min[0]) / nx as f64;
        let dy = (max[1] - min[1]) / ny as f64;
        let points = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| vec![min[0] + (i as f64 + 0.5) * dx, min[1] + (j as f64 + 0.5) * dy]))
            .collect();
        Self::uniform(points)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Weighted average of point-level OPD predictors over the block.
pub fn block_predict_average(pointwise: &[f64], block: &BlockSpec) -> Result<f64> {
    if pointwise.len() != block.weights.len() {
        return Err(OpdError::domain(format!(
            "{} pointwise predictors for {} quadrature points",
            pointwise.len(),
            block.weights.len()
        )));
    }
    Ok(pointwise.iter().zip(&block.weights).map(|(d, w)| d * w).sum())
}

/// Delta-method OPD predictor of Y(B) from its predictive mean and variance.
pub fn block_predict_delta(block_mean: f64, block_variance: f64, lambda: PowerParameter) -> Result<f64> {
    delta_method_predictor(block_mean, block_variance, lambda)
}

/// `m` draws of exp{μ + √v ε}.
pub fn sample_law(law: &PredictiveLaw, m: usize, rng: &mut Stream) -> Vec<f64> {
    let sd = law.v.sqrt();
    (0..m)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            (law.mu + sd * e).exp()
        })
        .collect()
}

pub fn sample_predictive(
    model: &LogGaussianModel,
    site: &PredictionSite,
    m: usize,
    seed: u64,
) -> Result<PredictiveSamples> {
    if m == 0 {
        return Err(OpdError::domain("need at least one draw"));
    }
    let law = model.predictive_law(site)?;
    PredictiveSamples::new(sample_law(&law, m, &mut substream(seed, 0)), seed, SampleSource::Conditional)
}

/// One draw of (Y(s₀), Z).
#[derive(Debug, Clone, PartialEq)]
pub struct JointDraw {
    pub y0: f64,
    pub z: Vec<f64>,
}

/// Exact sampler for (W(s₀), Z̃) under the plug-in model.
///
/// Index 0 is the prediction site, indices 1..=n the data sites.
#[derive(Debug, Clone)]
pub struct JointSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    noise_sd: f64,
    noise_mean: f64,
}

impl JointSampler {
    pub fn new(model: &LogGaussianModel, site: &PredictionSite) -> Result<Self> {
        let theta = model.theta();
        let data = model.dataset();
        let n = data.len();
        let mut sites: Vec<&[f64]> = Vec::with_capacity(n + 1);
        sites.push(&site.coords);
        sites.extend(data.locations().iter().map(|s| s.as_slice()));
        let cov = DMatrix::from_fn(n + 1, n + 1, |i, j| theta.cov_w(euclidean(sites[i], sites[j])));
        let factor = if theta.sigma2_w() == 0.0 {
            DMatrix::zeros(n + 1, n + 1)
        } else {
            crate::linalg::spd_cholesky(cov)?.l()
        };
        let x0_beta = model.x_beta(site)?;
        let xb = data.covariates() * model.beta();
        let half = 0.5 * theta.sigma2_w();
        let mean = DVector::from_fn(n + 1, |i, _| if i == 0 { x0_beta - half } else { xb[i - 1] - half });
        Ok(Self { mean, factor, noise_sd: theta.sigma2_eps.sqrt(), noise_mean: -0.5 * theta.sigma2_eps })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// `batch` joint draws on the log scale as columns: row 0 is W(s₀),
    /// rows 1..=n are Z̃ at the data sites.
    pub fn log_batch(&self, batch: usize, rng: &mut Stream) -> DMatrix<f64> {
        let d = self.dimension();
        let eps = DMatrix::from_fn(d, batch, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut out = &self.factor * eps;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        if self.noise_sd > 0.0 || self.noise_mean != 0.0 {
            for j in 0..batch {
                for i in 1..d {
                    let e: f64 = rng.sample(StandardNormal);
                    out[(i, j)] += self.noise_mean + self.noise_sd * e;
                }
            }
        }
        out
    }
}

pub fn sample_joint(model: &LogGaussianModel, site: &PredictionSite, m: usize, seed: u64) -> Result<Vec<JointDraw>> {
    let sampler = JointSampler::new(model, site)?;
    let mut rng = substream(seed, 0);
    let mut out = Vec::with_capacity(m);
    const BATCH: usize = 4096;
    while out.len() < m {
        let b = BATCH.min(m - out.len());
        let logs = sampler.log_batch(b, &mut rng);
        for col in logs.column_iter() {
            out.push(JointDraw { y0: col[0].exp(), z: col.iter().skip(1).map(|l| l.exp()).collect() });
        }
    }
    Ok(out)
}

/// Synthetic data from the model: `replicates` independent draws of Z at
/// `locations`, each a vector with one value per site.
pub fn simulate_data(
    locations: &[Vec<f64>],
    covariates: &DMatrix<f64>,
    beta: &DVector<f64>,
    theta: &CovarianceParams,
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let n = locations.len();
    if n == 0 || covariates.nrows() != n || covariates.ncols() != beta.len() {
        return Err(OpdError::domain(format!(
            "{n} sites, a {}×{} design and {} coefficients do not match",
            covariates.nrows(),
            covariates.ncols(),
            beta.len()
        )));
    }
    let cov = theta.data_covariance(locations);
    let factor = if cov.iter().all(|c| *c == 0.0) {
        DMatrix::zeros(n, n)
    } else {
        crate::linalg::spd_cholesky(cov)?.l()
    };
    let mean = covariates * beta;
    let shift = -0.5 * (theta.sigma2_w() + theta.sigma2_eps);
    let mut rng = substream(seed, 0);
    (0..replicates)
        .map(|_| {
            let e = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let log_z = &mean + &factor * e;
            log_z.iter().map(|l| checked_exp(l + shift)).collect()
        })
        .collect()
}
