//! Closed-form OPD inference for the log-Gaussian process with multiplicative
//! measurement error.
//!
//! With W = ln Y Gaussian and Z̃ = W + ε at the data sites, the predictive law
//! of W(s₀) is Gaussian with mean μ and variance v, and every quantity below
//! (predictor, its distribution, bias, MSPE, ELP, ELJ, calibration) follows
//! in closed form from (μ, v, x(s₀)′β, c′Σ⁻¹c, σ²_W).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{OpdError, Result};
use crate::linalg::{euclidean, spd_cholesky};
use crate::loss::{branch_of, Branch, PowerParameter};
use crate::normal;
use crate::variogram::{CovarianceParams, SpatialDataset};

/// Largest v tolerated below zero before it is treated as an error rather
/// than rounding.
const NEGATIVE_VARIANCE_SLACK: f64 = 1e-8;

/// A prediction location and its covariate row.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSite {
    pub coords: Vec<f64>,
    pub covariates: Vec<f64>,
}

impl PredictionSite {
    pub fn new(coords: Vec<f64>, covariates: Vec<f64>) -> Self {
        Self { coords, covariates }
    }
}

/// Fitted log-Gaussian model with plug-in parameters.
#[derive(Debug, Clone)]
pub struct LogGaussianModel {
    dataset: SpatialDataset,
    beta: DVector<f64>,
    theta: CovarianceParams,
    chol: Cholesky<f64, Dyn>,
    /// Z̃ − E(Z̃).
    centered: DVector<f64>,
    /// Σ⁻¹(Z̃ − E(Z̃)).
    weighted: DVector<f64>,
}

impl LogGaussianModel {
    pub fn new(dataset: SpatialDataset, beta: DVector<f64>, theta: CovarianceParams) -> Result<Self> {
        if beta.len() != dataset.n_covariates() {
            return Err(OpdError::domain(format!(
                "{} coefficients for {} covariates",
                beta.len(),
                dataset.n_covariates()
            )));
        }
        let chol = spd_cholesky(theta.data_covariance(dataset.locations()))?;
        let expected = expected_log_data(&dataset, &beta, &theta);
        let centered = dataset.log_values() - expected;
        let weighted = chol.solve(&centered);
        Ok(Self { dataset, beta, theta, chol, centered, weighted })
    }

    pub fn dataset(&self) -> &SpatialDataset {
        &self.dataset
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn theta(&self) -> &CovarianceParams {
        &self.theta
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    pub fn centered_log_data(&self) -> &DVector<f64> {
        &self.centered
    }

    /// E(Z̃) = Xβ − 0.5(σ²_W + σ²_ε)1.
    pub fn expected_log_data(&self) -> DVector<f64> {
        expected_log_data(&self.dataset, &self.beta, &self.theta)
    }

    /// Same parameters, site `i` removed from the conditioning set.
    pub fn leave_one_out(&self, i: usize) -> Result<Self> {
        if i >= self.dataset.len() {
            return Err(OpdError::domain(format!("site {i} out of range")));
        }
        if self.dataset.len() < 2 {
            return Err(OpdError::domain("cannot leave out the only observation"));
        }
        Self::new(self.dataset.without(i), self.beta.clone(), self.theta)
    }

    /// Observation site `i` as a prediction site.
    pub fn observation_site(&self, i: usize) -> PredictionSite {
        PredictionSite {
            coords: self.dataset.locations()[i].clone(),
            covariates: self.dataset.covariates().row(i).iter().copied().collect(),
        }
    }

    pub fn x_beta(&self, site: &PredictionSite) -> Result<f64> {
        if site.covariates.len() != self.beta.len() {
            return Err(OpdError::domain(format!(
                "prediction site has {} covariates, model has {}",
                site.covariates.len(),
                self.beta.len()
            )));
        }
        Ok(site.covariates.iter().zip(self.beta.iter()).map(|(x, b)| x * b).sum())
    }

    /// Kriging weights k = Σ⁻¹c(s₀) together with the predictive law.
    pub fn kriging(&self, site: &PredictionSite) -> Result<(DVector<f64>, PredictiveLaw)> {
        let x0_beta = self.x_beta(site)?;
        if site.coords.len() != self.dataset.locations()[0].len() {
            return Err(OpdError::domain("prediction site dimension differs from the data"));
        }
        let c = self.theta.cross_covariance(self.dataset.locations(), &site.coords);
        let k = self.chol.solve(&c);
        let csc = c.dot(&k).max(0.0);
        let sigma2_w = self.theta.sigma2_w();
        let v = sigma2_w - csc;
        if v < -NEGATIVE_VARIANCE_SLACK * sigma2_w.max(1.0) {
            return Err(OpdError::Numerical(format!(
                "conditional variance {v:.3e} is negative beyond rounding"
            )));
        }
        let mu = x0_beta - 0.5 * sigma2_w + c.dot(&self.weighted);
        Ok((k, PredictiveLaw { mu, v: v.max(0.0), x0_beta, csc: csc.min(sigma2_w), sigma2_w }))
    }

    pub fn predictive_law(&self, site: &PredictionSite) -> Result<PredictiveLaw> {
        self.kriging(site).map(|(_, law)| law)
    }

    /// Conditional mean and variance of the block average Σ wᵢ Y(uᵢ) given the data.
    pub fn block_moments(&self, sites: &[PredictionSite], weights: &[f64]) -> Result<(f64, f64)> {
        if sites.is_empty() || sites.len() != weights.len() {
            return Err(OpdError::domain("block needs matching, non-empty sites and weights"));
        }
        let mut means = Vec::with_capacity(sites.len());
        let mut ks = Vec::with_capacity(sites.len());
        let mut cs = Vec::with_capacity(sites.len());
        for site in sites {
            let (k, law) = self.kriging(site)?;
            means.push((law.mu + 0.5 * law.v).exp());
            cs.push(self.theta.cross_covariance(self.dataset.locations(), &site.coords));
            ks.push(k);
        }
        let m = sites.len();
        let cond_cov = DMatrix::from_fn(m, m, |i, j| {
            let prior = self.theta.cov_w(euclidean(&sites[i].coords, &sites[j].coords));
            prior - cs[i].dot(&ks[j])
        });
        let mean: f64 = weights.iter().zip(&means).map(|(w, m)| w * m).sum();
        let mut var = 0.0;
        for i in 0..m {
            for j in 0..m {
                var += weights[i] * weights[j] * means[i] * means[j] * cond_cov[(i, j)].exp_m1();
            }
        }
        Ok((mean, var.max(0.0)))
    }
}

fn expected_log_data(dataset: &SpatialDataset, beta: &DVector<f64>, theta: &CovarianceParams) -> DVector<f64> {
    (dataset.covariates() * beta).add_scalar(-0.5 * (theta.sigma2_w() + theta.sigma2_eps))
}

/// Gaussian law of W(s₀) given Z̃, plus the pieces needed for the
/// predictor's own (data-averaged) distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveLaw {
    /// E(W(s₀) | Z̃).
    pub mu: f64,
    /// var(W(s₀) | Z̃).
    pub v: f64,
    /// x(s₀)′β.
    pub x0_beta: f64,
    /// c(s₀)′Σ⁻¹c(s₀).
    pub csc: f64,
    pub sigma2_w: f64,
}

/// Distribution of δ*_λ(Z; s₀) over the data: log-normal with these moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorMoments {
    pub mean: f64,
    pub variance: f64,
    pub log_mean: f64,
    pub log_var: f64,
}

impl PredictiveLaw {
    /// A law with no data information (c = 0).
    pub fn prior(x0_beta: f64, sigma2_w: f64) -> Self {
        Self { mu: x0_beta - 0.5 * sigma2_w, v: sigma2_w, x0_beta, csc: 0.0, sigma2_w }
    }

    /// ln δ*_λ = μ + 0.5(λ+1)v.
    pub fn log_opd(&self, lambda: PowerParameter) -> f64 {
        self.mu + 0.5 * (lambda.value() + 1.0) * self.v
    }

    /// δ*_λ = exp{μ + 0.5(λ+1)v}; the predictive median at λ = −1.
    pub fn opd_predict(&self, lambda: PowerParameter) -> Result<f64> {
        checked_exp(self.log_opd(lambda))
    }

    /// exp{μ + √v Φ⁻¹(q)}.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        check_level(q)?;
        checked_exp(self.mu + self.v.sqrt() * normal::inverse_cdf(q))
    }

    pub fn predictor_moments(&self, lambda: PowerParameter) -> PredictorMoments {
        let lam = lambda.value();
        let shift = 0.5 * lam * self.v;
        PredictorMoments {
            mean: (self.x0_beta + shift).exp(),
            variance: (2.0 * self.x0_beta + 2.0 * shift).exp() * self.csc.exp_m1(),
            log_mean: self.x0_beta - 0.5 * self.csc + shift,
            log_var: self.csc,
        }
    }

    /// E(δ*_λ) − E(Y(s₀)); has the sign of λ whenever v > 0.
    pub fn bias(&self, lambda: PowerParameter) -> f64 {
        self.x0_beta.exp() * (0.5 * lambda.value() * self.v).exp_m1()
    }

    /// E(δ*_λ − Y(s₀))².
    pub fn mspe(&self, lambda: PowerParameter) -> f64 {
        // e^{σ²_W} − 2e^{cSc+λv/2} + e^{cSc+λv} rearranged into nonnegative terms.
        let lam = lambda.value();
        let gap = (0.5 * lam * self.v).exp_m1();
        (2.0 * self.x0_beta + self.csc).exp() * (self.v.exp_m1() + gap * gap)
    }

    /// Minimised expected loss under the predictive law, (δ*_λ − δ*₀)/λ.
    pub fn elp_min(&self, lambda: PowerParameter) -> f64 {
        (self.mu + 0.5 * self.v).exp() * scaled_growth(lambda.value(), self.v)
    }

    /// Minimised expected loss under the joint law, bias/λ.
    pub fn elj_min(&self, lambda: PowerParameter) -> f64 {
        self.x0_beta.exp() * scaled_growth(lambda.value(), self.v)
    }

    /// λ*_q = 2Φ⁻¹(q)/√v − 1, the λ whose OPD predictor is the q-quantile.
    pub fn calibrate_lambda(&self, q: f64) -> Result<f64> {
        check_level(q)?;
        if !(self.v > 0.0) {
            return Err(OpdError::Calibration(
                "predictive variance is zero, so every quantile coincides".into(),
            ));
        }
        Ok(2.0 * normal::inverse_cdf(q) / self.v.sqrt() - 1.0)
    }
}

/// (e^{λv/2} − 1)/λ, with the λ → 0 limit v/2.
fn scaled_growth(lambda: f64, v: f64) -> f64 {
    match branch_of(lambda) {
        Branch::Zero => 0.5 * v,
        _ => (0.5 * lambda * v).exp_m1() / lambda,
    }
}

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(OpdError::Config(format!("quantile level must lie in (0, 1), got {q}")))
    }
}

pub(crate) fn checked_exp(log_value: f64) -> Result<f64> {
    if log_value.is_nan() {
        return Err(OpdError::Numerical("log-scale value is NaN".into()));
    }
    if log_value > f64::MAX.ln() {
        return Err(OpdError::Overflow { log_value });
    }
    Ok(log_value.exp())
}
