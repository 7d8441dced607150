//! Parameter estimation: measurement-error variance from duplicates, the
//! Cressie–Hawkins empirical semivariogram, a weighted least-squares spherical
//! fit, and the iterated GLS loop for the trend coefficients.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{OpdError, Result};
use crate::linalg::{euclidean, least_squares, spd_cholesky};
use crate::optim::{minimize_in_box, NelderMeadOptions};

/// Observation sites, positive measurements and the trend design matrix.
#[derive(Debug, Clone)]
pub struct SpatialDataset {
    locations: Vec<Vec<f64>>,
    values: Vec<f64>,
    covariates: DMatrix<f64>,
}

impl SpatialDataset {
    pub fn new(locations: Vec<Vec<f64>>, values: Vec<f64>, covariates: DMatrix<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(OpdError::domain("dataset has no observations"));
        }
        if locations.len() != n || covariates.nrows() != n {
            return Err(OpdError::domain(format!(
                "{} locations, {} values and {} covariate rows do not match",
                locations.len(),
                n,
                covariates.nrows()
            )));
        }
        let dim = locations[0].len();
        if dim == 0 || locations.iter().any(|s| s.len() != dim || s.iter().any(|c| !c.is_finite())) {
            return Err(OpdError::domain("locations must share a dimension and be finite"));
        }
        if let Some(i) = values.iter().position(|&z| !(z > 0.0 && z.is_finite())) {
            return Err(OpdError::domain(format!("value {} at site {i} is not positive", values[i])));
        }
        if covariates.ncols() > n {
            return Err(OpdError::domain(format!(
                "{} covariates exceed {n} observations",
                covariates.ncols()
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(OpdError::domain("covariates must be finite"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            locations[a]
                .iter()
                .zip(&locations[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if let Some(w) = order.windows(2).find(|w| locations[w[0]] == locations[w[1]]) {
            return Err(OpdError::domain(format!("sites {} and {} share a location", w[0], w[1])));
        }
        Ok(Self { locations, values, covariates })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    /// Z̃ = ln Z.
    pub fn log_values(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.values.iter().map(|z| z.ln()))
    }

    /// The dataset without site `i`.
    pub fn without(&self, i: usize) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&k| k != i).collect();
        Self {
            locations: keep.iter().map(|&k| self.locations[k].clone()).collect(),
            values: keep.iter().map(|&k| self.values[k]).collect(),
            covariates: self.covariates.select_rows(&keep),
        }
    }

    /// Same sites and covariates, new measurements.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.locations.clone(), values, self.covariates.clone())
    }
}

/// Replicated measurements at the same site.
#[derive(Debug, Clone)]
pub struct DuplicatePairs {
    pairs: Vec<(f64, f64)>,
}

impl DuplicatePairs {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(OpdError::domain("no duplicate pairs"));
        }
        if let Some(p) = pairs.iter().find(|(a, b)| !(*a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite())) {
            return Err(OpdError::domain(format!("duplicate pair {p:?} has a nonpositive entry")));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }
}

/// Maximum-likelihood estimate of σ²_ε: `(1/2P) Σ (ln z₁ − ln z₂)²`.
pub fn estimate_measurement_error(pairs: &DuplicatePairs) -> f64 {
    let p = pairs.pairs.len() as f64;
    pairs.pairs.iter().map(|(a, b)| (a.ln() - b.ln()).powi(2)).sum::<f64>() / (2.0 * p)
}

/// Spherical covariance with sill `sigma2` and range `r`.
pub fn spherical_cov(h: f64, sigma2: f64, r: f64) -> Result<f64> {
    if h.is_nan() || h < 0.0 {
        return Err(OpdError::domain(format!("distance must be nonnegative, got {h}")));
    }
    if !(r > 0.0) {
        return Err(OpdError::domain(format!("range must be positive, got {r}")));
    }
    Ok(spherical(h, sigma2, r))
}

pub(crate) fn spherical(h: f64, sigma2: f64, r: f64) -> f64 {
    if h >= r {
        0.0
    } else {
        let t = h / r;
        sigma2 * (1.0 - 1.5 * t + 0.5 * t * t * t)
    }
}

/// θ = (σ²_η, r, σ²_ξ) together with the measurement-error variance σ²_ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceParams {
    pub sigma2_eta: f64,
    pub range: f64,
    pub sigma2_xi: f64,
    pub sigma2_eps: f64,
}

impl CovarianceParams {
    pub fn new(sigma2_eta: f64, range: f64, sigma2_xi: f64, sigma2_eps: f64) -> Result<Self> {
        for (name, v) in [("sigma2_eta", sigma2_eta), ("sigma2_xi", sigma2_xi), ("sigma2_eps", sigma2_eps)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(OpdError::domain(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(OpdError::domain(format!("range must be positive, got {range}")));
        }
        Ok(Self { sigma2_eta, range, sigma2_xi, sigma2_eps })
    }

    /// σ²_W = σ²_η + σ²_ξ.
    pub fn sigma2_w(&self) -> f64 {
        self.sigma2_eta + self.sigma2_xi
    }

    /// C_W(h): the smooth spherical part plus the microscale term at h = 0.
    pub fn cov_w(&self, h: f64) -> f64 {
        let micro = if h == 0.0 { self.sigma2_xi } else { 0.0 };
        spherical(h, self.sigma2_eta, self.range) + micro
    }

    /// Σ_Z̃ = Σ_η + (σ²_ξ + σ²_ε) I.
    pub fn data_covariance(&self, locations: &[Vec<f64>]) -> DMatrix<f64> {
        let n = locations.len();
        let nugget = self.sigma2_xi + self.sigma2_eps;
        DMatrix::from_fn(n, n, |i, j| {
            let c = spherical(euclidean(&locations[i], &locations[j]), self.sigma2_eta, self.range);
            if i == j {
                c + nugget
            } else {
                c
            }
        })
    }

    /// c(s₀)ᵢ = C_W(‖s₀ − sᵢ‖).
    pub fn cross_covariance(&self, locations: &[Vec<f64>], s0: &[f64]) -> DVector<f64> {
        DVector::from_iterator(locations.len(), locations.iter().map(|s| self.cov_w(euclidean(s, s0))))
    }
}

/// Σ_Z̃, c(s₀) and σ²_W for a prediction site.
pub fn build_covariances(
    theta: &CovarianceParams,
    locations: &[Vec<f64>],
    s0: &[f64],
) -> Result<(Cholesky<f64, Dyn>, DVector<f64>, f64)> {
    let chol = spd_cholesky(theta.data_covariance(locations))?;
    Ok((chol, theta.cross_covariance(locations, s0), theta.sigma2_w()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemivariogramBin {
    pub lag: f64,
    pub gamma: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSemivariogram {
    pub bins: Vec<SemivariogramBin>,
}

/// Equal-width distance classes.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    pub n_bins: usize,
    /// Largest lag considered; half the maximum pairwise distance when `None`.
    pub max_lag: Option<f64>,
    /// Bins with fewer pairs are dropped.
    pub min_pairs: usize,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self { n_bins: 15, max_lag: None, min_pairs: 30 }
    }
}

/// Cressie–Hawkins robust semivariogram of `residuals`.
pub fn robust_semivariogram(
    residuals: &[f64],
    locations: &[Vec<f64>],
    spec: &BinSpec,
) -> Result<EmpiricalSemivariogram> {
    let n = residuals.len();
    if n != locations.len() {
        return Err(OpdError::domain(format!(
            "{n} residuals for {} locations",
            locations.len()
        )));
    }
    if n < 2 {
        return Err(OpdError::domain("semivariogram needs at least two points"));
    }
    if spec.n_bins == 0 {
        return Err(OpdError::Config("semivariogram needs at least one bin".into()));
    }
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    let mut max_dist: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let h = euclidean(&locations[i], &locations[j]);
            max_dist = max_dist.max(h);
            pairs.push((h, (residuals[i] - residuals[j]).abs().sqrt()));
        }
    }
    let max_lag = spec.max_lag.unwrap_or(0.5 * max_dist);
    if !(max_lag > 0.0) {
        return Err(OpdError::Estimation {
            message: "all pairs fall at zero distance; no lag classes can be formed".into(),
            trace: Vec::new(),
        });
    }
    let width = max_lag / spec.n_bins as f64;
    let mut lag_sum = vec![0.0; spec.n_bins];
    let mut root_sum = vec![0.0; spec.n_bins];
    let mut count = vec![0usize; spec.n_bins];
    for (h, root) in pairs {
        if h > max_lag || h == 0.0 {
            continue;
        }
        let k = ((h / width).ceil() as usize).clamp(1, spec.n_bins) - 1;
        lag_sum[k] += h;
        root_sum[k] += root;
        count[k] += 1;
    }
    let bins: Vec<SemivariogramBin> = (0..spec.n_bins)
        .filter(|&k| count[k] >= spec.min_pairs.max(1))
        .map(|k| {
            let m = count[k] as f64;
            let two_gamma = (root_sum[k] / m).powi(4) / (0.457 + 0.494 / m);
            SemivariogramBin { lag: lag_sum[k] / m, gamma: 0.5 * two_gamma, pairs: count[k] }
        })
        .collect();
    if bins.is_empty() {
        return Err(OpdError::Estimation {
            message: format!("no lag class has at least {} pairs", spec.min_pairs),
            trace: Vec::new(),
        });
    }
    Ok(EmpiricalSemivariogram { bins })
}

/// Spherical semivariogram parameters: partial sill σ²_η, range r, nugget c₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalParams {
    pub partial_sill: f64,
    pub range: f64,
    pub nugget: f64,
}

impl SphericalParams {
    pub fn semivariance(&self, h: f64) -> f64 {
        if h == 0.0 {
            0.0
        } else {
            self.nugget + self.partial_sill - spherical(h, self.partial_sill, self.range)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphericalFit {
    pub params: SphericalParams,
    pub objective: f64,
    pub evaluations: usize,
}

/// Weighted least squares with Cressie weights:
/// minimises `Σ N(h) (γ̂(h)/γ(h) − 1)²` subject to nonnegativity.
pub fn fit_spherical_wls(emp: &EmpiricalSemivariogram, init: SphericalParams) -> Result<SphericalFit> {
    if emp.bins.len() < 3 {
        return Err(OpdError::Estimation {
            message: format!("WLS fit needs at least 3 lag classes, got {}", emp.bins.len()),
            trace: Vec::new(),
        });
    }
    let gamma_scale = emp.bins.iter().map(|b| b.gamma).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let min_lag = emp.bins[0].lag;
    let lag_scale = emp.bins.last().map(|b| b.lag).unwrap_or(1.0);
    let scale = [gamma_scale, lag_scale, gamma_scale];
    let objective = |x: &[f64]| -> f64 {
        let params = SphericalParams {
            partial_sill: x[0] * scale[0],
            range: x[1] * scale[1],
            nugget: x[2] * scale[2],
        };
        emp.bins
            .iter()
            .map(|b| {
                let model = params.semivariance(b.lag);
                if model <= 0.0 {
                    if b.gamma == 0.0 {
                        0.0
                    } else {
                        1e30
                    }
                } else {
                    b.pairs as f64 * (b.gamma / model - 1.0).powi(2)
                }
            })
            .sum()
    };
    let lower = [0.0, 1e-3, 0.0];
    let upper = [10.0, 10.0, 10.0];
    let start = [
        init.partial_sill / scale[0],
        (init.range / scale[1]).max(lower[1]),
        init.nugget / scale[2],
    ];
    let options = NelderMeadOptions::default();
    let best = minimize_in_box(objective, &start, &lower, &upper, &options);
    let mut params = SphericalParams {
        partial_sill: best.x[0] * scale[0],
        range: best.x[1] * scale[1],
        nugget: best.x[2] * scale[2],
    };
    // A structure whose range ends before the first lag is pure nugget as far
    // as the data can tell.
    if params.range <= min_lag {
        params.nugget += params.partial_sill;
        params.partial_sill = 0.0;
    }
    let fit = SphericalFit { params, objective: best.value, evaluations: best.evaluations };
    if !best.converged {
        return Err(OpdError::WlsNonConvergence { iterations: best.evaluations, last: Box::new(fit) });
    }
    Ok(fit)
}

#[derive(Debug, Clone)]
pub struct GlsConfig {
    pub tolerance: f64,
    pub max_iter: usize,
    pub bins: BinSpec,
    /// Starting semivariogram parameters; scale-aware defaults when `None`.
    pub init: Option<SphericalParams>,
}

impl Default for GlsConfig {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iter: 50, bins: BinSpec::default(), init: None }
    }
}

/// One pass of the estimation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GlsIteration {
    pub iteration: usize,
    pub beta: Vec<f64>,
    pub semivariogram: SphericalParams,
    pub wls_objective: f64,
    pub max_beta_change: f64,
}

#[derive(Debug, Clone)]
pub struct GlsFit {
    pub beta: DVector<f64>,
    /// √[(X′Σ̃⁻¹X)⁻¹]ₖₖ.
    pub beta_se: DVector<f64>,
    pub theta: CovarianceParams,
    pub semivariogram: EmpiricalSemivariogram,
    pub wls: SphericalFit,
    pub trace: Vec<GlsIteration>,
}

impl GlsFit {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// β̂ₖ ± 1.96·seₖ.
    pub fn confidence_intervals(&self) -> Vec<(f64, f64)> {
        self.beta
            .iter()
            .zip(self.beta_se.iter())
            .map(|(b, se)| (b - 1.96 * se, b + 1.96 * se))
            .collect()
    }
}

/// GLS estimate `(X′Σ⁻¹X)⁻¹X′Σ⁻¹(z + offset·1)` and its standard errors.
pub fn gls_beta(
    x: &DMatrix<f64>,
    sigma: &Cholesky<f64, Dyn>,
    z: &DVector<f64>,
    offset: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let si_x = sigma.solve(x);
    let info = x.transpose() * &si_x;
    let info_chol = Cholesky::new(info.clone())
        .ok_or_else(|| OpdError::Rank("X'Σ⁻¹X is singular".into()))?;
    let shifted = z.add_scalar(offset);
    let rhs = si_x.transpose() * shifted;
    let beta = info_chol.solve(&rhs);
    let inv = info_chol.inverse();
    let se = DVector::from_iterator(inv.nrows(), (0..inv.nrows()).map(|k| inv[(k, k)].max(0.0).sqrt()));
    Ok((beta, se))
}

/// Default semivariogram starting values from the residual variance and the
/// largest pairwise distance.
pub fn default_init(residuals: &[f64], locations: &[Vec<f64>]) -> SphericalParams {
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut max_dist: f64 = 0.0;
    for i in 0..locations.len() {
        for j in (i + 1)..locations.len() {
            max_dist = max_dist.max(euclidean(&locations[i], &locations[j]));
        }
    }
    SphericalParams { partial_sill: 0.5 * var, range: max_dist / 3.0, nugget: 0.5 * var }
}

/// OLS start, then alternate semivariogram fitting and GLS updates of β
/// until the largest coefficient change falls below the tolerance.
pub fn iterative_gls_fit(data: &SpatialDataset, sigma2_eps: f64, config: &GlsConfig) -> Result<GlsFit> {
    if !(sigma2_eps >= 0.0 && sigma2_eps.is_finite()) {
        return Err(OpdError::domain(format!("sigma2_eps must be nonnegative, got {sigma2_eps}")));
    }
    let n = data.len();
    let p = data.n_covariates();
    if n <= p {
        return Err(OpdError::Rank(format!("{n} observations for {p} covariates")));
    }
    let x = data.covariates();
    let z = data.log_values();
    let mut beta = least_squares(x, &z)?;
    let mut residuals = &z - x * &beta;
    let fallback = config.init.unwrap_or_else(|| default_init(residuals.as_slice(), data.locations()));
    let mut previous: Option<SphericalParams> = None;
    let mut trace = Vec::new();

    for iteration in 1..=config.max_iter {
        let fail = |e: OpdError, trace: &Vec<GlsIteration>| match e {
            OpdError::Estimation { message, .. } => {
                OpdError::Estimation { message, trace: trace.clone() }
            }
            other => other,
        };
        let emp = robust_semivariogram(residuals.as_slice(), data.locations(), &config.bins)
            .map_err(|e| fail(e, &trace))?;
        let wls = fit_best_of(&emp, fallback, previous).map_err(|e| fail(e, &trace))?;
        let sp = wls.params;
        let theta = CovarianceParams::new(sp.partial_sill, sp.range, (sp.nugget - sigma2_eps).max(0.0), sigma2_eps)?;
        let chol = spd_cholesky(theta.data_covariance(data.locations()))?;
        let offset = 0.5 * (theta.sigma2_w() + sigma2_eps);
        let (next, se) = gls_beta(x, &chol, &z, offset)?;
        let change = (&next - &beta).amax();
        trace.push(GlsIteration {
            iteration,
            beta: next.iter().copied().collect(),
            semivariogram: sp,
            wls_objective: wls.objective,
            max_beta_change: change,
        });
        beta = next;
        residuals = (&z - x * &beta).add_scalar(offset);
        previous = Some(sp);
        if change < config.tolerance {
            return Ok(GlsFit { beta, beta_se: se, theta, semivariogram: emp, wls, trace });
        }
    }
    Err(OpdError::Estimation {
        message: format!("β did not settle within {} iterations", config.max_iter),
        trace,
    })
}

fn fit_best_of(
    emp: &EmpiricalSemivariogram,
    fallback: SphericalParams,
    warm: Option<SphericalParams>,
) -> Result<SphericalFit> {
    let cold = fit_spherical_wls(emp, fallback);
    let Some(warm) = warm else { return cold };
    let hot = fit_spherical_wls(emp, warm);
    match (cold, hot) {
        (Ok(a), Ok(b)) => Ok(if b.objective <= a.objective { b } else { a }),
        (Ok(a), Err(_)) | (Err(_), Ok(a)) => Ok(a),
        (Err(e), Err(_)) => Err(e),
    }
}
