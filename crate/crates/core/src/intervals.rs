//! Prediction intervals `{y : L(δ*_λ, y) ≤ K}` under power-divergence loss.
//!
//! The cut-off K is an empirical quantile of simulated losses, either under
//! the predictive law [Y(s₀)|Z] (conditional) or under the joint law of
//! (Y(s₀), Z) with the predictor recomputed on every simulated dataset
//! (unconditional). Bounds come from closed forms at λ = 1, 2 and from
//! bisection otherwise.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{OpdError, Result};
use crate::lognormal::{LogGaussianModel, PredictionSite, PredictiveLaw};
use crate::loss::{branch_of, pdl_unchecked, Branch, PowerParameter};
use crate::montecarlo::JointSampler;
use crate::rng::{substream, Stream};
use crate::variogram::{iterative_gls_fit, GlsConfig};

/// Relative width (in log y) at which bisection stops.
const BOUND_TOLERANCE: f64 = 1e-13;
const MAX_BISECTIONS: usize = 200;
const MAX_DOUBLINGS: i32 = 64;
/// Lower-bound search starts at δ·1e−300.
const LOWEST_RATIO_LN: f64 = -690.775_527_898_213_7;
const JOINT_BATCH: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutoffKind {
    Conditional,
    Unconditional,
}

impl CutoffKind {
    pub fn name(self) -> &'static str {
        match self {
            CutoffKind::Conditional => "conditional",
            CutoffKind::Unconditional => "unconditional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub value: f64,
    pub alpha: f64,
    pub kind: CutoffKind,
    pub m_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalBounds {
    pub lower: f64,
    pub upper: f64,
    /// The loss stays below the cut-off all the way down to y → 0⁺.
    pub one_sided: bool,
}

impl IntervalBounds {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower && y <= self.upper
    }
}

/// How the joint law of (Y(s₀), Z) is simulated for the unconditional cut-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JointSampling {
    /// Only (W(s₀), k′(Z̃ − E Z̃)) matters for the loss; that pair is
    /// bivariate normal with both variance and covariance c′Σ⁻¹c, so it is
    /// drawn directly.
    #[default]
    Reduced,
    /// Full (n+1)-dimensional draws of (W(s₀), Z̃) with the predictor
    /// recomputed from each simulated dataset.
    Full,
}

/// Type-7 empirical (1−α) quantile.
pub fn cutoff_from_losses(losses: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if losses.is_empty() {
        return Err(OpdError::domain("no losses to take a quantile of"));
    }
    let mut work = losses.to_vec();
    Ok(quantile_in_place(&mut work, 1.0 - alpha))
}

fn quantile_in_place(values: &mut [f64], p: f64) -> f64 {
    let n = values.len();
    let h = (n - 1) as f64 * p;
    let k = h.floor() as usize;
    let (_, &mut lo, rest) = values.select_nth_unstable_by(k, f64::total_cmp);
    if k + 1 >= n {
        return lo;
    }
    let hi = rest.iter().copied().fold(f64::INFINITY, f64::min);
    lo + (h - k as f64) * (hi - lo)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(OpdError::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_bound_args(delta: f64, k: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(OpdError::domain(format!("predictor must be positive, got {delta}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(OpdError::domain(format!("cut-off must be positive, got {k}")));
    }
    Ok(())
}

/// λ = 1: `δ ± √(2δK)`, the lower end clipped at zero.
pub fn bounds_quadratic(delta: f64, k: f64) -> Result<IntervalBounds> {
    check_bound_args(delta, k)?;
    let root = (2.0 * delta * k).sqrt();
    // δ − √(2δK) written without cancellation.
    let lower = delta * (delta - 2.0 * k) / (delta + root);
    Ok(IntervalBounds { lower: lower.max(0.0), upper: delta + root, one_sided: lower <= 0.0 })
}

/// λ = 2: roots of `y³ − 3δ²y − 2δ²(3K − δ)`.
pub fn bounds_cubic(delta: f64, k: f64) -> Result<IntervalBounds> {
    check_bound_args(delta, k)?;
    let ratio = 3.0 * k / delta;
    if ratio == 2.0 {
        // δ = 1.5K exactly: double root at −δ.
        return Ok(IntervalBounds { lower: 0.0, upper: 3.0 * k, one_sided: true });
    }
    if ratio < 2.0 {
        let phi = ((2.0 - ratio) * ratio).sqrt().atan2(ratio - 1.0);
        let r0 = 2.0 * delta * (phi / 3.0).cos();
        let r2 = 2.0 * delta * (phi / 3.0 - 4.0 * PI / 3.0).cos();
        // Vieta: r0·r1·r2 = 2δ²(3K − δ); avoids cancellation when r1 ≈ 0.
        let r1 = 2.0 * delta * delta * (3.0 * k - delta) / (r0 * r2);
        Ok(IntervalBounds { lower: r1.max(0.0), upper: r0, one_sided: r1 <= 0.0 })
    } else {
        let disc = (9.0 * k * k - 6.0 * delta * k).max(0.0).sqrt();
        let a = (delta * delta * (3.0 * k - delta + disc)).cbrt();
        Ok(IntervalBounds { lower: 0.0, upper: a + delta * delta / a, one_sided: true })
    }
}

/// Any λ: bisection in ln y on each side of δ.
pub fn bounds_general(delta: f64, k: f64, lambda: PowerParameter) -> Result<IntervalBounds> {
    check_bound_args(delta, k)?;
    let lam = lambda.value();
    let excess = |t: f64| pdl_unchecked(delta, (delta.ln() + t).exp(), lam) - k;

    let finite_at_zero = match branch_of(lam) {
        Branch::Zero => Some(delta),
        Branch::MinusOne => None,
        Branch::General if lam > -1.0 => Some(delta / (lam + 1.0)),
        Branch::General => None,
    };
    let (lower, one_sided) = match finite_at_zero {
        Some(limit) if limit <= k => (0.0, true),
        _ if excess(LOWEST_RATIO_LN) < 0.0 => (0.0, true),
        _ => (delta * bisect(&excess, LOWEST_RATIO_LN, 0.0, false)?.exp(), false),
    };

    let mut step = 1;
    while excess(step as f64 * std::f64::consts::LN_2) < 0.0 {
        step += 1;
        if step > MAX_DOUBLINGS {
            return Err(OpdError::Solver(format!(
                "no upper bound below 2^{MAX_DOUBLINGS}·δ for δ={delta}, K={k}, λ={lam}"
            )));
        }
    }
    let hi = step as f64 * std::f64::consts::LN_2;
    let lo = if step == 1 { 0.0 } else { hi - std::f64::consts::LN_2 };
    let upper = delta * bisect(&excess, lo, hi, true)?.exp();
    Ok(IntervalBounds { lower, upper, one_sided })
}

/// Root of `f` in (lo, hi); `increasing` gives the sign pattern.
fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, increasing: bool) -> Result<f64> {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BOUND_TOLERANCE * 1e-1 || mid == lo || mid == hi {
            return Ok(mid);
        }
        let above = f(mid) >= 0.0;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let width = hi - lo;
    if width <= BOUND_TOLERANCE {
        Ok(0.5 * (lo + hi))
    } else {
        Err(OpdError::Solver(format!("bisection stalled with log-width {width:.3e}")))
    }
}

/// Dispatches to the closed forms at λ = 1 and λ = 2.
pub fn bounds(delta: f64, k: f64, lambda: PowerParameter) -> Result<IntervalBounds> {
    let lam = lambda.value();
    if lam == 1.0 {
        bounds_quadratic(delta, k)
    } else if lam == 2.0 {
        bounds_cubic(delta, k)
    } else {
        bounds_general(delta, k, lambda)
    }
}

/// Interval around δ*_λ at cut-off `k`; a zero cut-off (degenerate law)
/// collapses the interval onto the predictor.
pub fn interval_for(delta: f64, k: f64, lambda: PowerParameter) -> Result<IntervalBounds> {
    bounds(delta, k.max(f64::MIN_POSITIVE * delta.max(1.0)), lambda)
}

/// Simulated ratios Y(s₀)/δ*_λ and predictor scales, shared by every λ.
///
/// For the log-Gaussian model ln Y − ln δ*_λ = √v·ε − ½(λ+1)v, so the draws
/// are stored as `√v·ε` and the λ-dependent shift is applied per λ.
struct LossDraws {
    /// √v·ε for each replicate.
    spread: Vec<f64>,
    /// ln δ*_λ(Z⁽ᵐ⁾) − ln δ*_λ(Z) for each replicate; zero for conditional draws.
    log_scale: Vec<f64>,
}

impl LossDraws {
    fn cutoff(&self, law: &PredictiveLaw, lambda: PowerParameter, alpha: f64) -> f64 {
        let lam = lambda.value();
        let delta = law.log_opd(lambda).exp();
        let shift = 0.5 * (lam + 1.0) * law.v;
        let mut losses: Vec<f64> = self
            .spread
            .iter()
            .zip(&self.log_scale)
            .map(|(s, g)| {
                let d = delta * g.exp();
                pdl_unchecked(d, d * (s - shift).exp(), lam)
            })
            .collect();
        quantile_in_place(&mut losses, 1.0 - alpha)
    }
}

fn conditional_draws(law: &PredictiveLaw, m: usize, rng: &mut Stream) -> LossDraws {
    let sd = law.v.sqrt();
    let spread = (0..m).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    LossDraws { spread, log_scale: vec![0.0; m] }
}

/// Joint draws for the unconditional cut-off, expressed relative to the
/// predictive law at the observed data.
fn joint_draws(
    model: &LogGaussianModel,
    site: &PredictionSite,
    law: &PredictiveLaw,
    weights: &DVector<f64>,
    m: usize,
    sampling: JointSampling,
    rng: &mut Stream,
) -> Result<LossDraws> {
    // μ(z) = x₀′β − ½σ²_W + k′(z̃ − E z̃), so ln δ*(z) − ln δ*(Z) = μ(z) − μ(Z).
    let prior_mu = law.x0_beta - 0.5 * law.sigma2_w;
    let observed_offset = law.mu - prior_mu;
    let mut spread = Vec::with_capacity(m);
    let mut log_scale = Vec::with_capacity(m);
    match sampling {
        JointSampling::Reduced => {
            let s_sd = law.csc.sqrt();
            let v_sd = law.v.sqrt();
            for _ in 0..m {
                let s = s_sd * rng.sample::<f64, _>(StandardNormal);
                let e = v_sd * rng.sample::<f64, _>(StandardNormal);
                // W₀ − μ(z) = e, independent of s.
                spread.push(e);
                log_scale.push(s - observed_offset);
            }
        }
        JointSampling::Full => {
            let sampler = JointSampler::new(model, site)?;
            let expected = model.expected_log_data();
            while spread.len() < m {
                let b = JOINT_BATCH.min(m - spread.len());
                let batch = sampler.log_batch(b, rng);
                for col in batch.column_iter() {
                    let mut s = 0.0;
                    for i in 0..expected.len() {
                        s += weights[i] * (col[i + 1] - expected[i]);
                    }
                    let mu_z = prior_mu + s;
                    spread.push(col[0] - mu_z);
                    log_scale.push(s - observed_offset);
                }
            }
        }
    }
    Ok(LossDraws { spread, log_scale })
}

/// An interval with the cut-off that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lambda: f64,
    pub predictor: f64,
    pub bounds: IntervalBounds,
    pub cutoff: Cutoff,
}

/// Monte Carlo settings shared by the interval routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalConfig {
    pub alpha: f64,
    pub m: usize,
    pub seed: u64,
    pub sampling: JointSampling,
}

impl Default for IntervalConfig {
    fn default() -> Self {
        Self { alpha: 0.05, m: 100_000, seed: 42, sampling: JointSampling::Reduced }
    }
}

/// Intervals at one site for several λ and both cut-off kinds, reusing the
/// same draws across λ. `stream` selects the random substream.
pub fn intervals_at(
    model: &LogGaussianModel,
    site: &PredictionSite,
    lambdas: &[PowerParameter],
    kinds: &[CutoffKind],
    config: &IntervalConfig,
    stream: u64,
) -> Result<Vec<PredictionInterval>> {
    check_alpha(config.alpha)?;
    if config.m == 0 {
        return Err(OpdError::Config("Monte Carlo size must be positive".into()));
    }
    let (weights, law) = model.kriging(site)?;
    let mut out = Vec::with_capacity(lambdas.len() * kinds.len());
    for &kind in kinds {
        let mut rng = substream(config.seed, stream.wrapping_mul(2) + kind_bit(kind));
        let draws = match kind {
            CutoffKind::Conditional => conditional_draws(&law, config.m, &mut rng),
            CutoffKind::Unconditional => {
                joint_draws(model, site, &law, &weights, config.m, config.sampling, &mut rng)?
            }
        };
        for &lambda in lambdas {
            let predictor = law.opd_predict(lambda)?;
            let value = draws.cutoff(&law, lambda, config.alpha);
            let bounds = interval_for(predictor, value, lambda)?;
            out.push(PredictionInterval {
                lambda: lambda.value(),
                predictor,
                bounds,
                cutoff: Cutoff { value, alpha: config.alpha, kind, m_used: config.m },
            });
        }
    }
    Ok(out)
}

fn kind_bit(kind: CutoffKind) -> u64 {
    match kind {
        CutoffKind::Conditional => 0,
        CutoffKind::Unconditional => 1,
    }
}

pub fn conditional_interval(
    model: &LogGaussianModel,
    site: &PredictionSite,
    lambda: PowerParameter,
    config: &IntervalConfig,
) -> Result<(IntervalBounds, Cutoff)> {
    let r = intervals_at(model, site, &[lambda], &[CutoffKind::Conditional], config, 0)?;
    Ok((r[0].bounds, r[0].cutoff))
}

pub fn unconditional_interval(
    model: &LogGaussianModel,
    site: &PredictionSite,
    lambda: PowerParameter,
    config: &IntervalConfig,
) -> Result<(IntervalBounds, Cutoff)> {
    let r = intervals_at(model, site, &[lambda], &[CutoffKind::Unconditional], config, 0)?;
    Ok((r[0].bounds, r[0].cutoff))
}

/// Coverage of one (λ, kind) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub lambda: f64,
    pub kind: CutoffKind,
    pub coverage: f64,
    pub per_site: Vec<bool>,
}

/// Leave-one-out coverage: every site is dropped in turn, the interval is
/// built at that site from the others, and the datum is checked against it.
///
/// Parameters stay at the supplied plug-in values unless `refit` is given,
/// in which case β and θ are re-estimated on every reduced dataset.
pub fn loocv_coverage(
    model: &LogGaussianModel,
    lambdas: &[PowerParameter],
    kinds: &[CutoffKind],
    config: &IntervalConfig,
    refit: Option<&GlsConfig>,
) -> Result<Vec<Coverage>> {
    let data = model.dataset();
    let n = data.len();
    if n < 10 {
        return Err(OpdError::domain(format!("LOOCV needs at least 10 sites, got {n}")));
    }
    let per_site: Vec<Vec<bool>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let reduced = match refit {
                None => model.leave_one_out(i),
                Some(gls) => {
                    let sub = data.without(i);
                    iterative_gls_fit(&sub, model.theta().sigma2_eps, gls)
                        .and_then(|fit| LogGaussianModel::new(sub, fit.beta, fit.theta))
                }
            }
            .map_err(|e| site_error(i, e))?;
            let site = model.observation_site(i);
            let z = data.values()[i];
            let intervals = intervals_at(&reduced, &site, lambdas, kinds, config, i as u64)
                .map_err(|e| site_error(i, e))?;
            Ok(intervals.iter().map(|iv| iv.bounds.contains(z)).collect())
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(lambdas.len() * kinds.len());
    for (ki, &kind) in kinds.iter().enumerate() {
        for (li, lambda) in lambdas.iter().enumerate() {
            let idx = ki * lambdas.len() + li;
            let hits: Vec<bool> = per_site.iter().map(|s| s[idx]).collect();
            let coverage = hits.iter().filter(|&&h| h).count() as f64 / n as f64;
            out.push(Coverage { lambda: lambda.value(), kind, coverage, per_site: hits });
        }
    }
    Ok(out)
}

fn site_error(i: usize, e: OpdError) -> OpdError {
    match e {
        OpdError::Numerical(m) => OpdError::Numerical(format!("left-out site {i}: {m}")),
        OpdError::Solver(m) => OpdError::Solver(format!("left-out site {i}: {m}")),
        OpdError::Rank(m) => OpdError::Rank(format!("left-out site {i}: {m}")),
        OpdError::Estimation { message, trace } => {
            OpdError::Estimation { message: format!("left-out site {i}: {message}"), trace }
        }
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    /// λ minimising the unconditional width at each site.
    pub per_site: Vec<f64>,
    /// Lower median of `per_site`.
    pub median: f64,
}

/// Per site, the grid λ with the narrowest unconditional interval (ties go
/// to the smaller |λ|); returns the lower median across sites.
pub fn select_lambda_by_width(
    model: &LogGaussianModel,
    sites: &[PredictionSite],
    lambda_grid: &[PowerParameter],
    config: &IntervalConfig,
) -> Result<LambdaSelection> {
    if sites.is_empty() {
        return Err(OpdError::domain("no sites to select λ on"));
    }
    if lambda_grid.len() < 2 {
        return Err(OpdError::Config("λ grid needs at least two values".into()));
    }
    let per_site: Vec<f64> = sites
        .par_iter()
        .enumerate()
        .map(|(i, site)| {
            let ivs = intervals_at(model, site, lambda_grid, &[CutoffKind::Unconditional], config, i as u64)?;
            let best = ivs
                .iter()
                .min_by(|a, b| {
                    a.bounds
                        .width()
                        .total_cmp(&b.bounds.width())
                        .then(a.lambda.abs().total_cmp(&b.lambda.abs()))
                        .then(a.lambda.total_cmp(&b.lambda))
                })
                .expect("grid is non-empty");
            Ok(best.lambda)
        })
        .collect::<Result<_>>()?;
    let mut sorted = per_site.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    Ok(LambdaSelection { per_site, median })
}

/// Reproducible reference locations: the point nearest the centroid, the
/// extreme points in each coordinate of the first two axes, then `n_random`
/// further distinct points drawn with `seed`.
pub fn reference_locations(coords: &[Vec<f64>], n_random: usize, seed: u64) -> Vec<usize> {
    let n = coords.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = coords[0].len();
    let centroid: Vec<f64> = (0..dim).map(|d| coords.iter().map(|c| c[d]).sum::<f64>() / n as f64).collect();
    let nearest = (0..n)
        .min_by(|&a, &b| {
            crate::linalg::euclidean(&coords[a], &centroid).total_cmp(&crate::linalg::euclidean(&coords[b], &centroid))
        })
        .unwrap();
    let mut chosen = vec![nearest];
    for axis in 0..dim.min(2) {
        let by = |a: &usize, b: &usize| coords[*a][axis].total_cmp(&coords[*b][axis]);
        for pick in [(0..n).min_by(by), (0..n).max_by(by)].into_iter().flatten() {
            if !chosen.contains(&pick) {
                chosen.push(pick);
            }
        }
    }
    let mut rng = substream(seed, u64::MAX);
    let target = (1 + 2 * dim.min(2) + n_random).min(n);
    while chosen.len() < target {
        let pick = rng.random_range(0..n);
        if !chosen.contains(&pick) {
            chosen.push(pick);
        }
    }
    chosen
}
