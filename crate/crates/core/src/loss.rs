//! Power-divergence loss, the classical losses it is compared against, and
//! the multiplicative asymmetry measure `A(f)`.
//!
//! All power-divergence evaluations go through the log ratio `ln(y/δ)`, so
//! ratios far outside `1e±150` do not overflow before the final result does.
//! Near `y = δ` a series in `ln(y/δ)` replaces the closed form, which would
//! otherwise cancel catastrophically.

use crate::error::{OpdError, Result};

/// `|λ|` (resp. `|λ + 1|`) below this selects the `λ = 0` (resp. `λ = −1`) branch.
pub const BRANCH_TOLERANCE: f64 = 1e-12;

const SERIES_RADIUS: f64 = 0.1;
const SMALL_F: f64 = 0.01;

/// The power parameter λ of the power-divergence family.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PowerParameter(f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    General,
    /// λ = 0, the Kullback–Leibler-type branch.
    Zero,
    /// λ = −1, the log-likelihood-ratio branch.
    MinusOne,
}

impl PowerParameter {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() {
            Ok(Self(lambda))
        } else {
            Err(OpdError::domain(format!("power parameter must be finite, got {lambda}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn branch(self) -> Branch {
        branch_of(self.0)
    }
}

impl TryFrom<f64> for PowerParameter {
    type Error = OpdError;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

pub(crate) fn branch_of(lambda: f64) -> Branch {
    if lambda.abs() < BRANCH_TOLERANCE {
        Branch::Zero
    } else if (lambda + 1.0).abs() < BRANCH_TOLERANCE {
        Branch::MinusOne
    } else {
        Branch::General
    }
}

/// Power-divergence loss `L(δ, y)` of predicting `y` by `delta`.
pub fn pdl_loss(delta: f64, y: f64, lambda: PowerParameter) -> Result<f64> {
    check_positive("predictor", delta)?;
    check_positive("predictand", y)?;
    Ok(pdl_unchecked(delta, y, lambda.value()))
}

/// Loss for already validated positive arguments.
pub(crate) fn pdl_unchecked(delta: f64, y: f64, lambda: f64) -> f64 {
    let r = (y - delta) / delta;
    // y − δ is exact for y/δ in [1/2, 2], so ln1p avoids the cancellation of ln y − ln δ.
    let t = if r.abs() < 0.5 { r.ln_1p() } else { y.ln() - delta.ln() };
    loss_from_log_ratio(delta, y, t, lambda)
}

fn loss_from_log_ratio(delta: f64, y: f64, t: f64, lambda: f64) -> f64 {
    let a = lambda + 1.0;
    let scale = 1f64.max(a.abs()).max(lambda.abs());
    if (t * scale).abs() < SERIES_RADIUS {
        return delta * phi_plus_series(t, a);
    }
    let value = match branch_of(lambda) {
        Branch::Zero => y * t - (y - delta),
        Branch::MinusOne => y - delta - delta * t,
        // Two algebraically equal forms; divide by whichever of λ, λ+1 is larger.
        Branch::General if a.abs() >= lambda.abs() => {
            (scaled_expm1(y, lambda * t) / lambda - (y - delta)) / a
        }
        Branch::General => (scaled_expm1(delta, a * t) / a - (y - delta)) / lambda,
    };
    value.max(0.0)
}

/// `scale · (eᵘ − 1)` without overflowing in `eᵘ` when the product is finite.
fn scaled_expm1(scale: f64, u: f64) -> f64 {
    if u > 1.0 {
        (scale.ln() + u).exp() - scale
    } else {
        scale * u.exp_m1()
    }
}

/// φ⁺(eᵗ) = Σ_{k≥2} tᵏ/k! · (1 + a + … + a^{k−2}) with a = λ + 1.
///
/// Valid for every λ, including the two limiting branches.
fn phi_plus_series(t: f64, a: f64) -> f64 {
    let mut term = t * t / 2.0;
    let mut weight = 1.0;
    let mut a_pow = 1.0;
    let mut sum = term * weight;
    for k in 3..60 {
        a_pow *= a;
        weight += a_pow;
        term *= t / k as f64;
        sum += term * weight;
        // weight can vanish (a = −1), so bound the tail by the term size.
        if term.abs() * weight.abs().max(a_pow.abs()).max(1.0) <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// The convex generator φ⁺_λ with φ⁺(1) = φ⁺'(1) = 0, so that
/// `pdl_loss(δ, y, λ) = δ · φ⁺(y/δ, λ)`.
///
/// At `x = 0` the value is `1/(λ+1)` for λ > −1 and `+∞` for λ ≤ −1.
pub fn phi_plus(x: f64, lambda: PowerParameter) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(OpdError::domain(format!("phi_plus needs x >= 0, got {x}")));
    }
    let lam = lambda.value();
    if x == 0.0 {
        return Ok(match lambda.branch() {
            Branch::MinusOne => f64::INFINITY,
            Branch::Zero => 1.0,
            Branch::General if lam < -1.0 => f64::INFINITY,
            Branch::General => 1.0 / (lam + 1.0),
        });
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(loss_from_log_ratio(1.0, x, x.ln(), lam))
}

/// Losses from the classical table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassicalLoss {
    /// Squared error.
    Sel,
    /// Absolute error.
    Ael,
    /// Absolute relative error.
    Arl,
    /// Quantile (pinball) loss at level q ∈ (0, 1).
    Qtl(f64),
}

impl ClassicalLoss {
    pub fn quantile(q: f64) -> Result<Self> {
        let kind = ClassicalLoss::Qtl(q);
        kind.validate()?;
        Ok(kind)
    }

    fn validate(self) -> Result<()> {
        match self {
            ClassicalLoss::Qtl(q) if !(q > 0.0 && q < 1.0) => Err(OpdError::Config(format!(
                "quantile loss level must lie in (0, 1), got {q}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassicalLoss::Sel => "SEL",
            ClassicalLoss::Ael => "AEL",
            ClassicalLoss::Arl => "ARL",
            ClassicalLoss::Qtl(_) => "QTL",
        }
    }
}

pub fn classical_loss(kind: ClassicalLoss, delta: f64, y: f64) -> Result<f64> {
    kind.validate()?;
    check_positive("predictor", delta)?;
    check_positive("predictand", y)?;
    let d = delta - y;
    Ok(match kind {
        ClassicalLoss::Sel => d * d,
        ClassicalLoss::Ael => d.abs(),
        ClassicalLoss::Arl => (d / y).abs(),
        ClassicalLoss::Qtl(q) => d * (if d > 0.0 { 1.0 } else { 0.0 } - q),
    })
}

/// Asymmetry `A(f)`: loss of under-predicting by the factor `1−f` over the
/// loss of over-predicting by `1/(1−f)`.
pub fn asymmetry_pdl(f: f64, lambda: PowerParameter) -> Result<f64> {
    check_fraction(f)?;
    let lam = lambda.value();
    if f < SMALL_F {
        return Ok(asymmetry_from_generator(f, lam));
    }
    let u = 1.0 - f;
    let log_u = (-f).ln_1p();
    Ok(match lambda.branch() {
        Branch::Zero => -(u * log_u + f * u) / (u * log_u + f),
        Branch::MinusOne => -(u * u * log_u + f * u) / (log_u + f),
        Branch::General => {
            let num = ((1.0 - lam) * log_u).exp() - u * (1.0 + lam * f);
            let den = ((lam + 1.0) * log_u).exp_m1() + (lam + 1.0) * f;
            num / den
        }
    })
}

/// `(1−f)² φ⁺(1/(1−f)) / φ⁺(1−f)`, the generator form of the asymmetry.
pub(crate) fn asymmetry_from_generator(f: f64, lambda: f64) -> f64 {
    let log_u = (-f).ln_1p();
    let over = loss_from_log_ratio(1.0, (-log_u).exp(), -log_u, lambda);
    let under = loss_from_log_ratio(1.0, log_u.exp(), log_u, lambda);
    (1.0 - f).powi(2) * over / under
}

pub fn asymmetry_classical(kind: ClassicalLoss, f: f64) -> Result<f64> {
    kind.validate()?;
    check_fraction(f)?;
    let u = 1.0 - f;
    Ok(match kind {
        ClassicalLoss::Sel => u * u,
        ClassicalLoss::Ael | ClassicalLoss::Arl => u,
        ClassicalLoss::Qtl(q) => u * q / (1.0 - q),
    })
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(OpdError::domain(format!("{what} must be positive and finite, got {v}")))
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(OpdError::domain(format!("f must lie in (0, 1), got {f}")))
    }
}
