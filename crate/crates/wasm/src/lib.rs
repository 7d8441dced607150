//! Browser bindings for the demo page in `www/`.
//!
//! Curves come back as flat `Float64Array`s; the page pairs them with the
//! grids it passed in.

use opd_core::intervals::{cutoff_from_losses, interval_for};
use opd_core::lognormal::PredictiveLaw;
use opd_core::loss::{asymmetry_classical, asymmetry_pdl, pdl_loss, ClassicalLoss};
use opd_core::montecarlo::sample_law;
use opd_core::rng::substream;
use opd_core::{OpdError, PowerParameter};
use wasm_bindgen::prelude::*;

fn js(e: OpdError) -> JsError {
    JsError::new(&e.to_string())
}

fn lam(l: f64) -> Result<PowerParameter, JsError> {
    PowerParameter::new(l).map_err(js)
}

/// L_λ(δ, y) over `ys`.
#[wasm_bindgen]
pub fn loss_curve(lambda: f64, delta: f64, ys: Vec<f64>) -> Result<Vec<f64>, JsError> {
    let l = lam(lambda)?;
    ys.iter().map(|&y| pdl_loss(delta, y, l).map_err(js)).collect()
}

/// Asymmetry A(f) over `fs`. `loss` is "pdl", "sel", "ael", "arl" or "qtl";
/// `param` is λ for "pdl" and the quantile level for "qtl".
#[wasm_bindgen]
pub fn asymmetry_curve(loss: &str, param: f64, fs: Vec<f64>) -> Result<Vec<f64>, JsError> {
    let kind = match loss {
        "pdl" => {
            let l = lam(param)?;
            return fs.iter().map(|&f| asymmetry_pdl(f, l).map_err(js)).collect();
        }
        "sel" => ClassicalLoss::Sel,
        "ael" => ClassicalLoss::Ael,
        "arl" => ClassicalLoss::Arl,
        "qtl" => ClassicalLoss::quantile(param).map_err(js)?,
        other => return Err(JsError::new(&format!("unknown loss '{other}'"))),
    };
    fs.iter().map(|&f| asymmetry_classical(kind, f).map_err(js)).collect()
}

/// Conditional intervals for a log-normal predictive law LN(μ, v), one per λ.
/// Returns `[predictor, lower, upper]` triples.
#[wasm_bindgen]
pub fn intervals_by_lambda(
    mu: f64,
    v: f64,
    alpha: f64,
    m: usize,
    seed: u64,
    lambdas: Vec<f64>,
) -> Result<Vec<f64>, JsError> {
    if !(v > 0.0 && v.is_finite() && mu.is_finite()) {
        return Err(JsError::new("need finite μ and v > 0"));
    }
    if m < 100 {
        return Err(JsError::new("use at least 100 draws"));
    }
    let law = PredictiveLaw { mu, v, x0_beta: mu + 0.5 * v, csc: 0.0, sigma2_w: v };
    let ys = sample_law(&law, m, &mut substream(seed, 0));
    let mut out = Vec::with_capacity(3 * lambdas.len());
    for &l in &lambdas {
        let p = lam(l)?;
        let delta = law.opd_predict(p).map_err(js)?;
        let losses: Vec<f64> = ys.iter().map(|&y| pdl_loss(delta, y, p)).collect::<Result<_, _>>().map_err(js)?;
        let k = cutoff_from_losses(&losses, alpha).map_err(js)?;
        let b = interval_for(delta, k, p).map_err(js)?;
        out.extend([delta, b.lower, b.upper]);
    }
    Ok(out)
}
