use serde::{Deserialize, Serialize};

use crate::error::{Result, VasError};

/// Abstract per-token compute of the base model (`m`) and value model
/// (`n`), response length `t`, candidates scored per step `k`, and the
/// Best-of-N sample count `big_n`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub m: Option<f64>,
    pub n: Option<f64>,
    pub t: Option<f64>,
    pub k: Option<f64>,
    pub big_n: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMethod {
    PolicyOnly,
    Bon,
    Vas,
}

fn get(v: Option<f64>, name: &'static str) -> Result<f64> {
    let x = v.ok_or(VasError::MissingField(name))?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(VasError::InvalidParam(format!(
            "{name} must be finite and >= 0, got {x}"
        )));
    }
    Ok(x)
}

/// Policy only: `T²·m`. Best-of-N: `N·T²·(n + m)`. VAS: `T²·(m + k·n)`.
pub fn cost_flops(model: &CostModel, method: CostMethod) -> Result<f64> {
    let t = get(model.t, "t")?;
    let m = get(model.m, "m")?;
    let t2 = t * t;
    Ok(match method {
        CostMethod::PolicyOnly => t2 * m,
        CostMethod::Bon => get(model.big_n, "big_n")? * t2 * (get(model.n, "n")? + m),
        CostMethod::Vas => t2 * (m + get(model.k, "k")? * get(model.n, "n")?),
    })
}

/// Smallest N whose Best-of-N cost is at least the VAS cost, minimum 1.
pub fn matched_bon_n(m: f64, n: f64, k: f64) -> usize {
    (((m + k * n) / (n + m)).ceil() as usize).max(1)
}
