use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Result, VasError};
use crate::mdp::{State, TokenId};

use super::{Differentiable, Featurizer, LinearValue, MlpValue, TabularValue, ValueEstimator};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// On-disk estimator.
///
/// * `tabular`: hyperparams `{default, keys}` where `keys[i]` is
///   `[prompt ids, generated ids]`; parameters are the matching values.
/// * `linear`: hyperparams `{features}`; parameters are the `[dim]` weights.
/// * `mlp`: hyperparams `{features, hidden, shapes}`; parameters concatenate
///   each layer's `[outputs, inputs]` row-major weights then `[outputs]`
///   biases, first layer first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub hyperparams: Value,
    pub parameters: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnyEstimator {
    Tabular(TabularValue),
    Linear(LinearValue),
    Mlp(MlpValue),
}

impl ValueEstimator for AnyEstimator {
    fn predict(&self, state: &State) -> f64 {
        match self {
            AnyEstimator::Tabular(e) => e.predict(state),
            AnyEstimator::Linear(e) => e.predict(state),
            AnyEstimator::Mlp(e) => e.predict(state),
        }
    }
}

fn bad(msg: impl Into<String>) -> VasError {
    VasError::Checkpoint(msg.into())
}

fn field<T: for<'de> Deserialize<'de>>(h: &Value, name: &str) -> Result<T> {
    let v = h
        .get(name)
        .ok_or_else(|| bad(format!("missing hyperparam {name}")))?;
    serde_json::from_value(v.clone()).map_err(|e| bad(format!("{name}: {e}")))
}

impl AnyEstimator {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyEstimator::Tabular(_) => "tabular",
            AnyEstimator::Linear(_) => "linear",
            AnyEstimator::Mlp(_) => "mlp",
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let (hyperparams, parameters) = match self {
            AnyEstimator::Tabular(t) => {
                let keys: Vec<_> = t.entries().keys().cloned().collect();
                let values = t.entries().values().copied().collect();
                (json!({"default": t.default_value(), "keys": keys}), values)
            }
            AnyEstimator::Linear(l) => (json!({"features": l.features}), l.params()),
            AnyEstimator::Mlp(m) => (
                json!({"features": m.features, "hidden": m.hidden(), "shapes": m.shapes()}),
                m.params(),
            ),
        };
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: self.kind().to_string(),
            hyperparams,
            parameters,
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format_version {}",
                c.format_version
            )));
        }
        if let Some(i) = c.parameters.iter().position(|p| !p.is_finite()) {
            return Err(bad(format!("parameter {i} is not finite")));
        }
        let h = &c.hyperparams;
        let n = c.parameters.len();
        match c.kind.as_str() {
            "tabular" => {
                let default: f64 = field(h, "default")?;
                let keys: Vec<(Vec<TokenId>, Vec<TokenId>)> = field(h, "keys")?;
                if keys.len() != n {
                    return Err(bad(format!("{} keys for {n} parameters", keys.len())));
                }
                let entries: BTreeMap<_, _> =
                    keys.into_iter().zip(c.parameters.iter().copied()).collect();
                Ok(AnyEstimator::Tabular(TabularValue::from_parts(
                    entries, default,
                )))
            }
            "linear" => {
                let f: Featurizer = field(h, "features")?;
                if f.dim() != n {
                    return Err(bad(format!("expected {} weights, got {n}", f.dim())));
                }
                let mut l = LinearValue::new(f);
                l.set_params(&c.parameters);
                Ok(AnyEstimator::Linear(l))
            }
            "mlp" => {
                let f: Featurizer = field(h, "features")?;
                let hidden: Vec<usize> = field(h, "hidden")?;
                if !(1..=2).contains(&hidden.len()) || hidden.contains(&0) {
                    return Err(bad("hidden must list 1-2 positive widths"));
                }
                let mut m = MlpValue::new(f, &hidden, 0);
                if m.num_params() != n {
                    return Err(bad(format!(
                        "expected {} parameters, got {n}",
                        m.num_params()
                    )));
                }
                m.set_params(&c.parameters);
                Ok(AnyEstimator::Mlp(m))
            }
            other => Err(bad(format!("unknown kind {other:?}"))),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        Self::from_checkpoint(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn states() -> Vec<State> {
        vec![
            State::default(),
            State::with_generated(vec![], vec![TokenId(1)]),
            State::with_generated(vec![TokenId(0)], vec![TokenId(2), TokenId(0)]),
        ]
    }

    #[test]
    fn round_trips() {
        let f = Featurizer::new(3, 3, 2);
        let mut tab = TabularValue::new();
        tab.set(&states()[1], 0.25);
        tab.set(&states()[2], -1.0);
        let mut lin = LinearValue::new(f.clone());
        lin.set_params(&(0..f.dim()).map(|i| i as f64 / 7.0).collect::<Vec<_>>());
        let mlp = MlpValue::new(f, &[4, 3], 9);
        for e in [
            AnyEstimator::Tabular(tab),
            AnyEstimator::Linear(lin),
            AnyEstimator::Mlp(mlp),
        ] {
            let back = AnyEstimator::from_json(&e.to_json()).unwrap();
            for s in states() {
                assert_eq!(e.predict(&s).to_bits(), back.predict(&s).to_bits());
            }
        }
    }

    #[test]
    fn rejects_malformed() {
        let lin = AnyEstimator::Linear(LinearValue::new(Featurizer::new(3, 2, 1)));
        let mut c = lin.to_checkpoint();
        c.parameters.pop();
        assert!(AnyEstimator::from_checkpoint(&c).is_err());
        let mut c = lin.to_checkpoint();
        c.kind = "forest".into();
        assert!(AnyEstimator::from_checkpoint(&c).is_err());
        let mut c = lin.to_checkpoint();
        c.format_version = 99;
        assert!(AnyEstimator::from_checkpoint(&c).is_err());
        assert!(AnyEstimator::from_json("{\"format_version\":1}").is_err());
    }
}
