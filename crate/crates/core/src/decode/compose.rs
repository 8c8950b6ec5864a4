use crate::error::{Result, VasError};
use crate::mdp::State;
use crate::value::ValueEstimator;

/// `predict(s) = Σ_i w_i · V_i(s)`.
pub struct CompositeValue<'a> {
    parts: Vec<(f64, Box<dyn ValueEstimator + 'a>)>,
}

impl<'a> CompositeValue<'a> {
    pub fn weights(&self) -> Vec<f64> {
        self.parts.iter().map(|(w, _)| *w).collect()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

impl ValueEstimator for CompositeValue<'_> {
    fn predict(&self, state: &State) -> f64 {
        self.parts.iter().map(|(w, e)| w * e.predict(state)).sum()
    }
}

pub fn compose<'a>(
    weights: &[f64],
    estimators: Vec<Box<dyn ValueEstimator + 'a>>,
) -> Result<CompositeValue<'a>> {
    if estimators.is_empty() {
        return Err(VasError::EmptyComposition);
    }
    if weights.len() != estimators.len() {
        return Err(VasError::LengthMismatch {
            left: weights.len(),
            right: estimators.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
        return Err(VasError::NonFinite(format!("composition weight {w}")));
    }
    Ok(CompositeValue {
        parts: weights.iter().copied().zip(estimators).collect(),
    })
}
