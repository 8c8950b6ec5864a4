use crate::mdp::State;

use super::{Differentiable, Featurizer, TrainableValue, TrajectoryDataset, ValueEstimator};

/// Linear regression on [`Featurizer`] indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearValue {
    pub features: Featurizer,
    weights: Vec<f64>,
}

impl LinearValue {
    pub fn new(features: Featurizer) -> Self {
        let weights = vec![0.0; features.dim()];
        LinearValue { features, weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl ValueEstimator for LinearValue {
    fn predict(&self, state: &State) -> f64 {
        self.features
            .active(state)
            .into_iter()
            .map(|i| self.weights[i])
            .sum()
    }
}

impl Differentiable for LinearValue {
    fn params(&self) -> Vec<f64> {
        self.weights.clone()
    }

    fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.weights.len(), "parameter length");
        self.weights.copy_from_slice(params);
    }

    fn loss_and_grad(&self, states: &[&State], targets: &[f64]) -> (f64, Vec<f64>) {
        let b = states.len().max(1) as f64;
        let mut grad = vec![0.0; self.weights.len()];
        let mut loss = 0.0;
        for (s, &y) in states.iter().zip(targets) {
            let active = self.features.active(s);
            let f: f64 = active.iter().map(|&i| self.weights[i]).sum();
            let err = f - y;
            loss += err * err;
            for i in active {
                grad[i] += 2.0 * err / b;
            }
        }
        (loss / b, grad)
    }
}

impl TrainableValue for LinearValue {
    fn prepare(&mut self, dataset: &TrajectoryDataset) {
        if self.weights.iter().all(|&w| w == 0.0) {
            self.weights[0] = dataset.label_mean();
        }
    }

    fn update(&mut self, states: &[&State], targets: &[f64], lr: f64) {
        let (_, g) = self.loss_and_grad(states, targets);
        for (w, g) in self.weights.iter_mut().zip(g) {
            *w -= lr * g;
        }
    }
}
