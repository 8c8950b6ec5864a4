use std::collections::BTreeMap;

use crate::mdp::{State, TokenId};

use super::{TrainableValue, TrajectoryDataset, ValueEstimator};

type Key = (Vec<TokenId>, Vec<TokenId>);

fn key(s: &State) -> Key {
    (s.prompt.clone(), s.generated.clone())
}

/// One value per visited state. Unseen states predict the mean training
/// label.
///
/// Each update moves a state's value to the running mean of the targets it
/// received in the current epoch (step size `1/visits`), so a full epoch is
/// an exact least-squares fit of that epoch's targets. `learning_rate` is not
/// used.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TabularValue {
    values: BTreeMap<Key, f64>,
    visits: BTreeMap<Key, u64>,
    default: f64,
}

impl TabularValue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(entries: BTreeMap<Key, f64>, default: f64) -> Self {
        TabularValue {
            values: entries,
            visits: BTreeMap::new(),
            default,
        }
    }

    pub fn default_value(&self) -> f64 {
        self.default
    }

    pub fn entries(&self) -> &BTreeMap<Key, f64> {
        &self.values
    }

    pub fn set(&mut self, state: &State, value: f64) {
        self.values.insert(key(state), value);
    }

    pub fn contains(&self, state: &State) -> bool {
        self.values.contains_key(&key(state))
    }
}

impl ValueEstimator for TabularValue {
    fn predict(&self, state: &State) -> f64 {
        self.values
            .get(&(state.prompt.clone(), state.generated.clone()))
            .copied()
            .unwrap_or(self.default)
    }
}

impl TrainableValue for TabularValue {
    fn prepare(&mut self, dataset: &TrajectoryDataset) {
        self.default = dataset.label_mean();
    }

    fn begin_epoch(&mut self) {
        self.visits.clear();
    }

    fn update(&mut self, states: &[&State], targets: &[f64], _lr: f64) {
        for (s, &y) in states.iter().zip(targets) {
            let k = key(s);
            let n = self.visits.entry(k.clone()).or_insert(0);
            *n += 1;
            let step = 1.0 / *n as f64;
            let v = self.values.entry(k).or_insert(self.default);
            *v += step * (y - *v);
        }
    }
}
