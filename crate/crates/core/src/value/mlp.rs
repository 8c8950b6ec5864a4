use rand::Rng;

use crate::mdp::State;
use crate::seed::rng_from_seed;

use super::{Differentiable, Featurizer, TrainableValue, TrajectoryDataset, ValueEstimator};

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// `outputs × inputs`, row-major.
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Feed-forward value network over [`Featurizer`] indicators: one or two
/// tanh hidden layers and a linear scalar head.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpValue {
    pub features: Featurizer,
    hidden: Vec<usize>,
    layers: Vec<Layer>,
}

impl MlpValue {
    /// Xavier-uniform weights, zero biases.
    pub fn new(features: Featurizer, hidden: &[usize], seed: u64) -> Self {
        assert!(
            (1..=2).contains(&hidden.len()) && hidden.iter().all(|&h| h > 0),
            "1-2 non-empty hidden layers"
        );
        let mut rng = rng_from_seed(seed);
        let mut sizes = vec![features.dim()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let a = (6.0 / (i + o) as f64).sqrt();
                Layer {
                    inputs: i,
                    outputs: o,
                    w: (0..i * o).map(|_| rng.gen_range(-a..a)).collect(),
                    b: vec![0.0; o],
                }
            })
            .collect();
        MlpValue {
            features,
            hidden: hidden.to_vec(),
            layers,
        }
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    /// `[[outputs, inputs], [outputs]]` per layer, in flat-parameter order.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(|l| [vec![l.outputs, l.inputs], vec![l.outputs]])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Activations of every layer; the first entry is the sparse input.
    fn forward(&self, active: &[usize]) -> Vec<Vec<f64>> {
        let first = &self.layers[0];
        let mut z = first.b.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            for &i in active {
                *zo += first.w[o * first.inputs + i];
            }
        }
        let mut acts = vec![z.iter().map(|v| v.tanh()).collect::<Vec<f64>>()];
        for (li, layer) in self.layers.iter().enumerate().skip(1) {
            let input = acts.last().unwrap();
            let mut z = layer.b.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.w[o * layer.inputs..(o + 1) * layer.inputs];
                *zo += row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            }
            if li + 1 < self.layers.len() {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }
}

impl ValueEstimator for MlpValue {
    fn predict(&self, state: &State) -> f64 {
        self.forward(&self.features.active(state)).last().unwrap()[0]
    }
}

impl Differentiable for MlpValue {
    fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }

    fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params(), "parameter length");
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
    }

    fn loss_and_grad(&self, states: &[&State], targets: &[f64]) -> (f64, Vec<f64>) {
        let b = states.len().max(1) as f64;
        let mut gw: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for (s, &y) in states.iter().zip(targets) {
            let active = self.features.active(s);
            let acts = self.forward(&active);
            let err = acts[last][0] - y;
            loss += err * err;
            // dL/dz for the current layer
            let mut dz = vec![2.0 * err / b];
            for li in (0..=last).rev() {
                let layer = &self.layers[li];
                for (o, d) in dz.iter().enumerate() {
                    gb[li][o] += d;
                    if li == 0 {
                        for &i in &active {
                            gw[0][o * layer.inputs + i] += d;
                        }
                    } else {
                        let input = &acts[li - 1];
                        for (i, x) in input.iter().enumerate() {
                            gw[li][o * layer.inputs + i] += d * x;
                        }
                    }
                }
                if li > 0 {
                    let input = &acts[li - 1];
                    dz = (0..layer.inputs)
                        .map(|i| {
                            let back: f64 = dz
                                .iter()
                                .enumerate()
                                .map(|(o, d)| d * layer.w[o * layer.inputs + i])
                                .sum();
                            back * (1.0 - input[i] * input[i])
                        })
                        .collect();
                }
            }
        }
        let grad = gw
            .into_iter()
            .zip(gb)
            .flat_map(|(w, b)| w.into_iter().chain(b))
            .collect();
        (loss / b, grad)
    }
}

impl TrainableValue for MlpValue {
    fn prepare(&mut self, dataset: &TrajectoryDataset) {
        let out = self.layers.last_mut().unwrap();
        if out.b[0] == 0.0 {
            out.b[0] = dataset.label_mean();
        }
    }

    fn update(&mut self, states: &[&State], targets: &[f64], lr: f64) {
        let (_, g) = self.loss_and_grad(states, targets);
        let mut p = self.params();
        for (w, g) in p.iter_mut().zip(g) {
            *w -= lr * g;
        }
        self.set_params(&p);
    }
}
