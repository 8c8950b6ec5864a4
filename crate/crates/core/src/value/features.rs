use serde::{Deserialize, Serialize};

use crate::mdp::State;

/// Binary features of the generated tokens: a bias, a one-hot of the
/// generated length, and one-hot suffix n-grams for `n = 1..=order`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub vocab_size: usize,
    pub max_len: usize,
    pub order: usize,
}

impl Featurizer {
    pub fn new(vocab_size: usize, max_len: usize, order: usize) -> Self {
        Featurizer {
            vocab_size,
            max_len,
            order,
        }
    }

    pub fn dim(&self) -> usize {
        let mut d = 1 + self.max_len + 1;
        let mut block = 1;
        for _ in 0..self.order {
            block *= self.vocab_size;
            d += block;
        }
        d
    }

    /// Indices of the active features, in increasing order.
    pub fn active(&self, state: &State) -> Vec<usize> {
        let g = &state.generated;
        let mut out = Vec::with_capacity(2 + self.order);
        out.push(0);
        out.push(1 + g.len().min(self.max_len));
        let mut offset = 1 + self.max_len + 1;
        let mut block = 1;
        for n in 1..=self.order {
            block *= self.vocab_size;
            if g.len() >= n {
                let idx = g[g.len() - n..]
                    .iter()
                    .fold(0, |acc, t| acc * self.vocab_size + t.0);
                out.push(offset + idx);
            }
            offset += block;
        }
        out
    }

    pub fn dense(&self, state: &State) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for i in self.active(state) {
            x[i] = 1.0;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TokenId;

    #[test]
    fn layout() {
        let f = Featurizer::new(3, 2, 2);
        assert_eq!(f.dim(), 1 + 3 + 3 + 9);
        let s = State::with_generated(vec![], vec![TokenId(1), TokenId(2)]);
        // bias, len=2, unigram "2", bigram "1,2"
        assert_eq!(f.active(&s), vec![0, 3, 4 + 2, 7 + 5]);
        assert_eq!(f.active(&State::default()), vec![0, 1]);
    }
}
