use std::collections::HashMap;

use crate::error::{Result, VasError};
use crate::mdp::{EpisodeConfig, Policy, RewardFn, State, TokenId};

/// Every state reachable from the root prompt, in breadth-first order.
/// Children of a non-terminal node are indexed by token id.
#[derive(Clone, Debug)]
pub struct StateTree {
    pub(crate) states: Vec<State>,
    pub(crate) children: Vec<Option<Vec<usize>>>,
    index: HashMap<Vec<TokenId>, usize>,
    vocab_size: usize,
}

impl StateTree {
    pub fn build(config: &EpisodeConfig, prompt: &[TokenId], node_cap: usize) -> Result<Self> {
        if node_cap == 0 {
            return Err(VasError::InvalidParam("node_cap must be > 0".into()));
        }
        let v = config.vocab.len();
        let mut states = vec![State::new(prompt.to_vec())];
        let mut children: Vec<Option<Vec<usize>>> = Vec::new();
        let mut i = 0;
        while i < states.len() {
            if config.is_terminal(&states[i]) {
                children.push(None);
            } else {
                if states.len() + v > node_cap {
                    return Err(VasError::StateSpaceTooLarge { cap: node_cap });
                }
                let base = states.len();
                let parent = states[i].clone();
                for t in 0..v {
                    states.push(parent.child(TokenId(t)));
                }
                children.push(Some((base..base + v).collect()));
            }
            i += 1;
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.generated.clone(), i))
            .collect();
        Ok(StateTree {
            states,
            children,
            index,
            vocab_size: v,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn state(&self, node: usize) -> &State {
        &self.states[node]
    }

    pub fn children(&self, node: usize) -> Option<&[usize]> {
        self.children[node].as_deref()
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.children[node].is_none()
    }

    pub fn node_of(&self, generated: &[TokenId]) -> Option<usize> {
        self.index.get(generated).copied()
    }

    pub fn states(&self) -> impl Iterator<Item = &State> {
        self.states.iter()
    }

    pub fn non_terminal(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&n| !self.is_terminal(n))
    }

    pub fn terminal(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&n| self.is_terminal(n))
    }

    /// Next-token distributions at non-terminal nodes.
    pub fn policy_dists<P: Policy + ?Sized>(&self, policy: &P) -> Result<Vec<Option<Vec<f64>>>> {
        (0..self.len())
            .map(|n| {
                if self.is_terminal(n) {
                    return Ok(None);
                }
                let d = policy.next_dist(&self.states[n])?;
                if d.len() != self.vocab_size {
                    return Err(VasError::DimensionMismatch {
                        expected: self.vocab_size,
                        got: d.len(),
                    });
                }
                Ok(Some(d))
            })
            .collect()
    }

    /// Terminal rewards (NaN at non-terminal nodes).
    pub fn rewards<R: RewardFn + ?Sized>(&self, reward: &R) -> Result<Vec<f64>> {
        (0..self.len())
            .map(|n| {
                if !self.is_terminal(n) {
                    return Ok(f64::NAN);
                }
                let r = reward.score(&self.states[n]);
                if r.is_finite() {
                    Ok(r)
                } else {
                    Err(VasError::NonFinite(format!(
                        "reward at {}",
                        self.states[n].key()
                    )))
                }
            })
            .collect()
    }

    /// Probability of reaching each node under per-node distributions.
    pub fn reach(&self, dists: &[Option<Vec<f64>>]) -> Vec<f64> {
        let mut reach = vec![0.0; self.len()];
        reach[0] = 1.0;
        for n in 0..self.len() {
            if let (Some(ch), Some(d)) = (&self.children[n], &dists[n]) {
                for (t, &c) in ch.iter().enumerate() {
                    reach[c] = reach[n] * d[t];
                }
            }
        }
        reach
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Vocab;

    #[test]
    fn tiny_ab_tree_shape() {
        let cfg = EpisodeConfig::new(
            Vocab::from_labels(&["a", "b", "<eos>"], Some(2)).unwrap(),
            2,
        )
        .unwrap();
        let tree = StateTree::build(&cfg, &[], 100).unwrap();
        // root, 3 children, 2 × 3 grandchildren
        assert_eq!(tree.len(), 10);
        assert_eq!(tree.terminal().count(), 7);
        assert!(matches!(
            StateTree::build(&cfg, &[], 5),
            Err(VasError::StateSpaceTooLarge { cap: 5 })
        ));
    }
}
