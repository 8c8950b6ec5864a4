//! Fixtures shared by the benchmarks.

use vasamp_core::mdp::Reward;
use vasamp_core::oracle::{exact_value, OracleConfig, ValueTable};
use vasamp_core::suite::{self, SuiteInstance};
use vasamp_core::{EpisodeConfig, Policy};

pub struct Fixture {
    pub instance: SuiteInstance,
    pub policy: Box<dyn Policy>,
    pub reward: Reward,
    pub episode: EpisodeConfig,
    pub oracle: OracleConfig,
    pub values: ValueTable,
}

/// A bundled instance together with its exact values.
pub fn fixture(name: &str) -> Fixture {
    let instance = suite::by_name(name).expect("bundled instance");
    let (policy, reward) = instance.build().expect("bundled instance builds");
    let episode = instance.episode();
    let oracle = OracleConfig::with_prompt(instance.prompt.clone());
    let values = exact_value(&policy, &reward, &episode, &oracle).expect("enumerable");
    Fixture {
        instance,
        policy,
        reward,
        episode,
        oracle,
        values,
    }
}
