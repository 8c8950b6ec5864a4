use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vasamp_core::decode::DecodeParams;
use vasamp_core::eval::{config_checksum, CostModel};
use vasamp_core::mdp::{PolicySpec, Reward};
use vasamp_core::oracle::OracleConfig;
use vasamp_core::suite;
use vasamp_core::value::TdConfig;
use vasamp_core::{EpisodeConfig, Policy, RewardSpec, TokenId, Vocab};

use crate::error::{io_err, CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

/// One experiment. Every random stream derives from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; excluded from the checksum.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    pub mdp: MdpConfig,
    #[serde(default)]
    pub collect: CollectConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub td: TdConfig,
    #[serde(default)]
    pub decode: DecodeParams,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub cost: CostModel,
}

/// Either a bundled instance, optionally with overrides, or a full
/// specification.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpConfig {
    pub instance: Option<String>,
    pub vocab: Option<Vec<String>>,
    /// Label of the end-of-sequence token.
    pub eos: Option<String>,
    pub max_new_tokens: Option<usize>,
    pub prompt: Option<String>,
    pub policy: Option<PolicySpec>,
    pub reward: Option<RewardSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    pub n_trajectories: usize,
    pub temperature: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            n_trajectories: 5000,
            temperature: 0.7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Tabular,
    Linear,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Suffix n-gram order of the featurizer (linear and mlp).
    pub order: usize,
    pub hidden: Vec<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            kind: EstimatorKind::Tabular,
            order: 2,
            hidden: vec![16],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub betas: Vec<f64>,
    pub ks: Vec<usize>,
    pub sizes: Vec<usize>,
    pub bon_ns: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            betas: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
            ks: vec![1, 2],
            sizes: vec![500, 5000, 50_000],
            bon_ns: vec![1, 2, 4, 8, 16],
            lambdas: vec![0.95, 0.0],
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub n_prefixes: usize,
    pub prefix_len: usize,
    pub completions: usize,
    pub temperature: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            n_prefixes: 300,
            prefix_len: 1,
            completions: 10,
            temperature: 1.0,
        }
    }
}

/// A config bound to a concrete MDP.
pub struct Resolved {
    pub config: RunConfig,
    pub checksum: String,
    pub episode: EpisodeConfig,
    pub prompt: Vec<TokenId>,
    pub policy: Box<dyn Policy>,
    pub reward: Reward,
    pub reward_spec: RewardSpec,
    pub oracle: OracleConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let c: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        if c.config_version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config_version {} (expected {CONFIG_VERSION})",
                c.config_version
            )));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match io_err(path, e) {
            CliError::MissingArtifact(m) => CliError::Config(m),
            other => other,
        })?;
        Self::parse(&text)
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn checksum(&self) -> String {
        config_checksum(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn resolve(mut self) -> CliResult<Resolved> {
        let m = &self.mdp;
        let base = match &m.instance {
            Some(name) => Some(suite::by_name(name).ok_or_else(|| {
                CliError::Config(format!("unknown instance {name:?} in mdp.instance"))
            })?),
            None => None,
        };
        let need = |field: &str| CliError::Config(format!("missing field `mdp.{field}`"));
        let vocab = match (&m.vocab, &base) {
            (Some(labels), _) => {
                let eos = match &m.eos {
                    Some(e) => Some(labels.iter().position(|l| l == e).ok_or_else(|| {
                        CliError::Config(format!("mdp.eos {e:?} is not in mdp.vocab"))
                    })?),
                    None => None,
                };
                Vocab::new(labels.clone(), eos)?
            }
            (None, Some(b)) => b.vocab.clone(),
            (None, None) => return Err(need("vocab")),
        };
        let max_new_tokens = m
            .max_new_tokens
            .or(base.as_ref().map(|b| b.max_new_tokens))
            .ok_or_else(|| need("max_new_tokens"))?;
        let policy_spec = m
            .policy
            .clone()
            .or(base.as_ref().map(|b| b.policy.clone()))
            .ok_or_else(|| need("policy"))?;
        let reward_spec = m
            .reward
            .clone()
            .or(base.as_ref().map(|b| b.reward.clone()))
            .ok_or_else(|| need("reward"))?;
        let prompt = match (&m.prompt, &base) {
            (Some(p), _) => vocab.parse(p)?,
            (None, Some(b)) => b.prompt.clone(),
            (None, None) => vec![],
        };
        let episode = EpisodeConfig::new(vocab.clone(), max_new_tokens)?;
        self.td.validate()?;
        self.decode.validate(vocab.len())?;
        if self.collect.temperature.is_nan() || self.collect.temperature <= 0.0 {
            return Err(CliError::Config("collect.temperature must be > 0".into()));
        }
        if self.estimator.kind == EstimatorKind::Mlp
            && !((1..=2).contains(&self.estimator.hidden.len())
                && self.estimator.hidden.iter().all(|&h| h > 0))
        {
            return Err(CliError::Config(
                "estimator.hidden must list 1 or 2 positive widths".into(),
            ));
        }
        if self.collect.n_trajectories == 0 {
            return Err(CliError::Config(
                "collect.n_trajectories must be >= 1".into(),
            ));
        }
        // all randomness hangs off the master seed
        self.td.seed = self.seed;
        self.decode.seed = self.seed;
        let policy = policy_spec.build(&vocab)?;
        let reward = reward_spec.compile(&vocab)?;
        let checksum = self.checksum();
        Ok(Resolved {
            oracle: OracleConfig::with_prompt(prompt.clone()),
            config: self,
            checksum,
            episode,
            prompt,
            policy,
            reward,
            reward_spec,
        })
    }
}

impl Resolved {
    pub fn out_dir(&self) -> PathBuf {
        self.config
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn vocab_size(&self) -> usize {
        self.episode.vocab.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
config_version = 1
name = "t"
[mdp]
instance = "tiny_ab"
"#;

    #[test]
    fn minimal_resolves() {
        let r = RunConfig::parse(MINIMAL).unwrap().resolve().unwrap();
        assert_eq!(r.vocab_size(), 3);
        assert_eq!(r.episode.max_new_tokens, 2);
        assert_eq!(r.config.td.lambda, 0.95);
        assert_eq!(r.config.collect.temperature, 0.7);
        assert_eq!(r.checksum.len(), 64);
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        assert!(matches!(
            RunConfig::parse(&format!("{MINIMAL}\nbogus = 1")),
            Err(CliError::Config(_))
        ));
        let e = RunConfig::parse(
            "config_version = 1\nname = \"t\"\n[mdp]\ninstance = \"tiny_ab\"\n[td]\nlamda = 0.5\n",
        );
        assert!(matches!(e, Err(CliError::Config(m)) if m.contains("lamda")));
        let e = RunConfig::parse("config_version = 7\nname = \"t\"\n[mdp]\n");
        assert!(matches!(e, Err(CliError::Config(m)) if m.contains("config_version")));
    }

    #[test]
    fn missing_reward_names_the_field() {
        let text = r#"
config_version = 1
name = "t"
[mdp]
vocab = ["a", "b", "<eos>"]
eos = "<eos>"
max_new_tokens = 2
policy = { kind = "uniform" }
"#;
        let e = RunConfig::parse(text).unwrap().resolve().err().unwrap();
        assert!(e.to_string().contains("mdp.reward"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn explicit_spec_matches_instance() {
        let text = r#"
config_version = 1
name = "t"
[mdp]
vocab = ["a", "b", "<eos>"]
eos = "<eos>"
max_new_tokens = 2
policy = { kind = "uniform" }
reward = { kind = "pattern", pattern = [0, 1] }
"#;
        let r = RunConfig::parse(text).unwrap().resolve().unwrap();
        assert_eq!(r.reward_spec, suite::tiny_ab().reward);
    }

    #[test]
    fn checksum_tracks_seed_not_out() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        assert_eq!(a.checksum(), b.checksum());
        b.seed = 9;
        assert_ne!(a.checksum(), b.checksum());
    }

    #[test]
    fn zero_epochs_is_config_error() {
        let e = RunConfig::parse(&format!("{MINIMAL}\n[td]\nepochs = 0\n"))
            .unwrap()
            .resolve()
            .err()
            .unwrap();
        assert_eq!(e.exit_code(), 2);
    }
}
