//! One configuration file for every stage, with environment overrides.
//!
//! Precedence, lowest first: built-in defaults, the TOML file, `KGFORGE_*`
//! environment variables, command-line flags (applied by the caller).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extract::PipelineConfig;
use crate::gateway::http::HttpConfig;
use crate::gateway::mock::MockChat;
use crate::gateway::{Gateway, ModelProfile, RetryPolicy};
use crate::graph::GraphVariant;
use crate::retrieval::{LargeKGConfig, PPRConfig, ToGConfig};
use crate::schema::InductionConfig;

pub const ENV_MOCK: &str = "KGFORGE_MOCK";
pub const ENV_SEED: &str = "KGFORGE_SEED";
pub const ENV_IN_FLIGHT: &str = "KGFORGE_IN_FLIGHT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(flatten)]
    pub http: HttpConfig,
    /// Answer every request offline from a rule table.
    pub mock: bool,
    /// Rule table for the mock; the bundled one when unset.
    pub mock_rules: Option<PathBuf>,
    pub max_output_tokens: u32,
    pub answer_start: Option<String>,
    pub chat_template: Option<String>,
    pub retry: RetryPolicy,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        let profile = ModelProfile::default();
        GatewayConfig {
            http: HttpConfig::default(),
            mock: false,
            mock_rules: None,
            max_output_tokens: profile.max_output_tokens,
            answer_start: profile.answer_start,
            chat_template: profile.chat_template,
            retry: RetryPolicy::default(),
        }
    }
}

impl GatewayConfig {
    pub fn build(&self) -> Result<Gateway> {
        if self.mock {
            let chat = match &self.mock_rules {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    MockChat::from_json(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => MockChat::standard(),
            };
            return Ok(Gateway::mock(chat));
        }
        let profile = ModelProfile {
            model: self.http.model.clone(),
            max_output_tokens: self.max_output_tokens,
            answer_start: self.answer_start.clone(),
            chat_template: self.chat_template.clone(),
        };
        Ok(Gateway::http(self.http.clone(), self.retry.clone(), profile))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieveConfig {
    pub variant: GraphVariant,
    pub tog: ToGConfig,
    pub ppr: PPRConfig,
    pub large: LargeKGConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Report balanced accuracy as the plain sum of the two recalls.
    pub printed_balanced_accuracy: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seed for every randomized stage; overrides the per-section seeds.
    pub seed: Option<u64>,
    /// Concurrent model requests; overrides the per-section values.
    pub in_flight: Option<usize>,
    pub gateway: GatewayConfig,
    pub extract: PipelineConfig,
    pub induce: InductionConfig,
    pub retrieve: RetrieveConfig,
    pub eval: EvalConfig,
}

fn env_parse<T: std::str::FromStr>(name: &str) -> Result<Option<T>> {
    match std::env::var(name) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{name}={v:?} is not valid"))),
        Err(_) => Ok(None),
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` (defaults when `None`) and applies the environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(&text)?
            }
            None => Config::default(),
        };
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        self.gateway.http = std::mem::take(&mut self.gateway.http).with_env();
        if let Some(v) = std::env::var_os(ENV_MOCK) {
            let v = v.to_string_lossy().to_ascii_lowercase();
            self.gateway.mock = matches!(v.as_str(), "1" | "true" | "yes");
        }
        if let Some(s) = env_parse(ENV_SEED)? {
            self.seed = Some(s);
        }
        if let Some(n) = env_parse(ENV_IN_FLIGHT)? {
            self.in_flight = Some(n);
        }
        Ok(())
    }

    /// Pushes the global seed and concurrency into the sections.
    pub fn resolve(&mut self) {
        if let Some(s) = self.seed {
            self.induce.seed = s;
            self.retrieve.large.seed = s;
        }
        if let Some(n) = self.in_flight {
            self.extract.in_flight = n;
            self.induce.in_flight = n;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.extract.validate()?;
        self.induce.validate()?;
        self.retrieve.tog.validate()?;
        self.retrieve.ppr.validate()?;
        self.retrieve.large.validate()?;
        if self.in_flight == Some(0) {
            return Err(Error::Config("in_flight must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the settings that shape outputs; the API key is left out.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.gateway.http.api_key = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse() {
        let cfg = Config::from_toml(
            "seed = 7\n[gateway]\nmock = true\nmodel = \"m\"\n[extract]\nbatch_size = 4\n\
             [retrieve.ppr]\ntop_n_edges = 50\n[retrieve]\nvariant = \"entity-event\"\n",
        )
        .unwrap();
        assert!(cfg.gateway.mock);
        assert_eq!(cfg.gateway.http.model, "m");
        assert_eq!(cfg.extract.batch_size, 4);
        assert_eq!(cfg.retrieve.ppr.top_n_edges, 50);
        assert_eq!(cfg.retrieve.variant, GraphVariant::EntityEvent);
        let mut cfg = cfg;
        cfg.resolve();
        assert_eq!(cfg.induce.seed, 7);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[extract]\nbatchsize = 4\n").is_err());
        assert!(Config::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn round_trip_and_fingerprint() {
        let cfg = Config::default();
        let back = Config::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let mut keyed = cfg.clone();
        keyed.gateway.http.api_key = Some("secret".into());
        assert_eq!(keyed.fingerprint(), cfg.fingerprint());
        let mut other = cfg.clone();
        other.extract.batch_size = 3;
        assert_ne!(other.fingerprint(), cfg.fingerprint());
    }
}
