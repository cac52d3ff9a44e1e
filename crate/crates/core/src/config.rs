use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `pipeline` builds the consequence graph; `baseline` maps indicators
/// straight from the policy text against a root-only graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Pipeline,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    #[default]
    Stub,
}

macro_rules! lowercase_enum_text {
    ($ty:ty, $($variant:ident => $text:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok(Self::$variant),)+
                    other => Err(format!("unknown value {other:?}")),
                }
            }
        }
    };
}

lowercase_enum_text!(Mode, Pipeline => "pipeline", Baseline => "baseline");
lowercase_enum_text!(BackendKind, Remote => "remote", Stub => "stub");

/// Every knob that influences the content of an episode record. A copy is
/// embedded in each record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model_name: String,
    /// Sampling temperature for consequence expansion.
    pub temperature: f64,
    /// Sampling temperature for indicator linking.
    pub link_temperature: f64,
    pub max_depth: u32,
    pub max_branch: u32,
    /// Cap on supporting nodes per indicator entry.
    pub max_links_per_node: u32,
    pub api_endpoint: String,
    /// Name of the environment variable holding the credential.
    pub api_key_ref: String,
    pub merge_threshold: f64,
    pub retry_limit: u32,
    pub mode: Mode,
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model_name: "chat-model".to_string(),
            temperature: 0.7,
            link_temperature: 0.2,
            max_depth: 3,
            max_branch: 3,
            max_links_per_node: 5,
            api_endpoint: String::new(),
            api_key_ref: "POLICYGRAPH_API_KEY".to_string(),
            merge_threshold: 0.8,
            retry_limit: 3,
            mode: Mode::Pipeline,
            backend: BackendKind::Stub,
            random_seed: Some(42),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be a finite non-negative number")]
    NegativeOrNan(&'static str),
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("merge_threshold must lie in [0, 1]")]
    Threshold,
    #[error("remote backend requires {0}")]
    RemoteMissing(&'static str),
    #[error("stub backend requires random_seed")]
    StubSeed,
}

impl RunConfig {
    /// Checks numeric bounds and backend requirements. `max_depth` may be 0
    /// (root-only graph).
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("temperature", self.temperature),
            ("link_temperature", self.link_temperature),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError::NegativeOrNan(name));
            }
        }
        for (name, v) in [
            ("max_branch", self.max_branch),
            ("max_links_per_node", self.max_links_per_node),
            ("retry_limit", self.retry_limit),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        if !(0.0..=1.0).contains(&self.merge_threshold) {
            return Err(ConfigError::Threshold);
        }
        match self.backend {
            BackendKind::Remote => {
                if self.api_endpoint.trim().is_empty() {
                    return Err(ConfigError::RemoteMissing("api_endpoint"));
                }
                if self.api_key_ref.trim().is_empty() {
                    return Err(ConfigError::RemoteMissing("api_key_ref"));
                }
            }
            BackendKind::Stub => {
                if self.random_seed.is_none() {
                    return Err(ConfigError::StubSeed);
                }
            }
        }
        Ok(())
    }

    /// Applies the fields set in `overrides` on top of `self`.
    pub fn with_overrides(&self, overrides: &ConfigOverrides) -> RunConfig {
        let mut out = self.clone();
        macro_rules! apply {
            ($($field:ident),+) => {
                $(if let Some(v) = &overrides.$field { out.$field = v.clone(); })+
            };
        }
        apply!(
            model_name,
            temperature,
            link_temperature,
            max_depth,
            max_branch,
            max_links_per_node,
            api_endpoint,
            api_key_ref,
            merge_threshold,
            retry_limit,
            mode,
            backend
        );
        if overrides.random_seed.is_some() {
            out.random_seed = overrides.random_seed;
        }
        out
    }
}

/// Partial [`RunConfig`]; unset fields keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub model_name: Option<String>,
    pub temperature: Option<f64>,
    pub link_temperature: Option<f64>,
    pub max_depth: Option<u32>,
    pub max_branch: Option<u32>,
    pub max_links_per_node: Option<u32>,
    pub api_endpoint: Option<String>,
    pub api_key_ref: Option<String>,
    pub merge_threshold: Option<f64>,
    pub retry_limit: Option<u32>,
    pub mode: Option<Mode>,
    pub backend: Option<BackendKind>,
    pub random_seed: Option<u64>,
}
