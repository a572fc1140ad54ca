use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};

pub const ENV_API_KEY: &str = "SPAGE_LLM_API_KEY";
pub const ENV_BASE_URL: &str = "SPAGE_LLM_BASE_URL";
pub const ENV_MODEL: &str = "SPAGE_LLM_MODEL";

/// Decoding and prompting parameters shared by every LLM role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    pub demo_count: usize,
    pub k_rows: NonZeroUsize,
    /// Prompts estimated above this many tokens are refused before sending.
    pub max_prompt_tokens: usize,
    /// Requests one backend keeps in flight at once.
    pub max_concurrent_requests: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            model_name: "default".into(),
            temperature: 0.1,
            top_p: 0.95,
            max_output_tokens: 400,
            demo_count: 3,
            k_rows: NonZeroUsize::new(3).unwrap(),
            max_prompt_tokens: 16_000,
            max_concurrent_requests: 4,
        }
    }
}

impl LlmConfig {
    /// Applies `SPAGE_LLM_MODEL` when set.
    pub fn with_env_model(mut self) -> Self {
        if let Ok(model) = std::env::var(ENV_MODEL) {
            if !model.trim().is_empty() {
                self.model_name = model;
            }
        }
        self
    }
}

/// Rough token count: one token per four bytes, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = LlmConfig::default();
        assert_eq!(
            (c.temperature, c.top_p, c.max_output_tokens),
            (0.1, 0.95, 400)
        );
        assert_eq!((c.demo_count, c.k_rows.get()), (3, 3));
        assert_eq!(c.max_concurrent_requests, 4);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let c: LlmConfig = serde_json::from_str(r#"{"temperature": 0.0, "k_rows": 5}"#).unwrap();
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.k_rows.get(), 5);
        assert_eq!(c.top_p, 0.95);
        assert!(serde_json::from_str::<LlmConfig>(r#"{"k_rows": 0}"#).is_err());
    }
}
