//! The completion contract every backend implements.

use serde::Serialize;
use thiserror::Error;

use crate::config::{estimate_tokens, LlmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    Planner,
    StepSql,
    Summary,
}

/// One text-in, text-out completion call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub role: Role,
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    /// JSON schema the answer should follow, for backends that can enforce it.
    pub json_schema: Option<serde_json::Value>,
}

impl CompletionRequest {
    /// Builds a request carrying the decoding parameters of `config`, after
    /// checking the prompt against the token budget.
    pub fn new(role: Role, prompt: String, config: &LlmConfig) -> Result<Self, LlmError> {
        let estimated = estimate_tokens(&prompt);
        if estimated > config.max_prompt_tokens {
            return Err(LlmError::BudgetExceeded {
                estimated,
                limit: config.max_prompt_tokens,
            });
        }
        Ok(CompletionRequest {
            role,
            model: config.model_name.clone(),
            prompt,
            temperature: config.temperature,
            top_p: config.top_p,
            max_output_tokens: config.max_output_tokens,
            json_schema: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("backend error: {0}")]
    Backend(String),
    #[error("prompt needs about {estimated} tokens, over the budget of {limit}")]
    BudgetExceeded { estimated: usize, limit: usize },
}

/// Backends may be called from several threads at once.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}
