//! Prompt-space games: reasoning policies that map prompts to action
//! distributions, equilibria over finite prompt sets, prompt geometry,
//! retrieval, and alignment loss evaluators.

pub mod distance;
pub mod external;
pub mod loss;
pub mod nash;
pub mod policy;
pub mod rag;
pub mod stub;

pub use distance::{prompt_distance, stability_profile, StabilityPair, StabilityProfile};
pub use external::{cache_key, ExternalPolicy, PolicyRequest, PolicyResponse, ResponseCache};
pub use loss::{dpo_loss, elbo_value};
pub use nash::{
    llm_nash_equilibria, llm_stackelberg_solve, Deviation, LlmNashResult, LlmStackelbergResult, PromptSpaceGame,
};
pub use policy::{
    evaluate_all, policy_action_distribution, Backend, InfoContext, ReasoningPolicy, Role, Sampling, Slot,
    StructuredPrompt, TablePolicy,
};
pub use rag::{rag_retrieve, RagDocument, RagStore, Retrieved};
pub use stub::{StubConfig, StubMode, StubServer};
