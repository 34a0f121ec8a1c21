//! The pairwise preference oracle `F(x, x_i)`.

pub mod backend;
pub mod cache;
pub mod compare;
pub mod http;
pub mod parse;
pub mod simulated;
pub mod template;

pub use backend::{
    estimate_tokens, BackendConfig, GenerationRequest, Generator, HttpConfig, Purpose, ReplayBackend,
    ReplayConfig, SimulatedConfig, DEFAULT_PARALLELISM,
};
pub use cache::{comparison_key, prompt_digest, CacheEntry, ComparisonCache};
pub use compare::{worker_pool, ComparisonOutcome, OracleStats, PreferenceOracle};
pub use http::HttpBackend;
pub use parse::{parse_preference, Preference};
pub use simulated::{extract_latents, simulated_compare, SimulatedBackend};
pub use template::{PromptTemplate, BUILTIN_TEMPLATES};
