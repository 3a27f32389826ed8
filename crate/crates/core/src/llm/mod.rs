pub mod client;
pub mod extract;
pub mod operator;
pub mod prompt;

pub use client::{
    ClientError, HttpTransport, LlmClient, LlmClientConfig, LlmMode, LlmRequest, LlmResponse,
    ScriptedMock, SyntheticMock, Transcript, TranscriptStore, Transport,
};
pub use extract::{code_blocks, extract_first_block, split_variants, ExtractError};
pub use operator::{make_llm_edits, select_block, BlockTarget, LlmError};
pub use prompt::{build_prompt, PromptTemplate};
