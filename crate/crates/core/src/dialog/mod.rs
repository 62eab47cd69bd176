//! Dialog MDP over the skill catalog.

mod encode;
mod env;
mod policy;
mod prompts;
mod types;

pub use encode::{EncoderMode, Features, StateEncoder, FEATURE_COUNT, FEATURE_NAMES};
pub use env::{
    category_label, join_options, ActionMask, AgentMove, DialogContext, DialogEnv, OfferedItem,
    StepOutcome, TurnRecord, UserModel, ROOT_SCOPE,
};
pub use policy::{
    rule_policy, DialogPolicy, EndSessionPolicy, PopularityBaseline, RulePolicy,
    BASELINE_MAX_OFFERS, MAX_MISUNDERSTANDINGS,
};
pub use prompts::{
    audience_tag, metadata_phrase, render_prompt, render_template, PromptCatalog, PromptEntry,
    PROMPT_COUNT,
};
pub use types::{
    AgentAction, DialogState, MetadataType, PromptId, Slot, UserIntent, UserTurn, MAX_TURN_DEPTH,
};
