//! User simulation: personas, the hand-authored bootstrap user, the learned
//! intent model and utterance generation.

mod behavioral;
mod dataset;
mod model;
mod profile;
mod simulated;
mod utterance;

pub use behavioral::{behavioral_intent, BehavioralUser, DeterministicUser, ScriptedUser};
pub use dataset::{
    episode_pairs, extract_sequences, intent_sequence, IntentContext, IntentDataset, IntentPair,
    NextIntent, CONTEXT_CARDINALITIES, NEXT_INTENT_COUNT,
};
pub use model::{
    sample_intent, train_intent_model, IntentModel, IntentModelConfig, TrainedIntentModel,
    INTENT_MODEL_FORMAT_VERSION,
};
pub use profile::{Style, UserProfile};
pub use simulated::{context_after, fill_slot, IntentModelUser};
pub use utterance::{fill_template, sample_utterance, UtteranceBank, ORDINAL_WORDS};
