//! Categorical feature extraction for the learner.

use serde::{Deserialize, Serialize};

use super::prompts::PROMPT_COUNT;
use super::types::{AgentAction, DialogState, MetadataType, UserIntent, MAX_TURN_DEPTH};
use crate::catalog::Catalog;

pub const FEATURE_COUNT: usize = 7;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "user-intent",
    "prev-agent-action",
    "prev-prompt",
    "prev-metadata",
    "target-category",
    "first-time-user",
    "turn-depth",
];

/// Value index per feature; `None` for absent values (no previous action,
/// no selected category), which encode as all zeros.
pub type Features = [Option<u16>; FEATURE_COUNT];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderMode {
    /// One learned scalar per feature value; input width 7.
    Embedding,
    /// Concatenated one-hot blocks.
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEncoder {
    pub cardinalities: [usize; FEATURE_COUNT],
}

impl StateEncoder {
    pub fn new(category_count: usize) -> Self {
        Self {
            cardinalities: [
                UserIntent::COUNT,
                AgentAction::COUNT,
                PROMPT_COUNT,
                MetadataType::COUNT,
                category_count,
                2,
                MAX_TURN_DEPTH as usize,
            ],
        }
    }

    pub fn for_catalog(catalog: &Catalog) -> Self {
        Self::new(catalog.category_count())
    }

    pub fn one_hot_dim(&self) -> usize {
        self.cardinalities.iter().sum()
    }

    pub fn input_dim(&self, mode: EncoderMode) -> usize {
        match mode {
            EncoderMode::Embedding => FEATURE_COUNT,
            EncoderMode::OneHot => self.one_hot_dim(),
        }
    }

    pub fn features(&self, state: &DialogState, catalog: &Catalog) -> Features {
        let depth = state.turn_depth.clamp(1, MAX_TURN_DEPTH) - 1;
        [
            Some(state.user_intent.index() as u16),
            state.prev_agent_action.map(|a| a.index() as u16),
            state.prev_prompt.map(|p| p.0),
            Some(state.prev_metadata.index() as u16),
            state
                .target_category
                .as_deref()
                .and_then(|c| catalog.category_index(c))
                .map(|i| i as u16),
            Some(state.first_time_user as u16),
            Some(depth as u16),
        ]
    }

    pub fn one_hot(&self, features: &Features) -> Vec<f64> {
        let mut out = vec![0.0; self.one_hot_dim()];
        let mut offset = 0;
        for (value, card) in features.iter().zip(self.cardinalities) {
            if let Some(v) = value {
                out[offset + *v as usize] = 1.0;
            }
            offset += card;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::PromptId;

    #[test]
    fn one_hot_width_matches_table_cardinalities() {
        let enc = StateEncoder::new(191);
        let oracle: usize = UserIntent::ALL.len()
            + AgentAction::ALL.len()
            + PROMPT_COUNT
            + MetadataType::ALL.len()
            + 191
            + 2
            + MAX_TURN_DEPTH as usize;
        assert_eq!(oracle, 389);
        assert_eq!(enc.one_hot_dim(), oracle);
        assert_eq!(enc.input_dim(EncoderMode::Embedding), 7);
    }

    #[test]
    fn fully_specified_state_has_seven_ones() {
        let catalog = crate::catalog::generate_synthetic_catalog(7, 1903, 48, 191).unwrap();
        let enc = StateEncoder::for_catalog(&catalog);
        let state = DialogState {
            user_intent: UserIntent::Yes,
            prev_agent_action: Some(AgentAction::OfferOneSkill),
            prev_prompt: Some(PromptId(55)),
            prev_metadata: MetadataType::RatingReview,
            target_category: catalog.root_category_ids().first().cloned(),
            first_time_user: true,
            turn_depth: 110,
        };
        let v = enc.one_hot(&enc.features(&state, &catalog));
        assert_eq!(v.len(), 389);
        assert_eq!(v.iter().filter(|x| **x == 1.0).count(), 7);
        assert_eq!(v.iter().sum::<f64>(), 7.0);
        assert_eq!(v, enc.one_hot(&enc.features(&state.clone(), &catalog)));

        let initial = DialogState::initial(false);
        let v = enc.one_hot(&enc.features(&initial, &catalog));
        // no previous action, prompt, or category yet
        assert_eq!(v.iter().sum::<f64>(), 4.0);
    }
}
