//! Turning dialog logs into (context, next intent) training pairs.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dialog::{AgentAction, PromptId, UserIntent, MAX_TURN_DEPTH, PROMPT_COUNT};
use crate::error::{Error, Result};
use crate::logs::EpisodeLog;
use crate::SimRng;

/// Number of intent-model output classes: every user intent plus
/// end-of-dialog.
pub const NEXT_INTENT_COUNT: usize = UserIntent::COUNT + 1;

/// Cardinalities of the context features, each with one extra slot for
/// "none": previous intent, previous action, previous prompt, first-time
/// flag, has-selected flag, turn count.
pub const CONTEXT_CARDINALITIES: [usize; 6] = [
    UserIntent::COUNT + 1,
    AgentAction::COUNT + 1,
    PROMPT_COUNT + 1,
    2,
    2,
    MAX_TURN_DEPTH as usize,
];

/// What the simulator conditions on when predicting the next user intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntentContext {
    pub prev_user_intent: Option<UserIntent>,
    pub prev_agent_action: Option<AgentAction>,
    pub prev_prompt: Option<PromptId>,
    pub first_time: bool,
    pub has_selected: bool,
    /// 1-based index of the turn being predicted.
    pub turn_count: u32,
}

impl IntentContext {
    pub fn opening(first_time: bool) -> Self {
        Self {
            prev_user_intent: None,
            prev_agent_action: None,
            prev_prompt: None,
            first_time,
            has_selected: false,
            turn_count: 1,
        }
    }

    /// Categorical indices; 0 stands for "none" where applicable.
    pub fn indices(&self) -> [u16; 6] {
        let opt = |v: Option<usize>| v.map_or(0, |i| i as u16 + 1);
        [
            opt(self.prev_user_intent.map(|i| i.index())),
            opt(self.prev_agent_action.map(|a| a.index())),
            opt(self.prev_prompt.map(|p| p.0 as usize)),
            self.first_time as u16,
            self.has_selected as u16,
            (self.turn_count.clamp(1, MAX_TURN_DEPTH) - 1) as u16,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NextIntent {
    Intent(UserIntent),
    /// The dialog ended without a user turn (the agent launched or quit).
    EndOfDialog,
}

impl NextIntent {
    pub fn index(self) -> usize {
        match self {
            NextIntent::Intent(i) => i.index(),
            NextIntent::EndOfDialog => UserIntent::COUNT,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        if i == UserIntent::COUNT {
            Some(NextIntent::EndOfDialog)
        } else {
            UserIntent::from_index(i).map(NextIntent::Intent)
        }
    }
}

impl fmt::Display for NextIntent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NextIntent::Intent(i) => i.fmt(f),
            NextIntent::EndOfDialog => f.write_str("end-of-dialog"),
        }
    }
}

pub type IntentPair = (IntentContext, NextIntent);

/// Pairs of one episode, in turn order.
pub fn episode_pairs(episode: &EpisodeLog) -> Vec<IntentPair> {
    let mut pairs = Vec::with_capacity(episode.turns.len() + 1);
    let mut ctx = IntentContext::opening(episode.first_time);
    for turn in &episode.turns {
        pairs.push((ctx, NextIntent::Intent(turn.user_intent)));
        ctx = IntentContext {
            prev_user_intent: Some(turn.user_intent),
            prev_agent_action: Some(turn.agent_action),
            prev_prompt: Some(turn.prompt_id),
            first_time: episode.first_time,
            has_selected: ctx.has_selected || turn.user_intent.is_slotted(),
            turn_count: (ctx.turn_count + 1).min(MAX_TURN_DEPTH),
        };
    }
    if let Some(last) = episode.turns.last() {
        if !last.user_intent.is_terminal() {
            pairs.push((ctx, NextIntent::EndOfDialog));
        }
    }
    pairs
}

/// The intent sequence of an episode, including the closing marker.
pub fn intent_sequence(episode: &EpisodeLog) -> Vec<NextIntent> {
    episode_pairs(episode).into_iter().map(|(_, n)| n).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntentDataset {
    pub train: Vec<IntentPair>,
    pub held_out: Vec<IntentPair>,
}

impl IntentDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.held_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits whole episodes so no dialog contributes to both sides.
pub fn extract_sequences(logs: &[EpisodeLog], held_out_fraction: f64, seed: u64) -> Result<IntentDataset> {
    if !(0.0..1.0).contains(&held_out_fraction) {
        return Err(Error::Config(format!(
            "held-out fraction {held_out_fraction} outside [0, 1)"
        )));
    }
    for ep in logs {
        if let Some(w) = ep.turns.windows(2).find(|w| w[1].turn_index <= w[0].turn_index) {
            return Err(Error::parse(
                "dialog log",
                format!(
                    "session {}: turn {} follows turn {}",
                    ep.session_id, w[1].turn_index, w[0].turn_index
                ),
            ));
        }
    }
    let mut order: Vec<usize> = (0..logs.len()).collect();
    order.shuffle(&mut SimRng::seed_from_u64(seed));
    let n_held = (logs.len() as f64 * held_out_fraction).round() as usize;
    let mut data = IntentDataset::default();
    for (rank, &i) in order.iter().enumerate() {
        let pairs = episode_pairs(&logs[i]);
        if rank < n_held {
            data.held_out.extend(pairs);
        } else {
            data.train.extend(pairs);
        }
    }
    Ok(data)
}
