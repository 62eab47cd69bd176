//! The learned user simulator: intent model plus slot filling and
//! template-based utterances.

use rand::Rng;

use super::dataset::{IntentContext, NextIntent};
use super::model::IntentModel;
use super::utterance::{sample_utterance, UtteranceBank};
use crate::catalog::Catalog;
use crate::dialog::{AgentMove, DialogContext, OfferedItem, Slot, UserIntent, UserModel, UserTurn, MAX_TURN_DEPTH};
use crate::SimRng;

/// Context the simulator conditions on right after `agent_move`.
pub fn context_after(ctx: &DialogContext, agent_move: &AgentMove) -> IntentContext {
    IntentContext {
        prev_user_intent: Some(ctx.state.user_intent),
        prev_agent_action: Some(agent_move.action),
        prev_prompt: Some(agent_move.prompt_id),
        first_time: ctx.state.first_time_user,
        has_selected: ctx.has_selected,
        turn_count: (ctx.state.turn_depth + 1).min(MAX_TURN_DEPTH),
    }
}

#[derive(Debug, Clone)]
pub struct IntentModelUser {
    pub model: IntentModel,
    pub bank: UtteranceBank,
}

impl IntentModelUser {
    pub fn new(model: IntentModel, bank: UtteranceBank) -> Self {
        Self { model, bank }
    }

    /// Draws a mid-dialog intent. `start` cannot recur; end-of-dialog
    /// while the agent still holds the floor means the user went silent.
    fn draw_intent(&self, ictx: &IntentContext, rng: &mut impl Rng) -> UserIntent {
        let mut p = self.model.probabilities(ictx);
        p[UserIntent::Start.index()] = 0.0;
        let total: f64 = p.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = p.len() - 1;
        for (i, &pi) in p.iter().enumerate() {
            if pi > 0.0 && u < pi {
                pick = i;
                break;
            }
            u -= pi;
        }
        match NextIntent::from_index(pick) {
            Some(NextIntent::Intent(i)) => i,
            _ => UserIntent::End,
        }
    }
}

/// Fills a slot for a sampled slotted intent: uniform among what is on
/// offer, falling back to the catalog at large.
pub fn fill_slot(intent: UserIntent, ctx: &DialogContext, catalog: &Catalog, rng: &mut impl Rng) -> Option<UserTurn> {
    let offered = &ctx.offered_items;
    let pick_root = |rng: &mut dyn rand::RngCore| {
        let roots = catalog.root_category_ids();
        (!roots.is_empty()).then(|| roots[rng.random_range(0..roots.len())].clone())
    };
    let slot = match intent {
        UserIntent::SelectOption => {
            if offered.is_empty() {
                return None;
            }
            Slot::Ordinal(rng.random_range(0..offered.len()))
        }
        UserIntent::CategoryName => {
            let cats: Vec<&str> = offered
                .iter()
                .filter_map(|o| match o {
                    OfferedItem::Category(id) => Some(id.as_str()),
                    _ => None,
                })
                .collect();
            match cats.as_slice() {
                [] => Slot::Category(pick_root(rng)?),
                c => Slot::Category(c[rng.random_range(0..c.len())].to_string()),
            }
        }
        UserIntent::SkillName => match ctx.proposed_skill.clone() {
            Some(id) => Slot::Skill(id),
            None => {
                let root = pick_root(rng)?;
                let top = catalog.top_skills(Some(&root), 1, &Default::default()).ok()?;
                Slot::Skill(top.first()?.id.clone())
            }
        },
        _ => return Some(UserTurn::new(intent)),
    };
    Some(UserTurn::with_slot(intent, slot))
}

impl UserModel for IntentModelUser {
    fn respond(&self, ctx: &DialogContext, agent_move: &AgentMove, catalog: &Catalog, rng: &mut SimRng) -> UserTurn {
        let ictx = context_after(ctx, agent_move);
        let intent = self.draw_intent(&ictx, rng);
        // A slot that cannot be filled (nothing to select) reads as noise.
        let mut turn = fill_slot(intent, ctx, catalog, rng).unwrap_or_else(|| UserTurn::new(UserIntent::OutOfDomain));
        turn.utterance = sample_utterance(turn.intent, turn.slot.as_ref(), &self.bank, catalog, rng).unwrap_or_default();
        turn
    }
}
