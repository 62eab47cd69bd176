//! Hand-written dialog policies.

use rand::Rng;

use super::env::{DialogContext, DialogEnv};
use super::types::{AgentAction, UserIntent};
use crate::SimRng;

/// Misunderstandings in a row after which the rule agent gives up.
pub const MAX_MISUNDERSTANDINGS: u32 = 3;

/// Skill offers the popularity baseline makes before ending the session.
pub const BASELINE_MAX_OFFERS: usize = 5;

pub trait DialogPolicy: Send + Sync {
    fn act(&self, env: &DialogEnv, ctx: &DialogContext, rng: &mut SimRng) -> AgentAction;
}

/// Shared front half of the rule-based agents: misunderstanding
/// escalation, info requests and launching an accepted proposal.
fn rule_prelude(env: &DialogEnv, ctx: &DialogContext) -> Option<AgentAction> {
    let intent = ctx.state.user_intent;
    if intent == UserIntent::OutOfDomain && ctx.misunderstanding_count >= MAX_MISUNDERSTANDINGS {
        return Some(AgentAction::EndSession);
    }
    if intent.needs_execute() {
        return Some(AgentAction::Execute);
    }
    if env.action_mask(ctx)[AgentAction::LaunchSkill.index()] {
        return Some(AgentAction::LaunchSkill);
    }
    None
}

/// The rule-based agent: deterministic handling of execute/launch cases,
/// uniform choice among the valid offers otherwise.
pub fn rule_policy(env: &DialogEnv, ctx: &DialogContext, rng: &mut impl Rng) -> AgentAction {
    if let Some(action) = rule_prelude(env, ctx) {
        return action;
    }
    let mask = env.action_mask(ctx);
    let offers: Vec<AgentAction> = AgentAction::OFFERS
        .into_iter()
        .filter(|a| mask[a.index()])
        .collect();
    if offers.is_empty() {
        return AgentAction::EndSession;
    }
    offers[rng.random_range(0..offers.len())]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RulePolicy;

impl DialogPolicy for RulePolicy {
    fn act(&self, env: &DialogEnv, ctx: &DialogContext, rng: &mut SimRng) -> AgentAction {
        rule_policy(env, ctx, rng)
    }
}

/// Recommends the most popular skills one at a time, at most five.
#[derive(Debug, Clone, Copy, Default)]
pub struct PopularityBaseline;

impl DialogPolicy for PopularityBaseline {
    fn act(&self, env: &DialogEnv, ctx: &DialogContext, _rng: &mut SimRng) -> AgentAction {
        if let Some(action) = rule_prelude(env, ctx) {
            return action;
        }
        let offers_made = ctx
            .episode_log
            .iter()
            .filter(|r| r.agent_action == AgentAction::OfferOneSkill)
            .count();
        if offers_made < BASELINE_MAX_OFFERS && env.action_mask(ctx)[AgentAction::OfferOneSkill.index()] {
            AgentAction::OfferOneSkill
        } else {
            AgentAction::EndSession
        }
    }
}

/// Always ends the session; useful as a floor in evaluations.
#[derive(Debug, Clone, Copy, Default)]
pub struct EndSessionPolicy;

impl DialogPolicy for EndSessionPolicy {
    fn act(&self, _: &DialogEnv, _: &DialogContext, _: &mut SimRng) -> AgentAction {
        AgentAction::EndSession
    }
}
