//! Hand-authored persona-driven user used to bootstrap dialog logs.
//!
//! The user has hidden preferences (a few root categories) and reacts to
//! offers accordingly. First-time users mostly browse: they rarely know
//! category names and are wary of a skill pushed at them before they have
//! picked a category. Returning users name the category they want as soon
//! as they are given the chance.

use rand::Rng;

use super::profile::{Style, UserProfile};
use super::utterance::{sample_utterance, UtteranceBank};
use crate::catalog::Catalog;
use crate::dialog::{
    AgentAction, AgentMove, DialogContext, OfferedItem, Slot, UserIntent, UserModel, UserTurn,
};
use crate::SimRng;

/// Probability of an utterance the NLU will not understand.
const NOISE: f64 = 0.03;
/// Per-turn probability that a first-time user silently walks away.
const SILENT_EXIT: f64 = 0.02;

#[derive(Debug, Clone, Default)]
pub struct BehavioralUser {
    bank: UtteranceBank,
}

impl BehavioralUser {
    pub fn new(bank: UtteranceBank) -> Self {
        Self { bank }
    }
}

fn rejections(ctx: &DialogContext) -> u32 {
    ctx.episode_log
        .iter()
        .filter(|r| r.user_intent.is_rejection())
        .count() as u32
}

fn preferred_category(profile: &UserProfile, rng: &mut impl Rng) -> Option<Slot> {
    let prefs = &profile.preferred_categories;
    if prefs.is_empty() {
        return None;
    }
    Some(Slot::Category(prefs[rng.random_range(0..prefs.len())].clone()))
}

fn reject(
    profile: &UserProfile,
    ctx: &DialogContext,
    action: AgentAction,
    rng: &mut impl Rng,
) -> UserTurn {
    if rejections(ctx) >= profile.patience {
        return UserTurn::new(UserIntent::Stop);
    }
    let named = || UserTurn::new(UserIntent::OtherCategory);
    match action {
        AgentAction::OfferOneSkillOrCategory => {
            if !profile.first_time {
                if let Some(slot) = preferred_category(profile, rng) {
                    return UserTurn::with_slot(UserIntent::CategoryName, slot);
                }
            }
            named()
        }
        a if a.offers_skill() => {
            if !profile.first_time && rng.random_bool(0.5) {
                if let Some(slot) = preferred_category(profile, rng) {
                    return UserTurn::with_slot(UserIntent::CategoryName, slot);
                }
            }
            if rng.random_bool(0.3) {
                UserTurn::new(UserIntent::OtherSkill)
            } else {
                UserTurn::new(UserIntent::No)
            }
        }
        _ => {
            if !profile.first_time && rng.random_bool(0.6) {
                if let Some(slot) = preferred_category(profile, rng) {
                    return UserTurn::with_slot(UserIntent::CategoryName, slot);
                }
            }
            if profile.first_time && rng.random_bool(0.3) {
                UserTurn::new(UserIntent::No)
            } else {
                UserTurn::new(UserIntent::OtherCategory)
            }
        }
    }
}

/// Reaction to a single proposed skill.
fn react_to_skill(
    profile: &UserProfile,
    ctx: &DialogContext,
    catalog: &Catalog,
    skill: &str,
    action: AgentAction,
    rng: &mut impl Rng,
) -> UserTurn {
    if !profile.likes_skill(catalog, skill) {
        return reject(profile, ctx, action, rng);
    }
    let asked = matches!(
        ctx.state.user_intent,
        UserIntent::GetRating | UserIntent::GetDetails
    );
    if profile.style == Style::Verbose && !asked && rng.random_bool(0.5) {
        return if rng.random_bool(0.7) {
            UserTurn::new(UserIntent::GetRating)
        } else {
            UserTurn::new(UserIntent::GetDetails)
        };
    }
    let mut accept = profile.accept_probability;
    if profile.first_time && ctx.state.target_category.is_none() {
        accept *= 0.5;
    }
    if rng.random_bool(accept) {
        UserTurn::new(UserIntent::Yes)
    } else {
        reject(profile, ctx, action, rng)
    }
}

fn react_to_categories(
    profile: &UserProfile,
    ctx: &DialogContext,
    catalog: &Catalog,
    offered: &[OfferedItem],
    action: AgentAction,
    rng: &mut impl Rng,
) -> UserTurn {
    let liked: Vec<(usize, &str)> = offered
        .iter()
        .enumerate()
        .filter_map(|(i, item)| match item {
            OfferedItem::Category(id) if profile.likes_category(catalog, id) => Some((i, id.as_str())),
            _ => None,
        })
        .collect();
    let Some(&(ordinal, id)) = liked.first() else {
        return reject(profile, ctx, action, rng);
    };
    if offered.len() == 1 && rng.random_bool(0.8) {
        return UserTurn::new(UserIntent::Yes);
    }
    if profile.style == Style::Brief && offered.len() > 1 && rng.random_bool(0.3) {
        return UserTurn::with_slot(UserIntent::SelectOption, Slot::Ordinal(ordinal));
    }
    UserTurn::with_slot(UserIntent::CategoryName, Slot::Category(id.to_string()))
}

/// Chooses the next intent (and slot) for a persona-driven user.
pub fn behavioral_intent(
    profile: &UserProfile,
    agent_move: &AgentMove,
    ctx: &DialogContext,
    catalog: &Catalog,
    rng: &mut impl Rng,
) -> UserTurn {
    if rng.random_bool(NOISE) {
        return UserTurn::new(UserIntent::OutOfDomain);
    }
    if profile.first_time && ctx.state.turn_depth > 1 && rng.random_bool(SILENT_EXIT) {
        return UserTurn::new(UserIntent::End);
    }
    if profile.first_time && ctx.state.turn_depth == 1 && rng.random_bool(0.05) {
        return UserTurn::new(UserIntent::Help);
    }
    // Execute replies (info, repeats, help) re-present the standing offer.
    let offered: &[OfferedItem] = if agent_move.action == AgentAction::Execute {
        &ctx.offered_items
    } else {
        &agent_move.offered
    };
    let action = if agent_move.action == AgentAction::Execute {
        ctx.episode_log
            .iter()
            .rev()
            .map(|r| r.agent_action)
            .find(|a| a.is_offer())
            .unwrap_or(AgentAction::OfferOneSkill)
    } else {
        agent_move.action
    };
    match offered {
        [OfferedItem::Skill(id)] => react_to_skill(profile, ctx, catalog, id, action, rng),
        items if !items.is_empty() => react_to_categories(profile, ctx, catalog, items, action, rng),
        _ => match preferred_category(profile, rng) {
            Some(slot) if !profile.first_time => UserTurn::with_slot(UserIntent::CategoryName, slot),
            _ => UserTurn::new(UserIntent::OtherCategory),
        },
    }
}

impl UserModel for BehavioralUser {
    fn respond(
        &self,
        ctx: &DialogContext,
        agent_move: &AgentMove,
        catalog: &Catalog,
        rng: &mut SimRng,
    ) -> UserTurn {
        let mut turn = behavioral_intent(&ctx.profile, agent_move, ctx, catalog, rng);
        turn.utterance =
            sample_utterance(turn.intent, turn.slot.as_ref(), &self.bank, catalog, rng)
                .unwrap_or_default();
        turn
    }
}

/// Replays a fixed list of turns, then stops.
#[derive(Debug, Clone, Default)]
pub struct ScriptedUser {
    pub turns: Vec<UserTurn>,
}

impl ScriptedUser {
    pub fn new(turns: Vec<UserTurn>) -> Self {
        Self { turns }
    }
}

impl UserModel for ScriptedUser {
    fn respond(&self, ctx: &DialogContext, _: &AgentMove, _: &Catalog, _: &mut SimRng) -> UserTurn {
        // Record 0 answers the opening turn, which is not part of the script.
        let answered = ctx.episode_log.len();
        self.turns
            .get(answered.saturating_sub(1))
            .cloned()
            .unwrap_or_else(|| UserTurn::new(UserIntent::Stop))
    }
}

/// Deterministic user: selects the first offered category, accepts every
/// skill offer, and asks for help after anything else.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicUser;

impl UserModel for DeterministicUser {
    fn respond(&self, ctx: &DialogContext, m: &AgentMove, _: &Catalog, _: &mut SimRng) -> UserTurn {
        match (m.action, m.offered.first()) {
            (a, Some(OfferedItem::Skill(_))) if a.offers_skill() => UserTurn::new(UserIntent::Yes),
            (a, Some(OfferedItem::Category(id))) if a.category_count().is_some() => {
                UserTurn::with_slot(UserIntent::CategoryName, Slot::Category(id.clone()))
            }
            _ if ctx.state.user_intent == UserIntent::Help => UserTurn::new(UserIntent::Stop),
            _ => UserTurn::new(UserIntent::Help),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::catalog::generate_synthetic_catalog;
    use crate::dialog::{DialogEnv, PromptCatalog};
    use rand::SeedableRng;

    fn env() -> DialogEnv {
        DialogEnv::new(
            Arc::new(generate_synthetic_catalog(7, 400, 10, 30).unwrap()),
            Arc::new(PromptCatalog::default()),
        )
    }

    #[test]
    fn accepts_preferred_skill_when_certain() {
        let env = env();
        let mut rng = SimRng::seed_from_u64(0);
        let mut yes = 0;
        for _ in 0..200 {
            let skill = env.catalog().top_skills(None, 1, &Default::default()).unwrap()[0].clone();
            let mut profile = UserProfile::new(false);
            profile.accept_probability = 1.0;
            profile.preferred_categories = vec![{
                let c = &skill.category_ids[0];
                let mut id = c.clone();
                while let Some(p) = env.catalog().category(&id).unwrap().parent_id.clone() {
                    id = p;
                }
                id
            }];
            let mut ctx = env.reset(profile.clone());
            let m = env.apply_action(&mut ctx, AgentAction::OfferOneSkill, &mut rng).unwrap();
            let turn = behavioral_intent(&profile, &m, &ctx, env.catalog(), &mut rng);
            if turn.intent == UserIntent::Yes {
                yes += 1;
            } else {
                assert_eq!(turn.intent, UserIntent::OutOfDomain);
            }
        }
        assert!(yes > 180);
    }

    #[test]
    fn impatient_user_stops_after_two_rejections() {
        let env = env();
        let mut profile = UserProfile::new(false);
        profile.patience = 1;
        profile.preferred_categories = vec!["no-such-root".into()];
        let scripted = ScriptedUser::new(vec![UserTurn::new(UserIntent::No)]);
        let mut stops = 0;
        let n = 1000;
        for seed in 0..n {
            let mut rng = SimRng::seed_from_u64(seed);
            let mut ctx = env.reset(profile.clone());
            env.step(&mut ctx, AgentAction::OfferOneSkill, &scripted, &mut rng)
                .unwrap();
            let m = env.apply_action(&mut ctx, AgentAction::OfferOneSkill, &mut rng).unwrap();
            let turn = behavioral_intent(&profile, &m, &ctx, env.catalog(), &mut rng);
            match turn.intent {
                UserIntent::Stop => stops += 1,
                other => assert_eq!(other, UserIntent::OutOfDomain),
            }
        }
        assert!(stops as f64 >= n as f64 * (1.0 - 2.0 * NOISE), "{stops}");
    }

    #[test]
    fn verbose_users_ask_for_ratings_more() {
        let env = env();
        let catalog = env.catalog();
        let mut counts = [0usize; 2];
        for (i, style) in [Style::Brief, Style::Verbose].into_iter().enumerate() {
            let mut rng = SimRng::seed_from_u64(42);
            for _ in 0..10_000 {
                let mut profile = UserProfile::sample(catalog, 0.6, &mut rng);
                profile.style = style;
                let mut ctx = env.reset(profile.clone());
                let action = if rng.random_bool(0.5) {
                    AgentAction::OfferOneSkill
                } else {
                    AgentAction::OfferFiveCategories
                };
                let m = env.apply_action(&mut ctx, action, &mut rng).unwrap();
                let t = behavioral_intent(&profile, &m, &ctx, catalog, &mut rng);
                counts[i] += (t.intent == UserIntent::GetRating) as usize;
            }
        }
        assert!(counts[1] > counts[0], "{counts:?}");
    }
}
