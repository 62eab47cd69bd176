//! The dialog MDP: context bookkeeping, action masking, agent moves, user
//! observation and the composed `step`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prompts::{metadata_phrase, render_prompt, PromptCatalog};
use super::types::{
    AgentAction, DialogState, MetadataType, PromptId, Slot, UserIntent, UserTurn, MAX_TURN_DEPTH,
};
use crate::catalog::{skill_metadata, Bindings, Catalog, Category, Skill};
use crate::error::{Error, Result};
use crate::usersim::UserProfile;
use crate::SimRng;

/// Boolean validity per [`AgentAction`] index.
pub type ActionMask = [bool; AgentAction::COUNT];

/// Key used in `exhausted_skills` when no category is selected.
pub const ROOT_SCOPE: &str = "";

/// Categories offered by a go-back re-offer.
const GO_BACK_OFFER: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "kebab-case")]
pub enum OfferedItem {
    Skill(String),
    Category(String),
}

impl OfferedItem {
    pub fn id(&self) -> &str {
        match self {
            OfferedItem::Skill(id) | OfferedItem::Category(id) => id,
        }
    }
}

/// One user turn and the agent's response to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn_index: u32,
    pub user_utterance: String,
    pub user_intent: UserIntent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<Slot>,
    pub agent_action: AgentAction,
    pub prompt_id: PromptId,
    pub metadata_type: MetadataType,
    pub reward: f64,
}

/// What the agent did and said on one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMove {
    pub action: AgentAction,
    pub prompt_id: PromptId,
    pub metadata_type: MetadataType,
    /// Metadata bindings of the skill the move talks about.
    pub metadata: Bindings,
    pub offered: Vec<OfferedItem>,
    pub launched: Option<String>,
    pub terminal: bool,
    pub text: String,
}

/// Full session state. [`DialogState`] is the part the learner sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogContext {
    pub state: DialogState,
    pub profile: UserProfile,
    pub proposed_skill: Option<String>,
    pub offered_items: Vec<OfferedItem>,
    pub exhausted_skills: BTreeMap<String, BTreeSet<String>>,
    pub exhausted_categories: BTreeSet<String>,
    pub misunderstanding_count: u32,
    pub category_stack: Vec<String>,
    pub has_selected: bool,
    pub episode_log: Vec<TurnRecord>,
    /// The user turn the agent is about to answer.
    pub pending_turn: UserTurn,
    /// Text of the last non-execute agent move, for repeats.
    pub last_offer_text: String,
    pub launched: Option<String>,
    pub terminal: bool,
}

impl DialogContext {
    pub fn user_turns(&self) -> u32 {
        self.state.turn_depth
    }

    /// Episode return so far.
    pub fn total_reward(&self) -> f64 {
        self.episode_log.iter().map(|r| r.reward).sum()
    }

    fn skill_scope(&self) -> &str {
        self.state.target_category.as_deref().unwrap_or(ROOT_SCOPE)
    }

    fn scope_option(&self) -> Option<&str> {
        self.state.target_category.as_deref()
    }
}

/// Result of one `step`: what the learner sees plus the raw moves.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: DialogState,
    pub reward: f64,
    pub done: bool,
    pub agent_move: AgentMove,
    pub user_turn: Option<UserTurn>,
}

/// Produces the next user turn in reaction to an agent move.
pub trait UserModel {
    fn respond(
        &self,
        ctx: &DialogContext,
        agent_move: &AgentMove,
        catalog: &Catalog,
        rng: &mut SimRng,
    ) -> UserTurn;
}

impl<U: UserModel + ?Sized> UserModel for &U {
    fn respond(&self, ctx: &DialogContext, m: &AgentMove, c: &Catalog, rng: &mut SimRng) -> UserTurn {
        (**self).respond(ctx, m, c, rng)
    }
}

struct ExecuteReply {
    tag: &'static str,
    bindings: Bindings,
    metadata_type: MetadataType,
    skill_meta: Bindings,
    offered: Option<Vec<OfferedItem>>,
}

impl ExecuteReply {
    fn plain(tag: &'static str, bindings: Bindings) -> Self {
        Self {
            tag,
            bindings,
            metadata_type: MetadataType::NoMetadata,
            skill_meta: Bindings::new(),
            offered: None,
        }
    }
}

/// Catalog plus prompts; stateless apart from what lives in the context.
#[derive(Debug, Clone)]
pub struct DialogEnv {
    catalog: Arc<Catalog>,
    prompts: Arc<PromptCatalog>,
}

pub fn category_label(cat: &Category) -> String {
    let name = cat.name.to_lowercase();
    if name.ends_with("games") {
        name
    } else {
        format!("{name} games")
    }
}

/// "a", "a or b", "a, b, or c".
pub fn join_options(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} or {b}"),
        [init @ .., last] => format!("{}, or {last}", init.join(", ")),
    }
}

impl DialogEnv {
    pub fn new(catalog: Arc<Catalog>, prompts: Arc<PromptCatalog>) -> Self {
        Self { catalog, prompts }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn catalog_arc(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn prompts(&self) -> &PromptCatalog {
        &self.prompts
    }

    pub fn reset(&self, profile: UserProfile) -> DialogContext {
        DialogContext {
            state: DialogState::initial(profile.first_time),
            profile,
            proposed_skill: None,
            offered_items: Vec::new(),
            exhausted_skills: BTreeMap::new(),
            exhausted_categories: BTreeSet::new(),
            misunderstanding_count: 0,
            category_stack: Vec::new(),
            has_selected: false,
            episode_log: Vec::new(),
            pending_turn: UserTurn::new(UserIntent::Start),
            last_offer_text: String::new(),
            launched: None,
            terminal: false,
        }
    }

    /// Like [`reset`](Self::reset) but records the opening utterance.
    pub fn reset_with_utterance(&self, profile: UserProfile, utterance: &str) -> DialogContext {
        let mut ctx = self.reset(profile);
        ctx.pending_turn.utterance = utterance.to_string();
        ctx
    }

    fn remaining_skills(&self, ctx: &DialogContext) -> usize {
        let excl = ctx.exhausted_skills.get(ctx.skill_scope());
        let empty = BTreeSet::new();
        self.catalog
            .remaining_skills(ctx.scope_option(), excl.unwrap_or(&empty))
            .unwrap_or(0)
    }

    /// The level whose children a category offer lists: starts at the
    /// selected category (its parent for a leaf) and climbs until some
    /// unoffered category exists. Roots are the last resort.
    fn category_level(&self, ctx: &DialogContext) -> Option<Option<String>> {
        let mut level: Option<String> = match ctx.scope_option().and_then(|id| self.catalog.category(id)) {
            Some(cat) if !cat.is_leaf() => Some(cat.id.clone()),
            Some(cat) => cat.parent_id.clone(),
            None => None,
        };
        loop {
            let found = self
                .catalog
                .child_categories(level.as_deref(), 1, &ctx.exhausted_categories)
                .map(|v| !v.is_empty())
                .unwrap_or(false);
            if found {
                return Some(level);
            }
            level = self.catalog.category(&level?).and_then(|c| c.parent_id.clone());
        }
    }

    fn launch_allowed(&self, ctx: &DialogContext) -> bool {
        let Some(proposed) = &ctx.proposed_skill else {
            return false;
        };
        match ctx.state.user_intent {
            UserIntent::Yes => true,
            UserIntent::SelectOption | UserIntent::SkillName => {
                matches!(&ctx.pending_turn.slot, Some(Slot::Skill(id)) if id == proposed)
                    || matches!(ctx.pending_turn.slot, Some(Slot::Ordinal(i))
                        if matches!(ctx.offered_items.get(i), Some(OfferedItem::Skill(id)) if id == proposed))
            }
            _ => false,
        }
    }

    pub fn action_mask(&self, ctx: &DialogContext) -> ActionMask {
        let mut mask = [false; AgentAction::COUNT];
        if ctx.terminal {
            mask[AgentAction::EndSession.index()] = true;
            return mask;
        }
        let skills_left = self.remaining_skills(ctx) > 0;
        mask[AgentAction::OfferOneSkill.index()] = skills_left;
        mask[AgentAction::OfferOneSkillOrCategory.index()] = skills_left;
        let categories_left = self.category_level(ctx).is_some();
        for a in [
            AgentAction::OfferOneCategory,
            AgentAction::OfferThreeCategories,
            AgentAction::OfferFiveCategories,
        ] {
            mask[a.index()] = categories_left;
        }
        mask[AgentAction::LaunchSkill.index()] = self.launch_allowed(ctx);
        mask[AgentAction::EndSession.index()] = true;
        mask[AgentAction::Execute.index()] = ctx.state.user_intent.needs_execute();
        mask
    }

    fn choose_prompt(
        &self,
        action: AgentAction,
        first_time: bool,
        tag: &str,
        rng: &mut impl Rng,
    ) -> PromptId {
        let mut ids = self.prompts.candidates(action, first_time, tag);
        if ids.is_empty() {
            ids = self.prompts.candidates(action, first_time, "general");
        }
        assert!(!ids.is_empty(), "prompt catalog validated coverage for {action}/{tag}");
        ids[rng.random_range(0..ids.len())]
    }

    fn choose_metadata(&self, prompt: PromptId, skill: Option<&Skill>, rng: &mut impl Rng) -> MetadataType {
        let entry = self.prompts.get(prompt).expect("valid prompt id");
        let usable: Vec<MetadataType> = entry
            .allowed_metadata
            .iter()
            .copied()
            .filter(|m| match (m, skill) {
                (MetadataType::NoMetadata, _) => true,
                (_, None) => false,
                (MetadataType::Trending, Some(s)) => s.trending,
                (MetadataType::Recommended, Some(s)) => s.recommended,
                (MetadataType::ShortDescription, Some(s)) => !s.short_description.is_empty(),
                (MetadataType::RatingReview, Some(_)) => true,
            })
            .collect();
        if usable.is_empty() {
            return entry.allowed_metadata[0];
        }
        usable[rng.random_range(0..usable.len())]
    }

    fn opening_tag(&self, ctx: &DialogContext) -> &'static str {
        if ctx.state.prev_agent_action.is_none() {
            "opening"
        } else {
            "general"
        }
    }

    /// Performs the agent action, updating the context and logging the turn.
    pub fn apply_action(
        &self,
        ctx: &mut DialogContext,
        action: AgentAction,
        rng: &mut impl Rng,
    ) -> Result<AgentMove> {
        if ctx.terminal {
            return Err(Error::EpisodeTerminated);
        }
        if !self.action_mask(ctx)[action.index()] {
            return Err(Error::MaskedAction(action.as_str()));
        }
        let first_time = ctx.state.first_time_user;
        let mut bindings = Bindings::new();
        let mut offered = Vec::new();
        let mut launched = None;
        let mut terminal = false;
        let mut metadata_type = MetadataType::NoMetadata;
        let mut skill_meta = Bindings::new();

        let prompt_id = match action {
            AgentAction::OfferOneSkill | AgentAction::OfferOneSkillOrCategory => {
                let scope = ctx.skill_scope().to_string();
                let skill = {
                    let empty = BTreeSet::new();
                    let excl = ctx.exhausted_skills.get(&scope).unwrap_or(&empty);
                    self.catalog.top_skills(ctx.scope_option(), 1, excl)?[0].clone()
                };
                ctx.exhausted_skills
                    .entry(scope)
                    .or_default()
                    .insert(skill.id.clone());
                let prompt = self.choose_prompt(action, first_time, self.opening_tag(ctx), rng);
                metadata_type = self.choose_metadata(prompt, Some(&skill), rng);
                skill_meta = skill_metadata(&skill, metadata_type);
                bindings.insert("skill".into(), skill.name.clone());
                bindings.insert("metadata".into(), metadata_phrase(metadata_type, &skill_meta));
                ctx.proposed_skill = Some(skill.id.clone());
                offered.push(OfferedItem::Skill(skill.id));
                prompt
            }
            AgentAction::OfferOneCategory
            | AgentAction::OfferThreeCategories
            | AgentAction::OfferFiveCategories => {
                let k = action.category_count().expect("category offer");
                let level = self
                    .category_level(ctx)
                    .expect("mask guarantees a category level");
                let cats: Vec<Category> = self
                    .catalog
                    .child_categories(level.as_deref(), k, &ctx.exhausted_categories)?
                    .into_iter()
                    .cloned()
                    .collect();
                let tag = if ctx.state.prev_agent_action.is_none() {
                    "opening"
                } else if ctx.state.target_category.is_some() && self.remaining_skills(ctx) == 0 {
                    "exhausted"
                } else {
                    "general"
                };
                if let Some(target) = ctx.scope_option().and_then(|id| self.catalog.category(id)) {
                    bindings.insert("category".into(), target.name.to_lowercase());
                }
                bindings.insert(
                    "categories".into(),
                    join_options(&cats.iter().map(category_label).collect::<Vec<_>>()),
                );
                for c in &cats {
                    ctx.exhausted_categories.insert(c.id.clone());
                    offered.push(OfferedItem::Category(c.id.clone()));
                }
                ctx.proposed_skill = None;
                self.choose_prompt(action, first_time, tag, rng)
            }
            AgentAction::LaunchSkill => {
                let id = ctx.proposed_skill.clone().expect("mask guarantees a proposal");
                let skill = self
                    .catalog
                    .skill(&id)
                    .ok_or_else(|| Error::UnknownSkill(id.clone()))?;
                bindings.insert("skill".into(), skill.name.clone());
                launched = Some(id);
                terminal = true;
                self.choose_prompt(action, first_time, "general", rng)
            }
            AgentAction::EndSession => {
                terminal = true;
                let tag = if ctx.misunderstanding_count >= 3 {
                    "misunderstood"
                } else {
                    "goodbye"
                };
                self.choose_prompt(action, first_time, tag, rng)
            }
            AgentAction::Execute => {
                let reply = self.execute_handler(ctx)?;
                bindings = reply.bindings;
                metadata_type = reply.metadata_type;
                skill_meta = reply.skill_meta;
                if let Some(items) = reply.offered {
                    offered = items;
                }
                self.choose_prompt(action, first_time, reply.tag, rng)
            }
        };

        let text = render_prompt(&self.prompts, prompt_id, &bindings)?;
        if action != AgentAction::Execute {
            ctx.last_offer_text = text.clone();
        }
        if action.is_offer() || !offered.is_empty() {
            ctx.offered_items = offered.clone();
        }
        ctx.state.prev_agent_action = Some(action);
        ctx.state.prev_prompt = Some(prompt_id);
        ctx.state.prev_metadata = metadata_type;
        let reward = if terminal {
            ctx.terminal = true;
            ctx.launched = launched.clone();
            if launched.is_some() {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
        };
        self.log_turn(ctx, action, prompt_id, metadata_type, reward);
        Ok(AgentMove {
            action,
            prompt_id,
            metadata_type,
            metadata: skill_meta,
            offered,
            launched,
            terminal,
            text,
        })
    }

    fn log_turn(
        &self,
        ctx: &mut DialogContext,
        action: AgentAction,
        prompt_id: PromptId,
        metadata_type: MetadataType,
        reward: f64,
    ) {
        ctx.episode_log.push(TurnRecord {
            turn_index: ctx.state.turn_depth,
            user_utterance: ctx.pending_turn.utterance.clone(),
            user_intent: ctx.pending_turn.intent,
            slot: ctx.pending_turn.slot.clone(),
            agent_action: action,
            prompt_id,
            metadata_type,
            reward,
        });
    }

    /// Rule-based handling of info requests, repeats and misunderstandings.
    fn execute_handler(&self, ctx: &mut DialogContext) -> Result<ExecuteReply> {
        let mut b = Bindings::new();
        let focus_skill = match &ctx.pending_turn.slot {
            Some(Slot::Skill(id)) => Some(id.clone()),
            _ => ctx.proposed_skill.clone(),
        };
        let repeat_or = |ctx: &DialogContext, b: &mut Bindings| {
            if ctx.last_offer_text.is_empty() {
                "reprompt"
            } else {
                b.insert("previous".into(), ctx.last_offer_text.clone());
                "repeat"
            }
        };
        let out = match ctx.state.user_intent {
            UserIntent::GetRating | UserIntent::GetDetails => {
                let Some(skill) = focus_skill.as_deref().and_then(|id| self.catalog.skill(id)) else {
                    return Ok(ExecuteReply::plain("unknown-skill", b));
                };
                let (tag, md) = if ctx.state.user_intent == UserIntent::GetRating {
                    ("rating", MetadataType::RatingReview)
                } else {
                    ("details", MetadataType::ShortDescription)
                };
                let meta = skill_metadata(skill, md);
                b.extend(meta.clone());
                b.insert("skill".into(), skill.name.clone());
                return Ok(ExecuteReply {
                    tag,
                    bindings: b,
                    metadata_type: md,
                    skill_meta: meta,
                    offered: None,
                });
            }
            UserIntent::Help => "help",
            UserIntent::Repeat => repeat_or(ctx, &mut b),
            UserIntent::ListOptions => {
                if ctx.offered_items.is_empty() {
                    "help"
                } else {
                    let labels: Vec<String> = ctx
                        .offered_items
                        .iter()
                        .filter_map(|item| match item {
                            OfferedItem::Skill(id) => self.catalog.skill(id).map(|s| s.name.clone()),
                            OfferedItem::Category(id) => self.catalog.category(id).map(category_label),
                        })
                        .collect();
                    b.insert("options".into(), join_options(&labels));
                    "list-options"
                }
            }
            UserIntent::GoBack => {
                ctx.category_stack.pop();
                ctx.state.target_category = ctx.category_stack.last().cloned();
                ctx.proposed_skill = None;
                let level = ctx.scope_option().and_then(|id| self.catalog.category(id)).map(|c| {
                    if c.is_leaf() {
                        c.parent_id.clone()
                    } else {
                        Some(c.id.clone())
                    }
                });
                let level = level.flatten();
                let mut cats = self
                    .catalog
                    .child_categories(level.as_deref(), GO_BACK_OFFER, &ctx.exhausted_categories)?;
                if cats.is_empty() {
                    cats = self
                        .catalog
                        .child_categories(level.as_deref(), GO_BACK_OFFER, &BTreeSet::new())?;
                }
                if cats.is_empty() {
                    "reprompt"
                } else {
                    b.insert(
                        "categories".into(),
                        join_options(&cats.iter().map(|c| category_label(c)).collect::<Vec<_>>()),
                    );
                    let mut reply = ExecuteReply::plain("go-back", b);
                    reply.offered = Some(
                        cats.iter()
                            .map(|c| OfferedItem::Category(c.id.clone()))
                            .collect(),
                    );
                    return Ok(reply);
                }
            }
            UserIntent::OutOfDomain => {
                if ctx.misunderstanding_count <= 1 {
                    repeat_or(ctx, &mut b)
                } else {
                    "reprompt"
                }
            }
            _ => return Err(Error::MaskedAction(AgentAction::Execute.as_str())),
        };
        Ok(ExecuteReply::plain(out, b))
    }

    /// Folds a user turn into the context; returns (reward, done).
    pub fn observe_user(&self, ctx: &mut DialogContext, mut turn: UserTurn) -> Result<(f64, bool)> {
        if ctx.terminal {
            return Err(Error::EpisodeTerminated);
        }
        if !turn.intent.is_slotted() {
            turn.slot = None;
        }
        // Resolve the slot before touching the context.
        let selection = match (turn.intent, &turn.slot) {
            (i, None) if i.is_slotted() => return Err(Error::MissingSlot(i.as_str())),
            (_, Some(Slot::Category(id))) => {
                if self.catalog.category(id).is_none() {
                    return Err(Error::UnresolvableSlot(format!("category `{id}`")));
                }
                Some(OfferedItem::Category(id.clone()))
            }
            (_, Some(Slot::Skill(id))) => {
                if self.catalog.skill(id).is_none() {
                    return Err(Error::UnresolvableSlot(format!("skill `{id}`")));
                }
                Some(OfferedItem::Skill(id.clone()))
            }
            (_, Some(Slot::Ordinal(i))) => Some(
                ctx.offered_items
                    .get(*i)
                    .cloned()
                    .ok_or_else(|| Error::UnresolvableSlot(format!("option {} of {}", i + 1, ctx.offered_items.len())))?,
            ),
            (UserIntent::Yes, None) => match ctx.offered_items.as_slice() {
                [OfferedItem::Category(id)] => Some(OfferedItem::Category(id.clone())),
                _ => None,
            },
            _ => None,
        };

        ctx.state.turn_depth = (ctx.state.turn_depth + 1).min(MAX_TURN_DEPTH);
        ctx.state.user_intent = turn.intent;
        if turn.intent == UserIntent::OutOfDomain {
            ctx.misunderstanding_count += 1;
        } else {
            ctx.misunderstanding_count = 0;
        }
        if turn.intent.is_slotted() {
            ctx.has_selected = true;
        }
        match selection {
            Some(OfferedItem::Category(id)) => {
                ctx.state.target_category = Some(id.clone());
                ctx.category_stack.push(id);
                ctx.proposed_skill = None;
            }
            Some(OfferedItem::Skill(id)) => {
                ctx.proposed_skill = Some(id);
            }
            None => {}
        }
        ctx.pending_turn = turn;

        if ctx.pending_turn.intent.is_terminal() || ctx.state.turn_depth >= MAX_TURN_DEPTH {
            ctx.terminal = true;
            let prompt = self
                .prompts
                .candidates(AgentAction::EndSession, ctx.state.first_time_user, "goodbye")[0];
            ctx.state.prev_agent_action = Some(AgentAction::EndSession);
            ctx.state.prev_prompt = Some(prompt);
            ctx.state.prev_metadata = MetadataType::NoMetadata;
            self.log_turn(ctx, AgentAction::EndSession, prompt, MetadataType::NoMetadata, -1.0);
            return Ok((-1.0, true));
        }
        Ok((0.0, false))
    }

    /// Agent acts, then (if the dialog goes on) the user answers.
    pub fn step(
        &self,
        ctx: &mut DialogContext,
        action: AgentAction,
        user: &dyn UserModel,
        rng: &mut SimRng,
    ) -> Result<StepOutcome> {
        let agent_move = self.apply_action(ctx, action, rng)?;
        if agent_move.terminal {
            let reward = if agent_move.launched.is_some() { 1.0 } else { -1.0 };
            return Ok(StepOutcome {
                state: ctx.state.clone(),
                reward,
                done: true,
                agent_move,
                user_turn: None,
            });
        }
        let turn = user.respond(ctx, &agent_move, &self.catalog, rng);
        let (reward, done) = self.observe_user(ctx, turn.clone())?;
        Ok(StepOutcome {
            state: ctx.state.clone(),
            reward,
            done,
            agent_move,
            user_turn: Some(turn),
        })
    }
}
