//! Discrete vocabularies of the dialog MDP and the RL-visible state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Upper bound on user turns in one dialog; also the cardinality of the
/// turn-depth feature.
pub const MAX_TURN_DEPTH: u32 = 110;

macro_rules! kebab_enum {
    (
        $(#[$meta:meta])*
        pub enum $name:ident { $($variant:ident => $text:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const COUNT: usize = Self::ALL.len();

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(index: usize) -> Option<Self> {
                Self::ALL.get(index).copied()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::parse(stringify!($name), format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

kebab_enum! {
    /// What the user meant by their last utterance.
    pub enum UserIntent {
        Start => "start",
        CategoryName => "category-name",
        SkillName => "skill-name",
        SelectOption => "select-option",
        Yes => "yes",
        No => "no",
        OtherCategory => "other-category",
        OtherSkill => "other-skill",
        GetRating => "get-rating",
        GetDetails => "get-details",
        Help => "help",
        Repeat => "repeat",
        ListOptions => "list-options",
        GoBack => "go-back",
        Stop => "stop",
        End => "end",
        OutOfDomain => "out-of-domain",
    }
}

impl UserIntent {
    /// Intents that carry a slot (category id, skill id or ordinal).
    pub fn is_slotted(self) -> bool {
        matches!(
            self,
            UserIntent::CategoryName | UserIntent::SkillName | UserIntent::SelectOption
        )
    }

    /// Intents that end the dialog from the user side.
    pub fn is_terminal(self) -> bool {
        matches!(self, UserIntent::Stop | UserIntent::End)
    }

    /// Intents answered by the rule-based `execute` handler.
    pub fn needs_execute(self) -> bool {
        matches!(
            self,
            UserIntent::GetRating
                | UserIntent::GetDetails
                | UserIntent::Repeat
                | UserIntent::ListOptions
                | UserIntent::Help
                | UserIntent::GoBack
                | UserIntent::OutOfDomain
        )
    }

    /// Intents that reject the current offer.
    pub fn is_rejection(self) -> bool {
        matches!(
            self,
            UserIntent::No | UserIntent::OtherCategory | UserIntent::OtherSkill
        )
    }
}

kebab_enum! {
    /// Composite agent actions.
    pub enum AgentAction {
        OfferOneSkill => "offer-one-skill",
        OfferOneSkillOrCategory => "offer-one-skill-or-category",
        OfferOneCategory => "offer-one-category",
        OfferThreeCategories => "offer-three-categories",
        OfferFiveCategories => "offer-five-categories",
        LaunchSkill => "launch-skill",
        EndSession => "end-session",
        Execute => "execute",
    }
}

impl AgentAction {
    pub const OFFERS: [AgentAction; 5] = [
        AgentAction::OfferOneSkill,
        AgentAction::OfferOneSkillOrCategory,
        AgentAction::OfferOneCategory,
        AgentAction::OfferThreeCategories,
        AgentAction::OfferFiveCategories,
    ];

    pub fn is_offer(self) -> bool {
        self.category_count().is_some() || self.offers_skill()
    }

    pub fn offers_skill(self) -> bool {
        matches!(
            self,
            AgentAction::OfferOneSkill | AgentAction::OfferOneSkillOrCategory
        )
    }

    /// Number of categories a category offer lists.
    pub fn category_count(self) -> Option<usize> {
        match self {
            AgentAction::OfferOneCategory => Some(1),
            AgentAction::OfferThreeCategories => Some(3),
            AgentAction::OfferFiveCategories => Some(5),
            _ => None,
        }
    }
}

kebab_enum! {
    /// Which skill descriptor accompanies an offer.
    pub enum MetadataType {
        NoMetadata => "no-metadata",
        ShortDescription => "short-description",
        Trending => "trending",
        Recommended => "recommended",
        RatingReview => "rating-review",
    }
}

/// Slot value attached to `category-name`, `skill-name` and `select-option`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Slot {
    Category(String),
    Skill(String),
    /// Zero-based position in the last offer.
    Ordinal(usize),
}

/// One user turn as seen by the environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserTurn {
    pub intent: UserIntent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<Slot>,
    #[serde(default)]
    pub utterance: String,
}

impl UserTurn {
    pub fn new(intent: UserIntent) -> Self {
        Self {
            intent,
            slot: None,
            utterance: String::new(),
        }
    }

    pub fn with_slot(intent: UserIntent, slot: Slot) -> Self {
        Self {
            intent,
            slot: Some(slot),
            utterance: String::new(),
        }
    }

    pub fn said(mut self, utterance: impl Into<String>) -> Self {
        self.utterance = utterance.into();
        self
    }
}

/// Index into the prompt catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptId(pub u16);

impl PromptId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// The RL observation: seven categorical features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogState {
    pub user_intent: UserIntent,
    pub prev_agent_action: Option<AgentAction>,
    pub prev_prompt: Option<PromptId>,
    pub prev_metadata: MetadataType,
    pub target_category: Option<String>,
    pub first_time_user: bool,
    pub turn_depth: u32,
}

impl DialogState {
    pub fn initial(first_time_user: bool) -> Self {
        Self {
            user_intent: UserIntent::Start,
            prev_agent_action: None,
            prev_prompt: None,
            prev_metadata: MetadataType::NoMetadata,
            target_category: None,
            first_time_user,
            turn_depth: 1,
        }
    }
}
