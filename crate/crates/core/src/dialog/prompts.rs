//! Agent prompt templates and placeholder rendering.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{AgentAction, MetadataType, PromptId};
use crate::catalog::Bindings;
use crate::error::{Error, Result};

/// Number of prompts in a prompt catalog; fixed by the state encoding.
pub const PROMPT_COUNT: usize = 56;

pub const FIRST_TIME_TAG: &str = "first-time";
pub const RETURNING_TAG: &str = "returning";

const DEFAULT_PROMPTS: &str = include_str!("../../data/prompts.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptEntry {
    pub prompt_id: String,
    pub action: AgentAction,
    pub tags: Vec<String>,
    pub template: String,
    pub allowed_metadata: Vec<MetadataType>,
}

impl PromptEntry {
    fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

/// Context tags every runtime lookup must be able to resolve, per action.
const REQUIRED_TAGS: &[(AgentAction, &[&str])] = &[
    (AgentAction::OfferOneSkill, &["opening", "general"]),
    (AgentAction::OfferOneSkillOrCategory, &["opening", "general"]),
    (AgentAction::OfferOneCategory, &["opening", "general", "exhausted"]),
    (AgentAction::OfferThreeCategories, &["opening", "general", "exhausted"]),
    (AgentAction::OfferFiveCategories, &["opening", "general", "exhausted"]),
    (AgentAction::LaunchSkill, &["general"]),
    (AgentAction::EndSession, &["goodbye", "misunderstood"]),
    (
        AgentAction::Execute,
        &[
            "rating",
            "details",
            "help",
            "repeat",
            "list-options",
            "go-back",
            "reprompt",
            "unknown-skill",
        ],
    ),
];

#[derive(Debug, Clone)]
pub struct PromptCatalog {
    entries: Vec<PromptEntry>,
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self::from_json(DEFAULT_PROMPTS).expect("shipped prompt catalog is valid")
    }
}

impl PromptCatalog {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<PromptEntry> =
            serde_json::from_str(text).map_err(|e| Error::parse("prompt catalog", e))?;
        Self::new(entries)
    }

    pub fn new(entries: Vec<PromptEntry>) -> Result<Self> {
        if entries.len() != PROMPT_COUNT {
            return Err(Error::InvalidPrompts(format!(
                "expected {PROMPT_COUNT} prompts, found {}",
                entries.len()
            )));
        }
        let mut ids = std::collections::BTreeSet::new();
        for e in &entries {
            if !ids.insert(e.prompt_id.as_str()) {
                return Err(Error::InvalidPrompts(format!("duplicate id `{}`", e.prompt_id)));
            }
            if e.allowed_metadata.is_empty() {
                return Err(Error::InvalidPrompts(format!(
                    "`{}` allows no metadata type",
                    e.prompt_id
                )));
            }
            if !e.has_tag(FIRST_TIME_TAG) && !e.has_tag(RETURNING_TAG) {
                return Err(Error::InvalidPrompts(format!(
                    "`{}` has no audience tag",
                    e.prompt_id
                )));
            }
            placeholders(&e.template)?;
        }
        let catalog = Self { entries };
        for audience in [true, false] {
            for (action, tags) in REQUIRED_TAGS {
                for tag in *tags {
                    if catalog.candidates(*action, audience, tag).is_empty() {
                        return Err(Error::InvalidPrompts(format!(
                            "no `{action}` prompt tagged `{tag}` for {} users",
                            audience_tag(audience)
                        )));
                    }
                }
            }
        }
        Ok(catalog)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: PromptId) -> Option<&PromptEntry> {
        self.entries.get(id.index())
    }

    pub fn entries(&self) -> &[PromptEntry] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<PromptId> {
        self.entries
            .iter()
            .position(|e| e.prompt_id == name)
            .map(|i| PromptId(i as u16))
    }

    /// Prompts for `action` matching the audience and a context tag.
    pub fn candidates(&self, action: AgentAction, first_time: bool, tag: &str) -> Vec<PromptId> {
        let audience = audience_tag(first_time);
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.action == action && e.has_tag(audience) && e.has_tag(tag))
            .map(|(i, _)| PromptId(i as u16))
            .collect()
    }
}

pub fn audience_tag(first_time: bool) -> &'static str {
    if first_time {
        FIRST_TIME_TAG
    } else {
        RETURNING_TAG
    }
}

/// Placeholder names of a template, in order of appearance.
fn placeholders(template: &str) -> Result<Vec<&str>> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::InvalidPrompts(format!("unclosed placeholder in `{template}`")))?;
        names.push(&after[..close]);
        rest = &after[close + 1..];
    }
    Ok(names)
}

/// Substitutes every `{name}` in the template. Fails on the first missing binding.
pub fn render_template(template: &str, bindings: &Bindings) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::InvalidPrompts(format!("unclosed placeholder in `{template}`")))?;
        let name = &after[..close];
        let value = bindings
            .get(name)
            .ok_or_else(|| Error::MissingBinding(name.to_string()))?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_prompt(prompts: &PromptCatalog, id: PromptId, bindings: &Bindings) -> Result<String> {
    let entry = prompts
        .get(id)
        .ok_or_else(|| Error::InvalidPrompts(format!("no prompt with index {}", id.0)))?;
    render_template(&entry.template, bindings)
}

/// The phrase spliced into `{metadata}` of a skill offer.
pub fn metadata_phrase(metadata: MetadataType, bindings: &Bindings) -> String {
    let get = |k: &str| bindings.get(k).map(String::as_str).unwrap_or_default();
    match metadata {
        MetadataType::NoMetadata => String::new(),
        MetadataType::ShortDescription => format!(", {}", get("description")),
        MetadataType::Trending => ", which is trending this week".into(),
        MetadataType::Recommended => ", which is one of our recommended games".into(),
        MetadataType::RatingReview => format!(
            ", which is rated as {} by {} people",
            get("rating"),
            get("reviews")
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_catalog_has_56_unique_prompts() {
        let p = PromptCatalog::default();
        assert_eq!(p.len(), PROMPT_COUNT);
        assert!(p.find("first-time-user-offer-three-categories-opening").is_some());
    }

    #[test]
    fn renders_offer_one_skill_or_category() {
        let p = PromptCatalog::default();
        let id = p
            .find("first-time-user-offer-one-skill-or-category-general")
            .unwrap();
        let mut b = Bindings::new();
        b.insert("skill".into(), "Twenty Questions".into());
        b.insert("metadata".into(), String::new());
        assert_eq!(
            render_prompt(&p, id, &b).unwrap(),
            "Would you like to launch Twenty Questions or try a different type of skill?"
        );
    }

    #[test]
    fn template_without_placeholders_is_verbatim() {
        let text = "Sorry, I'm having trouble understanding.";
        assert_eq!(render_template(text, &Bindings::new()).unwrap(), text);
    }

    #[test]
    fn missing_binding_names_placeholder() {
        let err = render_template("Try {skill} now", &Bindings::new()).unwrap_err();
        assert!(matches!(err, Error::MissingBinding(ref n) if n == "skill"));
    }

    #[test]
    fn rejects_wrong_count() {
        let mut entries = PromptCatalog::default().entries().to_vec();
        entries.pop();
        assert!(PromptCatalog::new(entries).is_err());
    }

    #[test]
    fn rating_phrase() {
        let mut b = Bindings::new();
        b.insert("rating".into(), "4.0".into());
        b.insert("reviews".into(), "912".into());
        assert_eq!(
            metadata_phrase(MetadataType::RatingReview, &b),
            ", which is rated as 4.0 by 912 people"
        );
    }
}
