//! Rule-based understanding of user utterances.
//!
//! Rules map normalized phrase patterns to intents. A pattern is a word
//! sequence where `*` matches any number of words and `{slot}` captures one
//! or more words that must resolve to an offered item, a category or a
//! skill. Higher priority wins; equal priorities keep file order.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::dialog::{DialogContext, OfferedItem, Slot, UserIntent, UserTurn};
use crate::error::{Error, Result};
use crate::usersim::ORDINAL_WORDS;

const DEFAULT_RULES: &str = include_str!("../data/rules.json");

const CAPTURE: &str = "{slot}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub intent: UserIntent,
    pub patterns: Vec<String>,
    #[serde(default)]
    pub priority: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Wildcard,
    Capture,
}

#[derive(Debug, Clone)]
struct Pattern {
    tokens: Vec<Token>,
    has_capture: bool,
}

#[derive(Debug, Clone)]
struct Rule {
    intent: UserIntent,
    priority: i32,
    patterns: Vec<Pattern>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Confidence {
    Matched,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NluResult {
    pub intent: UserIntent,
    /// Captured slot text, as normalized words.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_slot: Option<Slot>,
    pub confidence: Confidence,
}

impl NluResult {
    fn fallback() -> Self {
        Self {
            intent: UserIntent::OutOfDomain,
            slot: None,
            resolved_slot: None,
            confidence: Confidence::Fallback,
        }
    }

    /// The turn the environment consumes. Only slotted intents keep a slot.
    pub fn to_user_turn(&self, utterance: &str) -> UserTurn {
        let slot = if self.intent.is_slotted() {
            self.resolved_slot.clone()
        } else {
            None
        };
        UserTurn {
            intent: self.intent,
            slot,
            utterance: utterance.to_string(),
        }
    }
}

/// Lowercases, drops punctuation other than in-word apostrophes, and
/// splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .collect::<String>()
                .trim_matches('\'')
                .to_string()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn parse_pattern(text: &str, intent: UserIntent) -> Result<Pattern> {
    let tokens: Vec<Token> = text
        .split_whitespace()
        .map(|w| match w {
            "*" => Token::Wildcard,
            CAPTURE => Token::Capture,
            _ => Token::Word(normalize(w).concat()),
        })
        .filter(|t| !matches!(t, Token::Word(w) if w.is_empty()))
        .collect();
    let captures = tokens.iter().filter(|t| **t == Token::Capture).count();
    if captures > 1 {
        return Err(Error::InvalidRules(format!(
            "pattern `{text}` of `{intent}` has {captures} slot captures"
        )));
    }
    if text.contains('{') && captures == 0 {
        return Err(Error::InvalidRules(format!(
            "pattern `{text}` of `{intent}` has an unknown placeholder"
        )));
    }
    Ok(Pattern {
        tokens,
        has_capture: captures == 1,
    })
}

/// Every way `words` matches `tokens`, reported as the captured span (if
/// any). Stops early once `accept` approves a capture.
fn match_tokens(
    tokens: &[Token],
    words: &[String],
    captured: Option<(usize, usize)>,
    offset: usize,
    accept: &mut dyn FnMut(Option<(usize, usize)>) -> bool,
) -> bool {
    match tokens.split_first() {
        None => words.is_empty() && accept(captured),
        Some((Token::Word(w), rest)) => {
            words.first() == Some(w) && match_tokens(rest, &words[1..], captured, offset + 1, accept)
        }
        Some((Token::Wildcard, rest)) => {
            (0..=words.len()).any(|k| match_tokens(rest, &words[k..], captured, offset + k, accept))
        }
        Some((Token::Capture, rest)) => (1..=words.len())
            .any(|k| match_tokens(rest, &words[k..], Some((offset, offset + k)), offset + k, accept)),
    }
}

fn ordinal_index(word: &str) -> Option<usize> {
    const DIGITS: [&str; 5] = ["1", "2", "3", "4", "5"];
    const SUFFIXED: [&str; 5] = ["1st", "2nd", "3rd", "4th", "5th"];
    const CARDINAL: [&str; 5] = ["one", "two", "three", "four", "five"];
    [ORDINAL_WORDS, DIGITS, SUFFIXED, CARDINAL]
        .iter()
        .find_map(|list| list.iter().position(|w| *w == word))
}

fn strip_games(words: &[String]) -> &[String] {
    match words.split_last() {
        Some((last, rest)) if !rest.is_empty() && (last == "games" || last == "game") => rest,
        _ => words,
    }
}

fn same_name(words: &[String], name: &str) -> bool {
    let name = normalize(name);
    words == name.as_slice() || strip_games(words) == strip_games(&name)
}

fn item_name<'a>(item: &OfferedItem, catalog: &'a Catalog) -> Option<&'a str> {
    match item {
        OfferedItem::Category(id) => catalog.category(id).map(|c| c.name.as_str()),
        OfferedItem::Skill(id) => catalog.skill(id).map(|s| s.name.as_str()),
    }
}

/// Resolves captured words. Order: ordinals and names of offered items,
/// then any category, then any skill.
fn resolve(words: &[String], intent: UserIntent, ctx: &DialogContext, catalog: &Catalog) -> Option<Slot> {
    let offered = &ctx.offered_items;
    if let [w] = words {
        let idx = if w == "last" {
            offered.len().checked_sub(1)
        } else {
            ordinal_index(w)
        };
        if let Some(i) = idx {
            return (i < offered.len()).then_some(Slot::Ordinal(i));
        }
    }
    if let Some(pos) = offered
        .iter()
        .position(|item| item_name(item, catalog).is_some_and(|n| same_name(words, n)))
    {
        return Some(match (&offered[pos], intent) {
            (_, UserIntent::SelectOption) => Slot::Ordinal(pos),
            (OfferedItem::Category(id), _) => Slot::Category(id.clone()),
            (OfferedItem::Skill(id), _) => Slot::Skill(id.clone()),
        });
    }
    if let Some(c) = catalog.categories().find(|c| same_name(words, &c.name)) {
        return Some(Slot::Category(c.id.clone()));
    }
    catalog
        .skills()
        .find(|s| normalize(&s.name) == words)
        .map(|s| Slot::Skill(s.id.clone()))
}

/// Slotted intents follow the kind of slot that resolved; questions about
/// a skill need the slot to be a skill.
fn reconcile(intent: UserIntent, slot: Slot) -> Option<(UserIntent, Slot)> {
    match intent {
        UserIntent::CategoryName | UserIntent::SkillName | UserIntent::SelectOption => {
            let intent = match slot {
                Slot::Category(_) => UserIntent::CategoryName,
                Slot::Skill(_) => UserIntent::SkillName,
                Slot::Ordinal(_) => UserIntent::SelectOption,
            };
            Some((intent, slot))
        }
        _ => matches!(slot, Slot::Skill(_)).then_some((intent, slot)),
    }
}

#[derive(Debug, Clone)]
pub struct Nlu {
    rules: Vec<Rule>,
    /// Probability of replacing the recognized intent by a uniform draw.
    noise: f64,
}

impl Default for Nlu {
    fn default() -> Self {
        Self::from_json(DEFAULT_RULES).expect("shipped rules are valid")
    }
}

impl Nlu {
    pub fn from_json(text: &str) -> Result<Self> {
        let specs: Vec<RuleSpec> = serde_json::from_str(text).map_err(|e| Error::parse("nlu rules", e))?;
        Self::new(specs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Validates that every intent has a rule and every pattern parses.
    pub fn new(specs: Vec<RuleSpec>) -> Result<Self> {
        for intent in UserIntent::ALL {
            if !specs.iter().any(|s| s.intent == *intent && !s.patterns.is_empty()) {
                return Err(Error::InvalidRules(format!("no rule for intent `{intent}`")));
            }
        }
        let mut rules = specs
            .into_iter()
            .map(|s| {
                let patterns = s
                    .patterns
                    .iter()
                    .map(|p| parse_pattern(p, s.intent))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Rule {
                    intent: s.intent,
                    priority: s.priority,
                    patterns,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        // Stable: equal priorities keep file order.
        rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
        Ok(Self { rules, noise: 0.0 })
    }

    pub fn with_noise(mut self, noise: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::Config(format!("nlu noise {noise} outside [0, 1]")));
        }
        self.noise = noise;
        Ok(self)
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Deterministic classification in the context of the current dialog.
    pub fn classify(&self, utterance: &str, ctx: &DialogContext, catalog: &Catalog) -> NluResult {
        let words = normalize(utterance);
        for rule in &self.rules {
            for pattern in &rule.patterns {
                let mut found = None;
                match_tokens(&pattern.tokens, &words, None, 0, &mut |cap| {
                    found = match cap {
                        None if !pattern.has_capture => Some((rule.intent, None, None)),
                        Some((a, b)) => resolve(&words[a..b], rule.intent, ctx, catalog)
                            .and_then(|slot| reconcile(rule.intent, slot))
                            .map(|(intent, slot)| (intent, Some(words[a..b].join(" ")), Some(slot))),
                        None => None,
                    };
                    found.is_some()
                });
                if let Some((intent, slot, resolved_slot)) = found {
                    let resolved_slot = resolved_slot.or_else(|| match intent {
                        UserIntent::GetRating | UserIntent::GetDetails => {
                            ctx.proposed_skill.clone().map(Slot::Skill)
                        }
                        _ => None,
                    });
                    return NluResult {
                        intent,
                        slot,
                        resolved_slot,
                        confidence: Confidence::Matched,
                    };
                }
            }
        }
        NluResult::fallback()
    }

    /// Classification with the configured noise applied. A noisy slotted
    /// intent without a usable slot degrades to out-of-domain.
    pub fn classify_noisy(
        &self,
        utterance: &str,
        ctx: &DialogContext,
        catalog: &Catalog,
        rng: &mut impl Rng,
    ) -> NluResult {
        let mut result = self.classify(utterance, ctx, catalog);
        if self.noise > 0.0 && rng.random::<f64>() < self.noise {
            let intent = UserIntent::ALL[rng.random_range(0..UserIntent::COUNT)];
            let keeps_slot = match (&result.resolved_slot, intent) {
                (Some(Slot::Category(_)), UserIntent::CategoryName)
                | (Some(Slot::Skill(_)), UserIntent::SkillName)
                | (Some(Slot::Ordinal(_)), UserIntent::SelectOption) => true,
                (_, i) => !i.is_slotted(),
            };
            result.intent = if keeps_slot { intent } else { UserIntent::OutOfDomain };
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Category, Skill};
    use std::sync::Arc;
    use crate::dialog::{DialogEnv, PromptCatalog};
    use crate::usersim::UserProfile;

    fn catalog() -> Catalog {
        let skill = |id: &str, name: &str, cat: &str| Skill {
            id: id.into(),
            name: name.into(),
            category_ids: vec![cat.into()],
            popularity: 10,
            rating: 3.5,
            review_count: 3,
            short_description: String::new(),
            trending: false,
            recommended: false,
        };
        let cat = |id: &str, name: &str, skills: &[&str]| Category {
            id: id.into(),
            name: name.into(),
            parent_id: None,
            child_category_ids: vec![],
            skill_ids: skills.iter().map(|s| s.to_string()).collect(),
        };
        Catalog::new(
            vec![
                skill("word-master", "Amazing Word Master Game", "word"),
                skill("quiz", "History Quiz", "history"),
            ],
            vec![cat("history", "History", &["quiz"]), cat("word", "Word", &["word-master"])],
            vec!["history".into(), "word".into()],
        )
        .unwrap()
    }

    fn ctx(offered: Vec<OfferedItem>, proposed: Option<&str>) -> DialogContext {
        let env = DialogEnv::new(Arc::new(catalog()), Arc::new(PromptCatalog::default()));
        let mut c = env.reset(UserProfile::new(true));
        c.offered_items = offered;
        c.proposed_skill = proposed.map(String::from);
        c
    }

    #[test]
    fn category_after_offer() {
        let c = ctx(
            vec![OfferedItem::Category("history".into()), OfferedItem::Category("word".into())],
            None,
        );
        let r = Nlu::default().classify("History games", &c, &catalog());
        assert_eq!(r.intent, UserIntent::CategoryName);
        assert_eq!(r.resolved_slot, Some(Slot::Category("history".into())));
        assert_eq!(r.confidence, Confidence::Matched);
    }

    #[test]
    fn rating_question_targets_proposed_skill() {
        let c = ctx(vec![OfferedItem::Skill("word-master".into())], Some("word-master"));
        let r = Nlu::default().classify("What's its rating?", &c, &catalog());
        assert_eq!(r.intent, UserIntent::GetRating);
        assert_eq!(r.resolved_slot, Some(Slot::Skill("word-master".into())));
        assert_eq!(r.to_user_turn("x").slot, None);
    }

    #[test]
    fn gibberish_falls_back() {
        let r = Nlu::default().classify("flurble glorp", &ctx(vec![], None), &catalog());
        assert_eq!(r.intent, UserIntent::OutOfDomain);
        assert_eq!(r.confidence, Confidence::Fallback);
    }

    #[test]
    fn silence_ends_and_ordinals_select() {
        let nlu = Nlu::default();
        let c = ctx(
            vec![OfferedItem::Category("history".into()), OfferedItem::Category("word".into())],
            None,
        );
        assert_eq!(nlu.classify("", &c, &catalog()).intent, UserIntent::End);
        let r = nlu.classify("the second one", &c, &catalog());
        assert_eq!(r.intent, UserIntent::SelectOption);
        assert_eq!(r.resolved_slot, Some(Slot::Ordinal(1)));
        // Only two options were offered.
        assert_eq!(nlu.classify("number four", &c, &catalog()).intent, UserIntent::OutOfDomain);
    }

    #[test]
    fn skill_names_win_over_categories_when_launching() {
        let r = Nlu::default().classify("play amazing word master game", &ctx(vec![], None), &catalog());
        assert_eq!(r.intent, UserIntent::SkillName);
        assert_eq!(r.resolved_slot, Some(Slot::Skill("word-master".into())));
    }

    #[test]
    fn missing_intent_is_named() {
        let specs: Vec<RuleSpec> = serde_json::from_str(DEFAULT_RULES).unwrap();
        let specs = specs.into_iter().filter(|s| s.intent != UserIntent::Stop).collect();
        let err = Nlu::new(specs).unwrap_err().to_string();
        assert!(err.contains("`stop`"), "{err}");
    }

    #[test]
    fn two_captures_rejected() {
        let mut specs: Vec<RuleSpec> = serde_json::from_str(DEFAULT_RULES).unwrap();
        specs[0].patterns.push("{slot} and {slot}".into());
        assert!(matches!(Nlu::new(specs), Err(Error::InvalidRules(_))));
    }

    #[test]
    fn priority_then_file_order() {
        let mut specs: Vec<RuleSpec> = serde_json::from_str(DEFAULT_RULES).unwrap();
        specs.push(RuleSpec {
            intent: UserIntent::Repeat,
            patterns: vec!["hello there".into()],
            priority: 1,
        });
        specs.push(RuleSpec {
            intent: UserIntent::Help,
            patterns: vec!["hello there".into()],
            priority: 1,
        });
        let c = ctx(vec![], None);
        assert_eq!(Nlu::new(specs.clone()).unwrap().classify("hello there", &c, &catalog()).intent, UserIntent::Repeat);
        specs.last_mut().unwrap().priority = 2;
        assert_eq!(Nlu::new(specs).unwrap().classify("hello there", &c, &catalog()).intent, UserIntent::Help);
    }

    #[test]
    fn noise_bounds() {
        assert!(Nlu::default().with_noise(1.5).is_err());
        assert_eq!(Nlu::default().noise(), 0.0);
    }
}
