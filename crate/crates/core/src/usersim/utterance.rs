//! Surface realisation of user intents from a template bank.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::catalog::Catalog;
use crate::dialog::{Slot, UserIntent};
use crate::error::{Error, Result};

const DEFAULT_BANK: &str = include_str!("../../data/utterances.json");

pub const ORDINAL_WORDS: [&str; 5] = ["first", "second", "third", "fourth", "fifth"];

/// Intent → utterance templates with `{category}`, `{skill}` or `{ordinal}`
/// placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceBank {
    templates: BTreeMap<UserIntent, Vec<String>>,
}

impl Default for UtteranceBank {
    fn default() -> Self {
        Self::from_json(DEFAULT_BANK).expect("shipped utterance bank is valid")
    }
}

impl UtteranceBank {
    pub fn from_json(text: &str) -> Result<Self> {
        let templates: BTreeMap<UserIntent, Vec<String>> =
            serde_json::from_str(text).map_err(|e| Error::parse("utterance bank", e))?;
        Ok(Self { templates })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn templates(&self, intent: UserIntent) -> &[String] {
        self.templates.get(&intent).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserIntent, &[String])> {
        self.templates.iter().map(|(i, t)| (*i, t.as_slice()))
    }
}

/// Fills slot placeholders of one template.
pub fn fill_template(template: &str, slot: Option<&Slot>, catalog: &Catalog) -> String {
    let mut text = template.to_string();
    match slot {
        Some(Slot::Category(id)) => {
            let name = catalog
                .category(id)
                .map(|c| c.name.to_lowercase())
                .unwrap_or_else(|| id.clone());
            text = text.replace("{category}", &name);
        }
        Some(Slot::Skill(id)) => {
            let name = catalog
                .skill(id)
                .map(|s| s.name.to_lowercase())
                .unwrap_or_else(|| id.clone());
            text = text.replace("{skill}", &name);
        }
        Some(Slot::Ordinal(i)) => {
            let word = ORDINAL_WORDS.get(*i).copied().unwrap_or("last");
            text = text.replace("{ordinal}", word);
        }
        None => {}
    }
    text
}

/// Uniform draw over the intent's templates, slot substituted.
pub fn sample_utterance(
    intent: UserIntent,
    slot: Option<&Slot>,
    bank: &UtteranceBank,
    catalog: &Catalog,
    rng: &mut impl Rng,
) -> Result<String> {
    let templates = bank.templates(intent);
    if templates.is_empty() {
        return Err(Error::NoTemplate(intent.as_str()));
    }
    let template = &templates[rng.random_range(0..templates.len())];
    Ok(fill_template(template, slot, catalog))
}
