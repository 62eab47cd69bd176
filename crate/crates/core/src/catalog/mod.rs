//! Skill catalog: skills, the category forest, and popularity-ranked
//! recommendation queries.
//!
//! A [`Catalog`] is immutable once built. Construction validates every
//! cross-reference and precomputes per-category rankings so that the
//! queries used on every dialog turn are cheap.

mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialog::MetadataType;
use crate::error::{Error, Result};

pub use synth::generate_synthetic_catalog;

pub const CATALOG_FORMAT_VERSION: u32 = 1;

/// Name → text bindings consumed by prompt rendering.
pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skill {
    pub id: String,
    pub name: String,
    pub category_ids: Vec<String>,
    pub popularity: u64,
    pub rating: f64,
    pub review_count: u64,
    #[serde(default)]
    pub short_description: String,
    #[serde(default)]
    pub trending: bool,
    #[serde(default)]
    pub recommended: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Category {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    #[serde(default)]
    pub child_category_ids: Vec<String>,
    #[serde(default)]
    pub skill_ids: Vec<String>,
}

impl Category {
    pub fn is_leaf(&self) -> bool {
        self.child_category_ids.is_empty()
    }
}

/// On-disk layout of a catalog file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    format_version: u32,
    skills: Vec<Skill>,
    categories: Vec<Category>,
    #[serde(default)]
    root_category_ids: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    skills: BTreeMap<String, Skill>,
    categories: BTreeMap<String, Category>,
    root_category_ids: Vec<String>,
    // Derived.
    category_index: HashMap<String, usize>,
    ranked_all: Vec<String>,
    ranked_by_category: HashMap<String, Vec<String>>,
    subtree_popularity: HashMap<String, u64>,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.skills == other.skills
            && self.categories == other.categories
            && self.root_category_ids == other.root_category_ids
    }
}

impl Catalog {
    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new(), Vec::new()).expect("empty catalog is valid")
    }

    /// Builds and validates a catalog. Fails with the first violated invariant.
    pub fn new(
        skills: Vec<Skill>,
        categories: Vec<Category>,
        root_category_ids: Vec<String>,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidCatalog(msg));

        let mut skill_map = BTreeMap::new();
        for skill in skills {
            if !(skill.rating.is_finite() && (0.0..=5.0).contains(&skill.rating)) {
                return invalid(format!(
                    "skill `{}` has rating {} outside [0, 5]",
                    skill.id, skill.rating
                ));
            }
            if skill.category_ids.is_empty() {
                return invalid(format!("skill `{}` belongs to no category", skill.id));
            }
            let id = skill.id.clone();
            if skill_map.insert(id.clone(), skill).is_some() {
                return invalid(format!("duplicate skill id `{id}`"));
            }
        }

        let mut cat_map = BTreeMap::new();
        for cat in categories {
            let id = cat.id.clone();
            if cat_map.insert(id.clone(), cat).is_some() {
                return invalid(format!("duplicate category id `{id}`"));
            }
        }

        for skill in skill_map.values() {
            for cid in &skill.category_ids {
                let Some(cat) = cat_map.get(cid) else {
                    return invalid(format!(
                        "skill `{}` references missing category `{cid}`",
                        skill.id
                    ));
                };
                if !cat.skill_ids.contains(&skill.id) {
                    return invalid(format!(
                        "skill `{}` lists category `{cid}` which does not list it",
                        skill.id
                    ));
                }
            }
        }

        let mut listed_child: HashMap<&str, &str> = HashMap::new();
        for cat in cat_map.values() {
            if cat.parent_id.as_deref() == Some(cat.id.as_str()) {
                return invalid(format!("category cycle: `{}` is its own parent", cat.id));
            }
            if let Some(parent) = &cat.parent_id {
                let Some(p) = cat_map.get(parent) else {
                    return invalid(format!(
                        "category `{}` references missing parent `{parent}`",
                        cat.id
                    ));
                };
                if !p.child_category_ids.contains(&cat.id) {
                    return invalid(format!(
                        "category `{}` names parent `{parent}` which does not list it",
                        cat.id
                    ));
                }
            }
            for child in &cat.child_category_ids {
                let Some(c) = cat_map.get(child) else {
                    return invalid(format!(
                        "category `{}` references missing child `{child}`",
                        cat.id
                    ));
                };
                if let Some(prev) = listed_child.insert(child.as_str(), cat.id.as_str()) {
                    if prev != cat.id {
                        return invalid(format!(
                            "category `{child}` is a child of both `{prev}` and `{}`",
                            cat.id
                        ));
                    }
                }
                if c.parent_id.as_deref() != Some(cat.id.as_str()) {
                    return invalid(format!(
                        "category `{child}` is listed under `{}` but its parent is {:?}",
                        cat.id, c.parent_id
                    ));
                }
            }
            for sid in &cat.skill_ids {
                let Some(skill) = skill_map.get(sid) else {
                    return invalid(format!(
                        "category `{}` references missing skill `{sid}`",
                        cat.id
                    ));
                };
                if !skill.category_ids.contains(&cat.id) {
                    return invalid(format!(
                        "category `{}` lists skill `{sid}` which does not list it",
                        cat.id
                    ));
                }
            }
        }

        // Parent chains must terminate.
        for cat in cat_map.values() {
            let mut seen = BTreeSet::new();
            let mut cur = cat;
            while let Some(parent) = &cur.parent_id {
                if !seen.insert(parent.as_str()) || parent == &cat.id {
                    return invalid(format!("category cycle through `{}`", cat.id));
                }
                cur = &cat_map[parent];
            }
        }

        let mut root_set = BTreeSet::new();
        for root in &root_category_ids {
            let Some(cat) = cat_map.get(root) else {
                return invalid(format!("root `{root}` is not a category"));
            };
            if cat.parent_id.is_some() {
                return invalid(format!("root `{root}` has a parent"));
            }
            if !root_set.insert(root.as_str()) {
                return invalid(format!("root `{root}` listed twice"));
            }
        }
        if let Some(orphan) = cat_map
            .values()
            .find(|c| c.parent_id.is_none() && !root_set.contains(c.id.as_str()))
        {
            return invalid(format!(
                "category `{}` has no parent but is not a root",
                orphan.id
            ));
        }

        let mut catalog = Catalog {
            skills: skill_map,
            categories: cat_map,
            root_category_ids,
            category_index: HashMap::new(),
            ranked_all: Vec::new(),
            ranked_by_category: HashMap::new(),
            subtree_popularity: HashMap::new(),
        };
        catalog.build_indices();
        Ok(catalog)
    }

    fn build_indices(&mut self) {
        self.category_index = self
            .categories
            .keys()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();

        let rank = |ids: &mut Vec<String>, skills: &BTreeMap<String, Skill>| {
            ids.sort_by(|a, b| {
                skills[b]
                    .popularity
                    .cmp(&skills[a].popularity)
                    .then_with(|| a.cmp(b))
            });
        };

        let mut all: Vec<String> = self.skills.keys().cloned().collect();
        rank(&mut all, &self.skills);
        self.ranked_all = all;

        for id in self.categories.keys() {
            let mut set = BTreeSet::new();
            let mut stack = vec![id.as_str()];
            while let Some(cur) = stack.pop() {
                let cat = &self.categories[cur];
                set.extend(cat.skill_ids.iter().cloned());
                stack.extend(cat.child_category_ids.iter().map(String::as_str));
            }
            let popularity = set.iter().map(|s| self.skills[s].popularity).sum();
            let mut ranked: Vec<String> = set.into_iter().collect();
            rank(&mut ranked, &self.skills);
            self.subtree_popularity.insert(id.clone(), popularity);
            self.ranked_by_category.insert(id.clone(), ranked);
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CatalogFile =
            serde_json::from_str(text).map_err(|e| Error::parse("catalog", e))?;
        if file.format_version != CATALOG_FORMAT_VERSION {
            return Err(Error::parse(
                "catalog",
                format!("unsupported format_version {}", file.format_version),
            ));
        }
        Self::new(file.skills, file.categories, file.root_category_ids)
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            format_version: CATALOG_FORMAT_VERSION,
            skills: self.skills.values().cloned().collect(),
            categories: self.categories.values().cloned().collect(),
            root_category_ids: self.root_category_ids.clone(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn skill(&self, id: &str) -> Option<&Skill> {
        self.skills.get(id)
    }

    pub fn category(&self, id: &str) -> Option<&Category> {
        self.categories.get(id)
    }

    pub fn skills(&self) -> impl Iterator<Item = &Skill> {
        self.skills.values()
    }

    pub fn categories(&self) -> impl Iterator<Item = &Category> {
        self.categories.values()
    }

    pub fn root_category_ids(&self) -> &[String] {
        &self.root_category_ids
    }

    pub fn skill_count(&self) -> usize {
        self.skills.len()
    }

    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    /// Stable dense index of a category, used by state encoding.
    pub fn category_index(&self, id: &str) -> Option<usize> {
        self.category_index.get(id).copied()
    }

    pub fn subtree_popularity(&self, id: &str) -> Option<u64> {
        self.subtree_popularity.get(id).copied()
    }

    /// True when `id` equals `ancestor` or lies below it.
    pub fn is_within(&self, id: &str, ancestor: &str) -> bool {
        let mut cur = Some(id);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.categories.get(c).and_then(|c| c.parent_id.as_deref());
        }
        false
    }

    /// Ranked skill ids of a category subtree, or of the whole catalog.
    fn ranked(&self, category_id: Option<&str>) -> Result<&[String]> {
        match category_id {
            None => Ok(&self.ranked_all),
            Some(id) => self
                .ranked_by_category
                .get(id)
                .map(Vec::as_slice)
                .ok_or_else(|| Error::UnknownCategory(id.to_string())),
        }
    }

    /// Up to `n` skills of a subtree by popularity (ties by id), skipping `exclude`.
    pub fn top_skills(
        &self,
        category_id: Option<&str>,
        n: usize,
        exclude: &BTreeSet<String>,
    ) -> Result<Vec<&Skill>> {
        Ok(self
            .ranked(category_id)?
            .iter()
            .filter(|id| !exclude.contains(*id))
            .take(n)
            .map(|id| &self.skills[id])
            .collect())
    }

    /// Number of skills in a subtree not in `exclude`.
    pub fn remaining_skills(
        &self,
        category_id: Option<&str>,
        exclude: &BTreeSet<String>,
    ) -> Result<usize> {
        Ok(self
            .ranked(category_id)?
            .iter()
            .filter(|id| !exclude.contains(*id))
            .count())
    }

    /// Up to `k` children of a category (roots when `None`) by subtree
    /// popularity (ties by id), skipping `exclude`.
    pub fn child_categories(
        &self,
        category_id: Option<&str>,
        k: usize,
        exclude: &BTreeSet<String>,
    ) -> Result<Vec<&Category>> {
        let children: &[String] = match category_id {
            None => &self.root_category_ids,
            Some(id) => {
                &self
                    .categories
                    .get(id)
                    .ok_or_else(|| Error::UnknownCategory(id.to_string()))?
                    .child_category_ids
            }
        };
        let mut candidates: Vec<&Category> = children
            .iter()
            .filter(|id| !exclude.contains(*id))
            .map(|id| &self.categories[id])
            .collect();
        candidates.sort_by(|a, b| {
            self.subtree_popularity[&b.id]
                .cmp(&self.subtree_popularity[&a.id])
                .then_with(|| a.id.cmp(&b.id))
        });
        candidates.truncate(k);
        Ok(candidates)
    }
}

/// Text bindings describing `skill` for the requested metadata type.
pub fn skill_metadata(skill: &Skill, metadata: MetadataType) -> Bindings {
    let mut b = Bindings::new();
    match metadata {
        MetadataType::NoMetadata => {}
        MetadataType::ShortDescription => {
            b.insert("description".into(), skill.short_description.clone());
        }
        MetadataType::Trending => {
            b.insert("trending".into(), skill.trending.to_string());
        }
        MetadataType::Recommended => {
            b.insert("recommended".into(), skill.recommended.to_string());
        }
        MetadataType::RatingReview => {
            b.insert("rating".into(), format!("{:.1}", skill.rating));
            b.insert("reviews".into(), skill.review_count.to_string());
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn skill(id: &str, cat: &str, popularity: u64) -> Skill {
        Skill {
            id: id.into(),
            name: id.to_uppercase(),
            category_ids: vec![cat.into()],
            popularity,
            rating: 4.0,
            review_count: 10,
            short_description: String::new(),
            trending: false,
            recommended: false,
        }
    }

    fn cat(id: &str, parent: Option<&str>, children: &[&str], skills: &[&str]) -> Category {
        Category {
            id: id.into(),
            name: id.into(),
            parent_id: parent.map(Into::into),
            child_category_ids: children.iter().map(|s| s.to_string()).collect(),
            skill_ids: skills.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn small() -> Catalog {
        Catalog::new(
            vec![
                skill("s9", "leaf", 9),
                skill("b1", "leaf", 4),
                skill("a2", "leaf", 4),
                skill("z", "other", 100),
            ],
            vec![
                cat("games", None, &["leaf"], &[]),
                cat("leaf", Some("games"), &[], &["s9", "b1", "a2"]),
                cat("other", None, &[], &["z"]),
            ],
            vec!["games".into(), "other".into()],
        )
        .unwrap()
    }

    #[test]
    fn top_skills_ranks_by_popularity_then_id() {
        let c = small();
        let none = BTreeSet::new();
        let top = c.top_skills(Some("games"), 1, &none).unwrap();
        assert_eq!(top[0].id, "s9");
        let mut ex = BTreeSet::new();
        ex.insert("s9".to_string());
        let top = c.top_skills(Some("leaf"), 1, &ex).unwrap();
        assert_eq!(top[0].id, "a2");
        let all: BTreeSet<String> = ["s9", "b1", "a2"].iter().map(|s| s.to_string()).collect();
        assert!(c.top_skills(Some("leaf"), 3, &all).unwrap().is_empty());
        assert_eq!(c.top_skills(None, 1, &none).unwrap()[0].id, "z");
        assert!(matches!(
            c.top_skills(Some("nope"), 1, &none),
            Err(Error::UnknownCategory(_))
        ));
    }

    #[test]
    fn child_categories_order_and_exhaustion() {
        let c = small();
        let none = BTreeSet::new();
        let roots = c.child_categories(None, 5, &none).unwrap();
        // "other" subtree popularity 100 beats "games" 17.
        assert_eq!(
            roots.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(),
            ["other", "games"]
        );
        assert_eq!(c.child_categories(Some("games"), 3, &none).unwrap().len(), 1);
        let ex: BTreeSet<String> = ["leaf".to_string()].into();
        assert!(c.child_categories(Some("games"), 1, &ex).unwrap().is_empty());
    }

    #[test]
    fn self_parent_is_a_cycle() {
        let err = Catalog::new(
            vec![],
            vec![cat("a", Some("a"), &["a"], &[])],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn longer_cycle_detected() {
        let err = Catalog::new(
            vec![],
            vec![cat("a", Some("b"), &["b"], &[]), cat("b", Some("a"), &["a"], &[])],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn rejects_bad_rating_and_dangling_refs() {
        let mut s = skill("x", "c", 1);
        s.rating = 5.5;
        let err = Catalog::new(vec![s], vec![cat("c", None, &[], &["x"])], vec!["c".into()])
            .unwrap_err();
        assert!(err.to_string().contains("rating"));

        let err = Catalog::new(
            vec![skill("x", "missing", 1)],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("missing category"));
    }

    #[test]
    fn empty_catalog_is_valid() {
        let c = Catalog::from_json(r#"{"format_version":1,"skills":[],"categories":[]}"#).unwrap();
        assert_eq!(c.skill_count(), 0);
        assert_eq!(c.category_count(), 0);
    }

    #[test]
    fn json_round_trip() {
        let c = small();
        assert_eq!(Catalog::from_json(&c.to_json()).unwrap(), c);
        assert!(Catalog::from_json("{not json").is_err());
    }

    #[test]
    fn metadata_bindings() {
        let mut s = skill("v", "c", 1);
        s.rating = 4.0;
        s.review_count = 912;
        let b = skill_metadata(&s, MetadataType::RatingReview);
        assert_eq!(b["rating"], "4.0");
        assert_eq!(b["reviews"], "912");
        assert!(skill_metadata(&s, MetadataType::NoMetadata).is_empty());
        s.trending = true;
        assert_eq!(skill_metadata(&s, MetadataType::Trending)["trending"], "true");
    }
}
