//! Seeded synthetic catalogs shaped like a game-skill store.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto};

use super::{Catalog, Category, Skill};
use crate::error::{Error, Result};

const GENRES: &[&str] = &[
    "Trivia", "History", "Word", "Mystery", "Adventure", "Family", "Kids", "Puzzle",
    "Sports", "Music", "Geography", "Math", "Science", "Animal", "Movie", "Space",
    "Story", "Strategy", "Card", "Board", "Dice", "Guessing", "Memory", "Riddle",
    "Escape", "Horror", "Fantasy", "Pirate", "Detective", "Quiz Show", "Role Playing",
    "Echo Button", "Multiplayer", "Party", "Spelling", "Language", "Art", "Cooking",
    "Nature", "Ocean", "Dinosaur", "Superhero", "Comedy", "Holiday", "Travel", "Car",
    "Fitness", "Dance", "Poetry", "Robot", "Zombie", "Western", "Medieval", "Ninja",
];

const MODIFIERS: &[&str] = &[
    "Classic", "Quick", "Daily", "Junior", "Expert", "Retro", "Team", "Solo", "Speed",
    "Bedtime", "Weekend", "Pocket", "Epic", "Tiny", "Mega", "Cozy", "Silly", "Smart",
    "Wild", "Hidden", "Golden", "Secret", "Lucky", "Brainy", "Cosmic", "Friendly",
    "Spooky", "Sunny", "Mini", "Grand",
];

const ADJECTIVES: &[&str] = &[
    "Amazing", "Ultimate", "Super", "Great", "Little", "Daily", "Magic", "Crazy",
    "Happy", "Mighty", "Clever", "Fantastic", "Royal", "Brave", "Curious", "Jolly",
];

const NOUNS: &[&str] = &[
    "Quiz", "Challenge", "Master", "Quest", "Journey", "Showdown", "Game", "Club",
    "Party", "Lab", "Academy", "Battle", "Hunt", "Trail", "Arena", "League",
];

fn slug(name: &str) -> String {
    name.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

fn unique(base: String, taken: &mut BTreeSet<String>) -> String {
    if taken.insert(base.clone()) {
        return base;
    }
    (2..)
        .map(|i| format!("{base} {i}"))
        .find(|candidate| taken.insert(candidate.clone()))
        .expect("unbounded suffixes")
}

/// Generates a validated catalog; a pure function of its arguments.
///
/// Popularity follows a Pareto tail, ratings a normal around 4.0 clipped
/// to [1, 5]. Every category is reachable from a root and every skill sits
/// in at least one leaf.
pub fn generate_synthetic_catalog(
    seed: u64,
    n_skills: usize,
    n_roots: usize,
    n_total_categories: usize,
) -> Result<Catalog> {
    if n_roots == 0 || n_roots > n_total_categories {
        return Err(Error::InfeasibleShape(format!(
            "{n_roots} roots cannot fit in {n_total_categories} categories"
        )));
    }
    if n_skills < n_roots {
        return Err(Error::InfeasibleShape(format!(
            "{n_skills} skills cannot populate {n_roots} root categories"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Category forest; `genre` is inherited from the root.
    struct Node {
        id: String,
        name: String,
        genre: String,
        parent: Option<usize>,
        depth: usize,
        children: Vec<usize>,
        skills: Vec<String>,
    }
    let mut names = BTreeSet::new();
    let mut ids = BTreeSet::new();
    let mut nodes: Vec<Node> = Vec::with_capacity(n_total_categories);
    for i in 0..n_roots {
        let genre = GENRES
            .get(i)
            .map(|g| g.to_string())
            .unwrap_or_else(|| format!("Genre {}", i + 1));
        let name = unique(genre.clone(), &mut names);
        let id = unique(slug(&name), &mut ids);
        nodes.push(Node {
            id,
            name,
            genre,
            parent: None,
            depth: 0,
            children: Vec::new(),
            skills: Vec::new(),
        });
    }
    for _ in n_roots..n_total_categories {
        let shallow: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].depth < 2).collect();
        let parent = if rng.random_bool(0.75) {
            rng.random_range(0..n_roots)
        } else {
            shallow[rng.random_range(0..shallow.len())]
        };
        let modifier = MODIFIERS[rng.random_range(0..MODIFIERS.len())];
        let name = unique(format!("{modifier} {}", nodes[parent].name), &mut names);
        let id = unique(slug(&name), &mut ids);
        let idx = nodes.len();
        let genre = nodes[parent].genre.clone();
        let depth = nodes[parent].depth + 1;
        nodes.push(Node {
            id,
            name,
            genre,
            parent: Some(parent),
            depth,
            children: Vec::new(),
            skills: Vec::new(),
        });
        nodes[parent].children.push(idx);
    }

    let mut leaves: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].children.is_empty()).collect();
    leaves.shuffle(&mut rng);
    // One leaf under each root first, so no root is empty, then the rest.
    let root_of = |mut i: usize| {
        while let Some(p) = nodes[i].parent {
            i = p;
        }
        i
    };
    let mut seeded_roots = BTreeSet::new();
    let (mut first, rest): (Vec<usize>, Vec<usize>) =
        leaves.iter().partition(|&&l| seeded_roots.insert(root_of(l)));
    first.extend(rest);
    let leaves = first;

    let popularity = Pareto::new(10.0, 1.1).expect("valid pareto");
    let rating = Normal::new(4.0, 0.6).expect("valid normal");
    let mut skill_names = BTreeSet::new();
    let mut skills = Vec::with_capacity(n_skills);
    for i in 0..n_skills {
        let home = if i < leaves.len() {
            leaves[i]
        } else {
            leaves[rng.random_range(0..leaves.len())]
        };
        let mut homes = vec![home];
        if leaves.len() > 1 && rng.random_bool(0.15) {
            let extra = leaves[rng.random_range(0..leaves.len())];
            if extra != home {
                homes.push(extra);
            }
        }
        let adjective = ADJECTIVES[rng.random_range(0..ADJECTIVES.len())];
        let noun = NOUNS[rng.random_range(0..NOUNS.len())];
        let genre = nodes[home].genre.clone();
        let name = unique(format!("{adjective} {genre} {noun}"), &mut skill_names);
        let id = format!("skill-{:04}", i + 1);
        let pop: f64 = popularity.sample(&mut rng);
        let pop = pop.min(1e7) as u64;
        let stars: f64 = rating.sample(&mut rng);
        let stars = (stars.clamp(1.0, 5.0) * 10.0).round() / 10.0;
        let reviews = (pop as f64 * rng.random_range(0.05..0.5)) as u64;
        let trending = rng.random_bool(0.08);
        let recommended = rng.random_bool(0.12);
        for &h in &homes {
            nodes[h].skills.push(id.clone());
        }
        skills.push(Skill {
            id,
            short_description: format!(
                "a {} {} game for {}",
                adjective.to_lowercase(),
                genre.to_lowercase(),
                if rng.random_bool(0.5) { "the whole family" } else { "solo play" }
            ),
            name,
            category_ids: homes.iter().map(|&h| nodes[h].id.clone()).collect(),
            popularity: pop,
            rating: stars,
            review_count: reviews,
            trending,
            recommended,
        });
    }

    let id_of: BTreeMap<usize, String> = nodes.iter().enumerate().map(|(i, n)| (i, n.id.clone())).collect();
    let categories = nodes
        .iter()
        .map(|n| Category {
            id: n.id.clone(),
            name: n.name.clone(),
            parent_id: n.parent.map(|p| id_of[&p].clone()),
            child_category_ids: n.children.iter().map(|c| id_of[c].clone()).collect(),
            skill_ids: n.skills.clone(),
        })
        .collect();
    let roots = nodes[..n_roots].iter().map(|n| n.id.clone()).collect();
    Catalog::new(skills, categories, roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_counts() {
        let c = generate_synthetic_catalog(7, 1903, 48, 191).unwrap();
        assert_eq!(c.skill_count(), 1903);
        assert_eq!(c.category_count(), 191);
        assert_eq!(c.root_category_ids().len(), 48);
        for skill in c.skills() {
            assert!(skill
                .category_ids
                .iter()
                .all(|id| c.category(id).unwrap().is_leaf()));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_catalog(7, 10, 2, 5).unwrap();
        let b = generate_synthetic_catalog(7, 10, 2, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        let c = generate_synthetic_catalog(8, 10, 2, 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_shape() {
        assert!(matches!(
            generate_synthetic_catalog(1, 5, 6, 6 - 1),
            Err(Error::InfeasibleShape(_))
        ));
        assert!(matches!(
            generate_synthetic_catalog(1, 5, 6, 6),
            Err(Error::InfeasibleShape(_))
        ));
    }

    #[test]
    fn every_root_has_skills() {
        let c = generate_synthetic_catalog(5, 48, 48, 191).unwrap();
        let none = BTreeSet::new();
        for root in c.root_category_ids() {
            assert!(!c.top_skills(Some(root), 1, &none).unwrap().is_empty(), "{root}");
        }
    }

    #[test]
    fn every_category_reachable_from_a_root() {
        let c = generate_synthetic_catalog(3, 200, 10, 40).unwrap();
        for cat in c.categories() {
            assert!(c
                .root_category_ids()
                .iter()
                .any(|r| c.is_within(&cat.id, r)));
        }
    }
}
