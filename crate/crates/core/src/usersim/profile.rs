use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Style {
    Brief,
    Verbose,
}

/// Who the simulated (or live) user is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserProfile {
    pub first_time: bool,
    #[serde(default = "default_style")]
    pub style: Style,
    /// Rejected offers tolerated before the user gives up.
    #[serde(default = "default_patience")]
    pub patience: u32,
    #[serde(default)]
    pub preferred_categories: Vec<String>,
    #[serde(default = "default_accept")]
    pub accept_probability: f64,
}

fn default_style() -> Style {
    Style::Brief
}

fn default_patience() -> u32 {
    3
}

fn default_accept() -> f64 {
    0.8
}

impl UserProfile {
    pub fn new(first_time: bool) -> Self {
        Self {
            first_time,
            style: default_style(),
            patience: default_patience(),
            preferred_categories: Vec::new(),
            accept_probability: default_accept(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.accept_probability) {
            return Err(Error::Config(format!(
                "accept_probability {} outside [0, 1]",
                self.accept_probability
            )));
        }
        Ok(())
    }

    /// Draws a persona. Preferred root categories are drawn with weight
    /// sqrt(subtree popularity) + 1, so niche roots still get fans.
    pub fn sample(catalog: &Catalog, first_time_share: f64, rng: &mut impl Rng) -> Self {
        let first_time = rng.random_bool(first_time_share.clamp(0.0, 1.0));
        let style = if rng.random_bool(0.5) {
            Style::Verbose
        } else {
            Style::Brief
        };
        let patience = rng.random_range(2..=4);
        let accept_probability = rng.random_range(0.6..0.95);
        let roots = catalog.root_category_ids();
        let weights: Vec<f64> = roots
            .iter()
            .map(|r| (catalog.subtree_popularity(r).unwrap_or(0) as f64).sqrt() + 1.0)
            .collect();
        let total: f64 = weights.iter().sum();
        let n_pref = if roots.len() > 1 && rng.random_bool(0.4) { 2 } else { 1 };
        let mut preferred = Vec::new();
        while !roots.is_empty() && preferred.len() < n_pref.min(roots.len()) {
            let mut x = rng.random_range(0.0..total);
            let mut pick = roots.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if x < *w {
                    pick = i;
                    break;
                }
                x -= w;
            }
            if !preferred.contains(&roots[pick]) {
                preferred.push(roots[pick].clone());
            }
        }
        Self {
            first_time,
            style,
            patience,
            preferred_categories: preferred,
            accept_probability,
        }
    }

    /// Whether a category lies in (or above) one of the preferred subtrees.
    pub fn likes_category(&self, catalog: &Catalog, category_id: &str) -> bool {
        self.preferred_categories
            .iter()
            .any(|p| catalog.is_within(category_id, p) || catalog.is_within(p, category_id))
    }

    pub fn likes_skill(&self, catalog: &Catalog, skill_id: &str) -> bool {
        catalog.skill(skill_id).is_some_and(|s| {
            s.category_ids.iter().any(|c| {
                self.preferred_categories
                    .iter()
                    .any(|p| catalog.is_within(c, p))
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::generate_synthetic_catalog;
    use rand::SeedableRng;

    #[test]
    fn sampled_profiles_are_valid() {
        let catalog = generate_synthetic_catalog(7, 300, 12, 40).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut first = 0;
        for _ in 0..2000 {
            let p = UserProfile::sample(&catalog, 0.6, &mut rng);
            p.validate().unwrap();
            assert!(!p.preferred_categories.is_empty());
            first += p.first_time as usize;
        }
        let share = first as f64 / 2000.0;
        assert!((share - 0.6).abs() < 0.04, "{share}");
    }

    #[test]
    fn rejects_out_of_range() {
        let mut p = UserProfile::new(true);
        p.accept_probability = 1.5;
        assert!(p.validate().is_err());
        p.accept_probability = 0.5;
        p.patience = 0;
        assert!(p.validate().is_err());
    }
}
