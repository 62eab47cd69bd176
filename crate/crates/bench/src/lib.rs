//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use skillscout_core::catalog::generate_synthetic_catalog;
use skillscout_core::dialog::{DialogEnv, PromptCatalog};

/// Full-size synthetic catalog (1,903 skills, 191 categories).
pub fn desk_env() -> DialogEnv {
    let catalog = generate_synthetic_catalog(1, 1903, 48, 191).expect("desk catalog shape is feasible");
    DialogEnv::new(Arc::new(catalog), Arc::new(PromptCatalog::default()))
}
