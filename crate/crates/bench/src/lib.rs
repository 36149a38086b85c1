//! Shared fixtures for the criterion benches.

use debtfree_core::pipeline::Dataset;
use debtfree_core::synthetic::{generate, SyntheticSpec};

/// A labeled synthetic dataset with `projects` projects of `comments` comments.
pub fn dataset(projects: usize, comments: usize) -> Dataset {
    let satd = comments / 10;
    Dataset::new(
        generate(&SyntheticSpec::uniform(projects, comments, satd, 7)),
        4000,
    )
    .expect("synthetic dataset")
}
