//! Deterministic trace fixtures: two worked single-sample examples and a
//! 650-sample corpus whose per-family composition is frozen in tables.

mod builder;
pub mod corpus;
pub mod worked;

pub use builder::{sample_id, TraceBuilder};
pub use corpus::{family_specs, generate_corpus, GeneratedCorpus};
pub use worked::{natas_trace, tinba_trace};
