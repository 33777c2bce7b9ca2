//! Scenario replay and corpus generation for the dialogue engine.
//!
//! [`scenario`] defines the TOML script format, [`runner`] replays scripts and
//! reports the first mismatch per scenario, [`generator`] produces seeded
//! self-chat dialogues that double as scenarios and training data.

pub mod generator;
pub mod runner;
pub mod scenario;

pub use generator::{generate_corpus, Corpus, GeneratorError, Phrasings};
pub use runner::{run_all, run_scenario, Coverage, Failure, RunReport, ScenarioResult};
pub use scenario::{bundled_dir, load, parse_scenarios, to_toml, Scenario, ScenarioError, ScriptTurn, Terminal};
