//! Subgroup discovery for small outcome-labelled tabular cohorts.
//!
//! Patients are embedded as latent states and driven through a contraction
//! by one feature at a time; the feature orders that make the outcome
//! cluster fastest are evolved, and the variables they favour are searched
//! exhaustively for short conjunctions ("personas") whose response rate
//! differs from the rest. Patients outside every validated persona are left
//! uncalled.
//!
//! ```no_run
//! use persona_engine::prelude::*;
//!
//! let cfg = PreprocessConfig::new("response");
//! let data = load_dataset("cohort.csv", &cfg)?;
//! let constraints = Constraints::for_n(data.n());
//! let candidates: Vec<usize> = (0..data.n_features()).collect();
//! let personas = search_personas(&data, &candidates, &constraints)?;
//! for p in &personas {
//!     println!("{} ({} patients)", p.conditions.len(), p.member_count);
//! }
//! # Ok::<(), persona_engine::Error>(())
//! ```

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod evolve;
pub mod harness;
pub mod ingest;
pub mod persona;
pub mod scoring;
pub mod seed;
pub mod strategist;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::dynamics::{AffinityCache, EngineConfig, FeatureSequence};
    pub use crate::error::{Error, Result};
    pub use crate::evolve::{evolve_loop, EvolveConfig, EvolveOutcome, RunResult};
    pub use crate::ingest::{load_dataset, Dataset, PreprocessConfig};
    pub use crate::persona::{relabel, search_personas, validate_personas, Constraints, Persona, Role};
    pub use crate::scoring::PurityBce;
    pub use crate::strategist::{HeuristicStrategist, Strategist};
}
