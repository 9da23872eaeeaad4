//! Multi-task bi-objective evolutionary search over feature-fusion strategies.
//!
//! Every task owns a pool of `2T - 1` per-residue feature matrices. An
//! individual picks a subset of pool entries, an elementwise operator per
//! entry and two blending weights (the feature-operator-weight genotype).
//! Fitness is scored by a focal-loss logistic proxy head as the pair
//! `(1 - AUPRC, FPR)` on a held-out validation tail, both minimized.
//! Populations evolve per task under NSGA-III selection while an external
//! neighborhood built from Gray Relational Grades lets elites from other
//! tasks act as mates.
//!
//! Module map:
//!
//! - [`model`]: domain types, semantically aligned pool indices, genotype vectorization
//! - [`fusion`]: standardization and the recursive weighted fusion
//! - [`metrics`]: confusion counts, AUPRC, MCC and friends
//! - [`proxy`]: focal-loss logistic head and individual evaluation
//! - [`nsga3`]: dominance sorting, reference points, niching selection
//! - [`variation`]: tournament, crossover, the three mutations, batch DE
//! - [`enm`]: Gray Relational Grade and cross-task neighborhoods
//! - [`driver`]: the generation loop, strategy selection and inference
//! - [`data_io`]: FMAT files, pool manifests, synthetic benchmark generator

pub mod data_io;
pub mod driver;
pub mod enm;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod model;
pub mod nsga3;
pub mod proxy;
pub mod rng;
pub mod variation;

pub use error::{Error, Result};
