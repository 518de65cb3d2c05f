//! Multi-view recipe similarity.
//!
//! Recipes are compared through three views: lexical (hierarchical ingredient
//! descriptors matched one-to-one), semantic (embedding cosine under two
//! models) and nutritional (whole-recipe profile and matched per-ingredient
//! profiles). [`fusion`] combines them into one score per pair and builds
//! score tables; [`analysis`] summarizes tables; [`annotation`] and
//! [`server`] run expert judgment rounds whose agreed labels feed the
//! classifiers in [`eval_ml`].

pub mod analysis;
pub mod annotation;
pub mod assignment;
pub mod cli;
pub mod corpus;
pub mod eval_ml;
pub mod fusion;
pub mod lexical;
pub mod nutrition;
pub mod semantic;
pub mod server;
