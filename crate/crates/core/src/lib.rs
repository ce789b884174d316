//! Capital-market equilibria with shadow-costs of information, Gaussian
//! reference models and Bayesian investor views.
//!
//! The usual path through the crate:
//!
//! ```
//! use shadowcost::{fixtures, pipeline};
//! use shadowcost::scenario::{ScenarioInputs, SweepSection};
//!
//! let (market, shadow, views) = fixtures::five_asset();
//! let inputs = ScenarioInputs { market, shadow, views: Some(views), sweeps: SweepSection::default() };
//! let bundle = pipeline::run_inputs(&inputs, &Default::default()).unwrap();
//! assert!((bundle.table5.delta_lambda - 0.2967).abs() < 1e-4);
//! ```

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod domain;
pub mod equilibrium;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod reference;
pub mod scenario;
pub mod solver;
pub mod views;
pub mod whatif;

pub use domain::{InformationSet, MarketScenario, ShadowCostSpec, ValidationReport};
pub use error::{Error, Result};
pub use par::Execution;
pub use reference::{Gamma, ReferenceModel};
pub use scenario::ScenarioFile;
pub use views::{PosteriorDistribution, ViewKind, ViewSet};
