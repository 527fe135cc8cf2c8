//! Sparse user-activity detection in multi-cell massive MIMO with AMP.

pub mod amp;
pub mod detection;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod quadrature;
pub mod quantize;
pub mod rng;
pub mod scalar;
pub mod signal;
pub mod special;
pub mod state_evolution;

pub use error::{Error, Result};
pub use geometry::{CellLayout, NetworkConfig, Population};
pub use scalar::Real;

pub type Matrix = signal::ComplexMatrix<f64>;
pub type Scenario = signal::ScenarioInstance<f64>;
pub type AmpOutput = amp::MatchedFilterOutput<f64>;
pub type AmpOptions = amp::AmpConfig<f64>;
pub type SeTrace = state_evolution::StateEvolutionTrace<f64>;
pub type SeSolver = state_evolution::SeModel<f64>;
pub type Link = detection::Link<f64>;
pub type Quantizer = quantize::QuantizerSpec<f64>;
pub type Fading = geometry::FadingDist<f64>;
