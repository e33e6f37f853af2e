//! A discrete-state active-inference engine that grows generative models
//! from ordered observation streams.
//!
//! The engine infers latent states and paths by variational message passing,
//! gates Dirichlet parameter learning by expected information gain, selects
//! model structure by free-energy comparison, plans by expected free energy
//! over controllable paths, and embeds learned latent states on their
//! statistical manifold.

pub mod error;
pub mod geometry;
pub mod inference;
pub mod learner;
pub mod model;
pub mod planner;
pub mod special;
pub mod structure;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{DirichletTensor, Epoch, Factor, GenerativeModel, Modality, Observation};
pub use tensor::{Categorical, Tensor};
