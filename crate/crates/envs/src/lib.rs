//! Generative processes and curricula for the engine's experiments: the
//! sprite gridworld, the Tower of Hanoi, MNIST-format image ingestion, and
//! the teaching-sequence generator that emits structure-learning curricula
//! from any model.

pub mod curriculum;
pub mod gridworld;
pub mod hanoi;
pub mod mnist;
pub mod synth;

pub use curriculum::generate_curriculum;
pub use gridworld::{GridAction, GridWorld};
pub use hanoi::{hanoi_curriculum, HanoiWorld, StepResult};
pub use mnist::{load_mnist, load_mnist_bytes, MnistConfig, MnistData};
