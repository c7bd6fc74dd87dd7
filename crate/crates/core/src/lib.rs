//! Sinusoidal Kolmogorov–Arnold networks and the baselines they are compared
//! against: FourierKAN, B-SplineKAN and plain MLPs, trained with a small
//! reverse-mode autodiff engine.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiments;
pub mod flops;
pub mod layers;
pub mod phase;
pub mod spline;
pub mod tensor;
pub mod training;

pub use error::{KanError, Result};
pub use layers::{Layer, ModelKind, ModelStack};
pub use tensor::Tensor;
