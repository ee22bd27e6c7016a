//! LQG control of the inverted pendulum on a cart, in the classical
//! four-state form and an acceleration-augmented six-state form driven by
//! inertial measurements.
//!
//! ```
//! use aipoc_core::{simengine, ScenarioConfig};
//!
//! let trace = simengine::run(&ScenarioConfig::default()).unwrap();
//! assert_eq!(trace.len(), 3001);
//! ```

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod linearize;
pub mod model;
pub mod simengine;
pub mod synthesis;

pub use error::{Error, Result};
pub use model::{ModelParams, StateVec, Variant};
pub use simengine::{ScenarioConfig, SimTrace, Status};
pub use synthesis::{NoiseConfig, TuningProfile};
