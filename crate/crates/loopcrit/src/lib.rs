//! Random-loop model on rooted regular trees.
//!
//! Links (crosses and double-bars) are placed on edges by Poisson processes
//! and decompose `V x [0,1)` into loops. The `theta`-weighted measure
//! reweights configurations by `theta^{number of loops}`. The toolkit
//! estimates the long-loop order parameter, verifies closed-form event
//! probabilities against Monte Carlo and brute-force enumeration, and
//! locates the critical inverse temperature by bisection.

pub mod analytics;
pub mod error;
pub mod experiments;
pub mod linkproc;
pub mod looptracer;
pub mod oracle;
pub mod parallel;
pub mod quantum_oracle;
pub mod topology;
pub mod weighting;

pub use error::LoopError;
pub use linkproc::{Link, LinkConfiguration, LinkKind};
pub use looptracer::LoopDecomposition;
pub use topology::Graph;
pub use weighting::Estimate;
