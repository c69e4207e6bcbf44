//! Periodically weighted Aztec diamond: exact Kasteleyn oracle, contour-integral
//! correlation kernel, domino-shuffling sampler and the GUE-corners limit.

pub mod config;
pub mod convergence;
pub mod error;
pub mod gue;
pub mod kasteleyn;
pub mod kernel;
pub mod model;
pub mod poly;
pub mod sampler;
pub mod spectral;
pub mod stats;
pub mod surface;

pub use error::{Error, Result};
pub use model::{Diamond, Edge, EdgeKind, Vertex, WeightConfig};
pub use spectral::SpectralData;
