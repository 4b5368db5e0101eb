//! Behavioral simulator for CNN inference on a content-addressable memory.
//!
//! Dot products are replaced by a geometric approximation: every vector is
//! reduced to a *context* (an 8-bit minifloat L2 norm plus a sign-random-projection
//! hash), and the angle between two vectors is recovered from the hamming
//! distance of their hashes. A dynamic-size CAM model computes those hamming
//! distances for a whole tile of stored contexts per search.
//!
//! Crate layout:
//!
//! * [`geodot`]: hashing, norms, minifloat encoding, angle and cosine kernels.
//! * [`camarray`]: the dynamic word-length CAM and its event log.
//! * [`netexec`]: im2col, context generation, dataflow scheduling, post-processing.
//! * [`tuner`]: per-layer hash length selection.
//! * [`dotbench`]: Monte-Carlo error of the approximate product versus hash length.
//! * [`costmodel`]: folding event traces into cycles/utilization/energy, systolic baseline.
//! * [`modelio`]: binary model/dataset containers and TOML configs.

pub mod camarray;
pub mod costmodel;
pub mod dotbench;
mod error;
pub mod geodot;
pub mod modelio;
pub mod netexec;
pub mod trace;
pub mod tuner;

pub use camarray::{CamConfig, CamEvent, CamState, RowMatch};
pub use costmodel::{CostReport, CostTable, LayerCost};
pub use error::{Error, Result};
pub use geodot::{Context, CosineModel, HashBits, Minifloat8, ProjectionMatrix};
pub use modelio::{Dataset, FormatError};
pub use netexec::{ActivationTensor, Dataflow, DotMode, ExecutionPlan, Layer, NetworkModel, RunOutput};
pub use trace::{CostEvent, CostTrace};
pub use tuner::{TuneConfig, TuneResult};
