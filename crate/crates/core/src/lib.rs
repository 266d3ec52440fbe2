//! Reconstruction of unsteady flow fields from sparse sensors.
//!
//! Snapshots are reduced with proper orthogonal decomposition ([`pod`]), the
//! modal dynamics are modelled by a calibrated quadratic Galerkin system
//! ([`rom`], [`calibration`]), and modal coefficients are estimated from
//! sensor readings ([`sensors`]) either instantaneously
//! ([`estimators`]: LSQ, LSE, QSE, SLSE) or dynamically over a time window
//! ([`observer`]: K-LSQ, K-LSE). [`synth`] generates model-consistent
//! ground truth and [`metrics`] scores estimates against it.

pub mod calibration;
pub mod collocation;
pub mod error;
pub mod estimators;
pub mod grid;
pub mod interp;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod measurement;
pub mod observer;
pub mod par;
pub mod pod;
pub mod record;
pub mod rom;
pub mod sensors;
pub mod snapshot;
pub mod synth;
mod table;
pub mod trajectory;

pub use error::{Error, Result};
pub use grid::{inner_product, Grid, VectorField};
pub use io::FileFormat;
pub use measurement::MeasurementRecord;
pub use pod::{compute_pod, PodBasis};
pub use rom::{QuadTensor, RomCoefficients};
pub use snapshot::SnapshotSet;
pub use trajectory::CoefficientTrajectory;
