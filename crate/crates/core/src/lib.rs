//! Transfer of barrier-certificate safety controllers between discrete-time
//! systems via a learned inverse-dynamics controller.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix it to `f64`, which is what configs, benchmarks and file formats use.

pub mod benchmarks;
pub mod certify;
pub mod config;
pub mod error;
pub mod grid;
pub mod lipschitz;
pub mod model;
pub mod neural;
pub mod report;
pub mod scalar;
pub mod simulate;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type AxisBox = model::AxisBox<f64>;
pub type RegionSpec = model::RegionSpec<f64>;
pub type DtSystem = model::DtSystem<f64>;
pub type ControlLaw = model::ControlLaw<f64>;
pub type BarrierCertificate = model::BarrierCertificate<f64>;
pub type SafetySpec = model::SafetySpec<f64>;
pub type SampleGrid = grid::SampleGrid<f64>;
pub type Mlp = neural::Mlp<f64>;
pub type CertificationVerdict = certify::CertificationVerdict<f64>;
pub type TransferReport = transfer::TransferReport<f64>;
pub type Trajectory = simulate::Trajectory<f64>;
pub type BenchmarkDef = benchmarks::BenchmarkDef<f64>;
