//! Sequential design for computer experiments with mixed qualitative and
//! quantitative inputs.
//!
//! The surrogate is an additive Gaussian process with one component per
//! qualitative factor. New runs are chosen by a composite
//! exploitation/exploration criterion restricted to an adaptive region
//! built from confidence bounds, with EI, MU, SI and random one-shot
//! designs as baselines.

pub mod acquisition;
pub mod bench;
pub mod campaign;
pub mod design;
pub mod error;
pub mod kernel;
pub mod model;
pub mod optim;
pub mod rng;

pub use acquisition::{AcquisitionConfig, RegionBounds, Sense, Strategy};
pub use campaign::{run_campaign, run_ra, CampaignConfig, CampaignState, Phase};
pub use design::{CandidateSet, InitialDesignSpec, QualitativePlan};
pub use error::{Error, Result};
pub use kernel::{AdditiveKernel, DomainSpec, KernelParams, MixedPoint, QualitativeSpace};
pub use model::{fit, AgpModel, Dataset, FitConfig, PredictiveDist};
