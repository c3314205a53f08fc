//! Fiber-architecture texture analysis for 3D polarized light imaging.
//!
//! Parameter maps (transmittance, direction, retardation) are the common
//! currency: they are recovered from intensity profiles, augmented with
//! physically consistent transforms, described by classical texture features
//! or a contrastive encoder, and analysed by clustering and probes.

pub mod analysis;
pub mod augment;
pub mod context;
pub mod contrastive;
pub mod error;
pub mod features;
pub mod grid;
pub mod io;
pub mod phantom;
pub mod pipeline;
pub mod signal;

pub use error::{Error, Result};
pub use grid::Grid;
pub use signal::{IntensityStack, OpticsConfig, ParameterMaps};
