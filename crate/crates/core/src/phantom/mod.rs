//! Synthetic fiber phantoms with analytic ground truth.

mod benchmarks;
mod generate;
mod spec;

pub use benchmarks::{
    consistency_phantom_spec, cortex_phantom, cortex_phantom_spec, two_texture_benchmark, two_texture_spec,
    TwoTextureRegions,
};
pub use generate::{generate, GroundTruth, Phantom, SectionJitter, SectionTruth, TileTruth};
pub use spec::{Annulus, Bundle, Crossing, Fan, NoiseSpec, PhantomSpec, Primitive, Shape, TextureSpec, Tissue};
