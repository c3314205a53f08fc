//! Physically consistent transformations of parameter maps.

mod blur;
mod chain;
mod geometry;
mod intensity;
mod resample;

pub(crate) use blur::convolve_separable_pass;
pub use blur::{blur_scalar, gaussian_blur, gaussian_kernel};
pub use chain::{sample_augmentation, AugmentationChain, AugmentationSpec};
pub use geometry::{
    apply_affine, apply_affine_into, apply_flip, apply_warp, correct_direction, correct_direction_value, Affine,
    CorrectedDirections, DisplacementField, Mat2, Warped,
};
pub use intensity::{scale_attenuation, scale_thickness};
pub use resample::{resample, resample_point, Phasor};
