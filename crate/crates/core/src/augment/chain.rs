//! Random augmentation chains used during contrastive training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blur::gaussian_blur;
use super::geometry::{apply_affine_into, apply_flip, Affine, Mat2, Warped, DOMAIN_EPS};
use super::intensity::{scale_attenuation, scale_thickness};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::ParameterMaps;

/// Sampling ranges and probabilities of the augmentation chain.
///
/// Text form (TOML), every key optional:
///
/// ```toml
/// crop = 128                   # output side in pixels
/// affine_probability = 1.0
/// scale = [0.9, 1.3]           # per axis
/// rotation_deg = [-180.0, 180.0]
/// shear_deg = [-20.0, 20.0]    # per axis
/// flip_probability = 0.5       # per axis
/// thickness_log2 = [-1.0, 1.0] # gamma_t = 2^U(range)
/// attenuation_log2 = [-1.0, 1.0]
/// blur_probability = 0.5
/// blur_sigma = [0.0, 2.0]
/// max_affine_draws = 64
/// seed = 0
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    pub crop: usize,
    pub affine_probability: f64,
    pub scale: [f64; 2],
    pub rotation_deg: [f64; 2],
    pub shear_deg: [f64; 2],
    pub flip_probability: f64,
    pub thickness_log2: [f64; 2],
    pub attenuation_log2: [f64; 2],
    pub blur_probability: f64,
    pub blur_sigma: [f64; 2],
    /// Affine draws whose crop would reach outside the source are redrawn.
    pub max_affine_draws: usize,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            crop: 128,
            affine_probability: 1.0,
            scale: [0.9, 1.3],
            rotation_deg: [-180.0, 180.0],
            shear_deg: [-20.0, 20.0],
            flip_probability: 0.5,
            thickness_log2: [-1.0, 1.0],
            attenuation_log2: [-1.0, 1.0],
            blur_probability: 0.5,
            blur_sigma: [0.0, 2.0],
            max_affine_draws: 64,
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    /// All ranges collapsed onto identity values: the chain reduces to a center crop.
    pub fn identity(crop: usize) -> Self {
        Self {
            crop,
            affine_probability: 0.0,
            scale: [1.0, 1.0],
            rotation_deg: [0.0, 0.0],
            shear_deg: [0.0, 0.0],
            flip_probability: 0.0,
            thickness_log2: [0.0, 0.0],
            attenuation_log2: [0.0, 0.0],
            blur_probability: 0.0,
            blur_sigma: [0.0, 0.0],
            max_affine_draws: 64,
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Format(format!("augmentation spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64, name: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be a probability")))
            }
        };
        let range = |r: [f64; 2], name: &str| {
            if r[0] <= r[1] && r.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be an ordered finite range")))
            }
        };
        prob(self.affine_probability, "affine_probability")?;
        prob(self.flip_probability, "flip_probability")?;
        prob(self.blur_probability, "blur_probability")?;
        range(self.scale, "scale")?;
        range(self.rotation_deg, "rotation_deg")?;
        range(self.shear_deg, "shear_deg")?;
        range(self.thickness_log2, "thickness_log2")?;
        range(self.attenuation_log2, "attenuation_log2")?;
        range(self.blur_sigma, "blur_sigma")?;
        if self.scale[0] <= 0.0 {
            return Err(Error::invalid("scale must be positive"));
        }
        if self.shear_deg[0] <= -45.0 || self.shear_deg[1] >= 45.0 {
            return Err(Error::invalid("shear must lie strictly within (-45, 45) degrees"));
        }
        if self.blur_sigma[0] < 0.0 {
            return Err(Error::invalid("blur sigma must be non-negative"));
        }
        if self.crop == 0 {
            return Err(Error::invalid("crop must be positive"));
        }
        Ok(())
    }
}

/// A concrete draw of every transform in the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationChain {
    /// Linear part of the affine transform about the patch center.
    pub matrix: Mat2,
    pub crop: usize,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    pub thickness: f64,
    pub attenuation: f64,
    pub blur_sigma: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

fn crop_fits(matrix: &Mat2, source: (usize, usize), crop: usize) -> bool {
    let Some(inv) = matrix.inverse() else {
        return false;
    };
    let (h, w) = source;
    let c_src = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let half = (crop as f64 - 1.0) / 2.0;
    [(-half, -half), (half, -half), (-half, half), (half, half)]
        .iter()
        .all(|&(dx, dy)| {
            let (sx, sy) = inv.apply(dx, dy);
            let (x, y) = (c_src.0 + sx, c_src.1 + sy);
            x >= -DOMAIN_EPS && y >= -DOMAIN_EPS && x <= w as f64 - 1.0 + DOMAIN_EPS && y <= h as f64 - 1.0 + DOMAIN_EPS
        })
}

impl AugmentationChain {
    pub fn identity(crop: usize) -> Self {
        Self {
            matrix: Mat2::IDENTITY,
            crop,
            flip_horizontal: false,
            flip_vertical: false,
            thickness: 1.0,
            attenuation: 1.0,
            blur_sigma: 0.0,
        }
    }

    /// Draw a chain for a source patch of `source = (height, width)` pixels.
    /// Draw order is fixed so a seeded generator reproduces the chain.
    pub fn sample<R: Rng + ?Sized>(spec: &AugmentationSpec, source: (usize, usize), rng: &mut R) -> Self {
        let mut matrix = Mat2::IDENTITY;
        if rng.random_bool(spec.affine_probability) {
            let mut accepted = None;
            let mut rotation = 0.0;
            for _ in 0..spec.max_affine_draws.max(1) {
                let sx = uniform(rng, spec.scale);
                let sy = uniform(rng, spec.scale);
                rotation = uniform(rng, spec.rotation_deg).to_radians();
                let hx = uniform(rng, spec.shear_deg).to_radians();
                let hy = uniform(rng, spec.shear_deg).to_radians();
                let m = Mat2::rotation(rotation)
                    .mul(&Mat2::shear(hx, hy))
                    .mul(&Mat2::diag(sx, sy));
                if crop_fits(&m, source, spec.crop) {
                    accepted = Some(m);
                    break;
                }
            }
            // a pure rotation of the crop always fits a source at least sqrt(2) larger
            matrix = accepted.unwrap_or_else(|| Mat2::rotation(rotation));
        }
        let flip_horizontal = rng.random_bool(spec.flip_probability);
        let flip_vertical = rng.random_bool(spec.flip_probability);
        let thickness = 2f64.powf(uniform(rng, spec.thickness_log2));
        let attenuation = 2f64.powf(uniform(rng, spec.attenuation_log2));
        let blur_sigma = if rng.random_bool(spec.blur_probability) {
            uniform(rng, spec.blur_sigma)
        } else {
            0.0
        };
        Self {
            matrix,
            crop: spec.crop,
            flip_horizontal,
            flip_vertical,
            thickness,
            attenuation,
            blur_sigma,
        }
    }

    /// Apply in order: affine + center crop, flips, thickness, attenuation, blur.
    pub fn apply(&self, maps: &ParameterMaps) -> Result<Warped> {
        let (h, w) = maps.dims();
        if self.crop > h || self.crop > w {
            return Err(Error::invalid(format!(
                "crop {} larger than the {w}x{h} source",
                self.crop
            )));
        }
        let mut warped = if self.matrix.is_identity() {
            let maps = maps.center_crop(self.crop)?;
            Warped {
                in_domain: Grid::filled(self.crop, self.crop, true),
                maps,
                singular: 0,
            }
        } else {
            let c_src = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
            let c_dst = ((self.crop as f64 - 1.0) / 2.0, (self.crop as f64 - 1.0) / 2.0);
            let affine = Affine::about_centers(self.matrix, c_src, c_dst);
            apply_affine_into(maps, &affine, self.crop, self.crop)?
        };
        let mut out = apply_flip(&warped.maps, self.flip_horizontal, self.flip_vertical);
        if self.flip_horizontal {
            warped.in_domain = warped.in_domain.flip_horizontal();
        }
        if self.flip_vertical {
            warped.in_domain = warped.in_domain.flip_vertical();
        }
        out = scale_thickness(&out, self.thickness)?;
        out = scale_attenuation(&out, self.attenuation)?;
        out = gaussian_blur(&out, self.blur_sigma)?;
        warped.maps = out;
        Ok(warped)
    }
}

/// Draw and apply a chain in one step.
pub fn sample_augmentation<R: Rng + ?Sized>(
    spec: &AugmentationSpec,
    maps: &ParameterMaps,
    rng: &mut R,
) -> Result<(AugmentationChain, Warped)> {
    let chain = AugmentationChain::sample(spec, maps.dims(), rng);
    let out = chain.apply(maps)?;
    Ok((chain, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn textured(side: usize) -> ParameterMaps {
        let mut maps = ParameterMaps::constant(side, side, 0.5, 0.3, 0.4, 1.0);
        maps.transmittance = Grid::from_fn(side, side, |x, y| {
            0.3 + 0.2 * ((x as f64 * 0.3).sin() * (y as f64 * 0.2).cos())
        });
        maps.direction = Grid::from_fn(side, side, |x, y| ((x + 2 * y) as f64 * 0.05) % 3.0);
        maps
    }

    #[test]
    fn seeded_chains_repeat() {
        let maps = textured(48);
        let spec = AugmentationSpec {
            crop: 32,
            ..Default::default()
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            sample_augmentation(&spec, &maps, &mut rng).unwrap()
        };
        let (c1, a) = run();
        let (c2, b) = run();
        assert_eq!(c1, c2);
        assert_eq!(a.maps, b.maps);
    }

    #[test]
    fn identity_spec_is_center_crop() {
        let maps = textured(48);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, out) = sample_augmentation(&AugmentationSpec::identity(32), &maps, &mut rng).unwrap();
        assert_eq!(out.maps, maps.center_crop(32).unwrap());
    }

    #[test]
    fn default_draws_stay_in_domain() {
        let maps = textured(192);
        let spec = AugmentationSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let chain = AugmentationChain::sample(&spec, maps.dims(), &mut rng);
            assert!(crop_fits(&chain.matrix, (192, 192), 128));
        }
    }

    #[test]
    fn thickness_scale_is_log_uniform() {
        let spec = AugmentationSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut g: Vec<f64> = (0..1000)
            .map(|_| AugmentationChain::sample(&spec, (192, 192), &mut rng).thickness)
            .collect();
        g.sort_by(f64::total_cmp);
        let median = 0.5 * (g[499] + g[500]);
        assert!((0.95..=1.05).contains(&median), "median {median}");
        assert!(g[0] >= 0.5 && g[999] <= 2.0);
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = AugmentationSpec {
            crop: 64,
            seed: 3,
            ..Default::default()
        };
        assert_eq!(AugmentationSpec::from_toml(&spec.to_toml()).unwrap(), spec);
        assert!(AugmentationSpec::from_toml("bogus = 1").is_err());
        assert!(AugmentationSpec::from_toml("blur_probability = 2.0").is_err());
    }
}
