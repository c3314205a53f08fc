use super::generate::{generate, Phantom};
use super::spec::{Annulus, Bundle, Crossing, Fan, NoiseSpec, PhantomSpec, Primitive, Shape, TextureSpec};
use crate::error::Result;

/// Region ids of [`two_texture_benchmark`].
pub struct TwoTextureRegions;

impl TwoTextureRegions {
    pub const BACKGROUND: usize = 0;
    pub const PARALLEL: usize = 1;
    pub const CROSSING: usize = 2;
}

/// Three 512 x 512 sections: a parallel bundle next to an isotropic crossing
/// region of identical density and texture statistics, on unmasked background.
pub fn two_texture_spec(seed: u64) -> PhantomSpec {
    let texture = TextureSpec::default();
    PhantomSpec {
        width: 512,
        height: 512,
        sections: 3,
        mask_background: false,
        noise: NoiseSpec::default(),
        seed,
        primitives: vec![
            Primitive::Bundle(Bundle {
                center: [152.0, 256.0],
                length: 416.0,
                width: 200.0,
                angle_deg: 90.0,
                density: 0.7,
                inclination_deg: 20.0,
                texture: texture.clone(),
            }),
            Primitive::Crossing(Crossing {
                region: Shape::Rect {
                    center: [360.0, 256.0],
                    length: 416.0,
                    width: 200.0,
                    angle_deg: 90.0,
                },
                fill: false,
                directions_deg: Vec::new(),
                cell_px: 8.0,
                density: 0.7,
                inclination_deg: 20.0,
                texture,
            }),
        ],
        ..Default::default()
    }
}

pub fn two_texture_benchmark(seed: u64) -> Result<Phantom> {
    generate(&two_texture_spec(seed))
}

/// Cortex-like ring around white matter with two bundle types, a fan and a
/// crossing fill. Geometry is laid out for `size = 512` and scaled linearly.
///
/// Regions: 1 tangential band, 2 cortex, 3 dense in-plane bundle, 4 sparse
/// steep bundle, 5 fan, 6 crossing fill.
pub fn cortex_phantom_spec(size: usize, sections: usize, seed: u64) -> PhantomSpec {
    let s = size as f64 / 512.0;
    let c = [255.5 * s, 255.5 * s];
    let at = |x: f64, y: f64| [x * s, y * s];
    PhantomSpec {
        width: size,
        height: size,
        sections,
        seed,
        primitives: vec![
            Primitive::TangentialBand(Annulus {
                center: c,
                inner_radius: 215.0 * s,
                outer_radius: 232.0 * s,
                tilt_deg: 10.0,
                density: [0.3, 0.3],
                inclination_deg: 0.0,
                texture: TextureSpec::default(),
            }),
            Primitive::CortexBand(Annulus {
                center: c,
                inner_radius: 150.0 * s,
                outer_radius: 215.0 * s,
                tilt_deg: 10.0,
                density: [0.25, 0.85],
                inclination_deg: 10.0,
                texture: TextureSpec::default(),
            }),
            Primitive::Bundle(Bundle {
                center: at(255.5, 175.0),
                length: 200.0 * s,
                width: 40.0 * s,
                angle_deg: 0.0,
                density: 0.9,
                inclination_deg: 0.0,
                texture: TextureSpec {
                    stripe_periods_px: vec![4.0, 6.0, 9.0],
                    ..Default::default()
                },
            }),
            Primitive::Bundle(Bundle {
                center: at(255.5, 337.0),
                length: 200.0 * s,
                width: 40.0 * s,
                angle_deg: 0.0,
                density: 0.5,
                inclination_deg: 55.0,
                texture: TextureSpec {
                    stripe_amplitude: 0.4,
                    stripe_periods_px: vec![8.0, 12.0, 18.0],
                    ..Default::default()
                },
            }),
            Primitive::Fan(Fan {
                apex: at(200.0, 255.5),
                angle_deg: 0.0,
                spread_deg: 50.0,
                inner_radius: 10.0 * s,
                outer_radius: 120.0 * s,
                density: 0.7,
                inclination_deg: 10.0,
                texture: TextureSpec::default(),
            }),
            Primitive::Crossing(Crossing {
                region: Shape::Disk {
                    center: c,
                    radius: 160.0 * s,
                },
                fill: true,
                directions_deg: Vec::new(),
                cell_px: 6.0,
                density: 0.6,
                inclination_deg: 25.0,
                texture: TextureSpec::default(),
            }),
        ],
        ..Default::default()
    }
}

pub fn cortex_phantom(size: usize, sections: usize, seed: u64) -> Result<Phantom> {
    generate(&cortex_phantom_spec(size, sections, seed))
}

/// Six 512 x 512 cortex sections with strong per-section jitter: attenuation
/// and thickness scales in `2^[-0.5, 0.5]` and doubled intensity noise.
pub fn consistency_phantom_spec(seed: u64) -> PhantomSpec {
    let mut spec = cortex_phantom_spec(512, 6, seed);
    spec.noise.attenuation_log2 = [-0.5, 0.5];
    spec.noise.thickness_log2 = [-0.5, 0.5];
    spec.noise.intensity_std = 0.02;
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::Tissue;

    #[test]
    fn two_texture_areas_and_brightness() {
        let p = two_texture_benchmark(1).unwrap();
        let t = &p.truth.sections[0];
        let count = |id| t.region.as_slice().iter().filter(|r| **r == id).count() as f64;
        for id in [TwoTextureRegions::PARALLEL, TwoTextureRegions::CROSSING] {
            assert!((count(id) / (416.0 * 200.0) - 1.0).abs() < 0.01);
        }
        let maps = &p.stack.sections[0].maps;
        let mean = |id| {
            let v: Vec<f64> = maps
                .transmittance
                .as_slice()
                .iter()
                .zip(t.region.as_slice())
                .filter(|(_, r)| **r == id)
                .map(|(v, _)| *v)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (a, b) = (mean(TwoTextureRegions::PARALLEL), mean(TwoTextureRegions::CROSSING));
        assert!((a / b - 1.0).abs() < 0.01, "{a} {b}");
    }

    #[test]
    fn cortex_truth_is_consistent() {
        let p = cortex_phantom(256, 2, 3).unwrap();
        let t = &p.truth.sections[0];
        for i in 0..t.region.len() {
            let region = t.region.as_slice()[i];
            let d = t.depth.as_slice()[i];
            assert_eq!(region == 2, !d.is_nan());
            if region == 2 {
                assert!((0.0..=1.0).contains(&d));
                assert_eq!(t.obliqueness_deg.as_slice()[i], 10.0);
            }
            let tissue = t.tissue.as_slice()[i];
            assert_eq!(tissue == Tissue::White, !t.wm_depth_mm.as_slice()[i].is_nan());
        }
        for id in 1..=6 {
            assert!(t.region.as_slice().contains(&id), "region {id} missing");
        }
    }
}
