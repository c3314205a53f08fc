use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::{Annulus, PhantomSpec, Primitive, Shape, TextureSpec, Tissue};
use crate::augment::{scale_attenuation, scale_thickness, DisplacementField};
use crate::context::{Section, SectionStack};
use crate::error::{Error, Result};
use crate::features::TileGrid;
use crate::grid::Grid;
use crate::signal::{
    canonical_direction, recover_maps_with, synthesize_profile, FiberOrientationField, RecoveryOptions,
};

/// Acquisition variation drawn for one section.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionJitter {
    pub shift: [f64; 2],
    pub rotation_deg: f64,
    pub attenuation_scale: f64,
    pub thickness_scale: f64,
}

/// Analytic ground truth of one section, in that section's pixel frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SectionTruth {
    /// 0 for background, `i + 1` for primitive `i`.
    pub region: Grid<usize>,
    pub tissue: Grid<Tissue>,
    /// Normalized cortical depth (0 outer, 1 inner boundary); NaN off the cortex.
    pub depth: Grid<f64>,
    /// Distance below the inner cortex boundary in millimetres; NaN off white matter.
    pub wm_depth_mm: Grid<f64>,
    /// Angle between the ring surface normal and the section plane; NaN off rings.
    pub obliqueness_deg: Grid<f64>,
    pub jitter: SectionJitter,
}

/// Ground truth sampled at the centers of a tile grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TileTruth {
    pub region: Grid<usize>,
    pub tissue: Grid<Tissue>,
    pub depth: Grid<f64>,
    pub wm_depth_mm: Grid<f64>,
    /// Tiles lying entirely inside one region.
    pub pure: Grid<bool>,
}

impl SectionTruth {
    pub fn at_tiles(&self, grid: &TileGrid) -> TileTruth {
        let center = |c: usize, r: usize| grid.center(c, r);
        TileTruth {
            region: Grid::from_fn(grid.rows, grid.cols, |c, r| {
                let (x, y) = center(c, r);
                *self.region.get(x, y)
            }),
            tissue: Grid::from_fn(grid.rows, grid.cols, |c, r| {
                let (x, y) = center(c, r);
                *self.tissue.get(x, y)
            }),
            depth: Grid::from_fn(grid.rows, grid.cols, |c, r| {
                let (x, y) = center(c, r);
                *self.depth.get(x, y)
            }),
            wm_depth_mm: Grid::from_fn(grid.rows, grid.cols, |c, r| {
                let (x, y) = center(c, r);
                *self.wm_depth_mm.get(x, y)
            }),
            pure: Grid::from_fn(grid.rows, grid.cols, |c, r| {
                let (x0, y0) = grid.origin(c, r);
                let first = *self.region.get(x0, y0);
                (y0..y0 + grid.tile).all(|y| (x0..x0 + grid.tile).all(|x| *self.region.get(x, y) == first))
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub sections: Vec<SectionTruth>,
    /// Kind of each primitive; region `i + 1` is `names[i]`.
    pub names: Vec<String>,
}

/// A generated stack with its ground truth.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub stack: SectionStack,
    pub truth: GroundTruth,
}

struct Realization {
    phases: Vec<f64>,
    streak_phase: f64,
    cell_seed: u64,
}

struct Sample {
    direction: f64,
    inclination: f64,
    density: f64,
    across: f64,
    along: f64,
    depth: f64,
    obliqueness: f64,
    // ring circumference when a coordinate wraps around
    wrap_across: Option<f64>,
    wrap_along: Option<f64>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// angle wrapped into (-pi, pi]
fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn annulus_radii(a: &Annulus, z: f64, spec: &PhantomSpec) -> (f64, f64) {
    let shift = z * a.tilt_deg.to_radians().tan() * spec.spacing_um / spec.pixel_size_um;
    ((a.inner_radius + shift).max(0.0), (a.outer_radius + shift).max(0.0))
}

fn in_shape(shape: &Shape, x: f64, y: f64) -> bool {
    match *shape {
        Shape::Disk { center, radius } => (x - center[0]).hypot(y - center[1]) < radius,
        Shape::Rect {
            center,
            length,
            width,
            angle_deg,
        } => {
            let (s, c) = angle_deg.to_radians().sin_cos();
            let (dx, dy) = (x - center[0], y - center[1]);
            (dx * c + dy * s).abs() <= length / 2.0 && (-dx * s + dy * c).abs() <= width / 2.0
        }
    }
}

/// Fiber geometry of primitive `p` at reference position `(x, y)` of a
/// section `z` planes from the stack middle.
fn evaluate(p: &Primitive, real: &Realization, x: f64, y: f64, z: f64, spec: &PhantomSpec) -> Option<Sample> {
    match p {
        Primitive::CortexBand(a) | Primitive::TangentialBand(a) => {
            let (rin, rout) = annulus_radii(a, z, spec);
            let (dx, dy) = (x - a.center[0], y - a.center[1]);
            let rho = dx.hypot(dy);
            if !(rho >= rin && rho < rout) {
                return None;
            }
            let theta = dy.atan2(dx);
            let depth = (rout - rho) / (rout - rin);
            let rho_ref = 0.5 * (rin + rout);
            let radial = matches!(p, Primitive::CortexBand(_));
            let ring = Some(TAU * rho_ref);
            let (direction, across, along, wrap_across, wrap_along) = if radial {
                (theta, rho_ref * theta, rho, ring, None)
            } else {
                (theta + PI / 2.0, rho, rho_ref * theta, None, ring)
            };
            Some(Sample {
                direction,
                inclination: a.inclination_deg.to_radians(),
                density: a.density[0] + (a.density[1] - a.density[0]) * depth,
                across,
                along,
                depth: if radial { depth } else { f64::NAN },
                obliqueness: a.tilt_deg.abs(),
                wrap_across,
                wrap_along,
            })
        }
        Primitive::Bundle(b) => {
            let (s, c) = b.angle_deg.to_radians().sin_cos();
            let (dx, dy) = (x - b.center[0], y - b.center[1]);
            let (along, across) = (dx * c + dy * s, -dx * s + dy * c);
            if along.abs() > b.length / 2.0 || across.abs() > b.width / 2.0 {
                return None;
            }
            Some(Sample {
                direction: b.angle_deg.to_radians(),
                inclination: b.inclination_deg.to_radians(),
                density: b.density,
                across,
                along,
                depth: f64::NAN,
                obliqueness: f64::NAN,
                wrap_across: None,
                wrap_along: None,
            })
        }
        Primitive::Crossing(cr) => {
            if !in_shape(&cr.region, x, y) {
                return None;
            }
            let (cx, cy) = ((x / cr.cell_px).floor() as i64, (y / cr.cell_px).floor() as i64);
            let h = splitmix(real.cell_seed ^ splitmix((cx as u64).wrapping_mul(0x1_0000_0001) ^ cy as u64));
            let direction = if cr.directions_deg.is_empty() {
                (h >> 11) as f64 / (1u64 << 53) as f64 * PI
            } else {
                cr.directions_deg[(h % cr.directions_deg.len() as u64) as usize].to_radians()
            };
            let (s, c) = direction.sin_cos();
            Some(Sample {
                direction,
                inclination: cr.inclination_deg.to_radians(),
                density: cr.density,
                across: -x * s + y * c,
                along: x * c + y * s,
                depth: f64::NAN,
                obliqueness: f64::NAN,
                wrap_across: None,
                wrap_along: None,
            })
        }
        Primitive::Fan(f) => {
            let (dx, dy) = (x - f.apex[0], y - f.apex[1]);
            let rho = dx.hypot(dy);
            let theta = dy.atan2(dx);
            let delta = wrap_angle(theta - f.angle_deg.to_radians());
            if !(rho >= f.inner_radius && rho < f.outer_radius) || delta.abs() > f.spread_deg.to_radians() / 2.0 {
                return None;
            }
            let rho_ref = 0.5 * (f.inner_radius + f.outer_radius);
            Some(Sample {
                direction: theta,
                inclination: f.inclination_deg.to_radians(),
                density: f.density,
                across: rho_ref * delta,
                along: rho,
                depth: f64::NAN,
                obliqueness: f64::NAN,
                wrap_across: None,
                wrap_along: None,
            })
        }
    }
}

fn period_on(period: f64, wrap: Option<f64>) -> f64 {
    match wrap {
        // whole number of periods around the ring
        Some(c) => c / (c / period).round().max(1.0),
        None => period,
    }
}

fn textured_density(s: &Sample, t: &TextureSpec, real: &Realization, grain: f64) -> f64 {
    let k = t.stripe_periods_px.len();
    let stripes = if k == 0 {
        0.0
    } else {
        t.stripe_periods_px
            .iter()
            .zip(&real.phases)
            .map(|(p, ph)| (TAU * s.across / period_on(*p, s.wrap_across) + ph).cos())
            .sum::<f64>()
            / (k as f64).sqrt()
    };
    let streak = (TAU * s.along / period_on(t.streak_period_px, s.wrap_along) + real.streak_phase).cos();
    let d = s.density * (1.0 + t.stripe_amplitude * stripes + t.streak_amplitude * streak) * (1.0 + t.grain * grain);
    d.clamp(0.0, 1.0)
}

fn texture_of(p: &Primitive) -> &TextureSpec {
    match p {
        Primitive::CortexBand(a) | Primitive::TangentialBand(a) => &a.texture,
        Primitive::Bundle(b) => &b.texture,
        Primitive::Crossing(c) => &c.texture,
        Primitive::Fan(f) => &f.texture,
    }
}

fn draw_log2<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        2f64.powf(range[0])
    } else {
        2f64.powf(rng.random_range(range[0]..=range[1]))
    }
}

fn generate_section(spec: &PhantomSpec, index: usize) -> Result<(Section, SectionTruth)> {
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let n = &spec.noise;
    let jitter = {
        let mag = if n.shift_px > 0.0 {
            n.shift_px * rng.random::<f64>().sqrt()
        } else {
            0.0
        };
        let ang = rng.random_range(0.0..TAU);
        let rot = if n.rotation_deg > 0.0 {
            rng.random_range(-n.rotation_deg..=n.rotation_deg)
        } else {
            0.0
        };
        SectionJitter {
            shift: [mag * ang.cos(), mag * ang.sin()],
            rotation_deg: rot,
            attenuation_scale: draw_log2(&mut rng, n.attenuation_log2),
            thickness_scale: draw_log2(&mut rng, n.thickness_log2),
        }
    };
    let realizations: Vec<Realization> = spec
        .primitives
        .iter()
        .map(|p| Realization {
            phases: texture_of(p)
                .stripe_periods_px
                .iter()
                .map(|_| rng.random_range(0.0..TAU))
                .collect(),
            streak_phase: rng.random_range(0.0..TAU),
            cell_seed: rng.random(),
        })
        .collect();

    let z = index as f64 - (spec.sections as f64 - 1.0) / 2.0;
    let center = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let theta = jitter.rotation_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    // section pixel p shows reference point R^-1 (p - c - t) + c
    let to_reference = |px: f64, py: f64| {
        let (dx, dy) = (px - center.0 - jitter.shift[0], py - center.1 - jitter.shift[1]);
        (cos_t * dx + sin_t * dy + center.0, -sin_t * dx + cos_t * dy + center.1)
    };
    let cortex = spec.primitives.iter().find_map(|p| match p {
        Primitive::CortexBand(a) => Some(a),
        _ => None,
    });

    let mut direction = Grid::zeros(h, w);
    let mut inclination = Grid::zeros(h, w);
    let mut density = Grid::zeros(h, w);
    let mut region = Grid::filled(h, w, 0usize);
    let mut tissue = Grid::filled(h, w, Tissue::Background);
    let mut depth = Grid::filled(h, w, f64::NAN);
    let mut wm_depth = Grid::filled(h, w, f64::NAN);
    let mut obliqueness = Grid::filled(h, w, f64::NAN);
    for py in 0..h {
        for px in 0..w {
            let (x, y) = to_reference(px as f64, py as f64);
            let grain: f64 = rng.sample(StandardNormal);
            let mut hit: Option<(usize, Sample)> = None;
            let mut fill: Option<(usize, Sample)> = None;
            for (i, p) in spec.primitives.iter().enumerate() {
                let Some(s) = evaluate(p, &realizations[i], x, y, z, spec) else {
                    continue;
                };
                let slot = if p.is_fill() { &mut fill } else { &mut hit };
                if let Some((j, _)) = slot {
                    return Err(Error::OverlappingPrimitives(*j, i));
                }
                *slot = Some((i, s));
            }
            let Some((i, s)) = hit.or(fill) else {
                continue;
            };
            let p = &spec.primitives[i];
            direction.set(px, py, canonical_direction(s.direction + theta));
            inclination.set(px, py, s.inclination);
            density.set(px, py, textured_density(&s, texture_of(p), &realizations[i], grain));
            region.set(px, py, i + 1);
            tissue.set(px, py, p.tissue());
            depth.set(px, py, s.depth);
            obliqueness.set(px, py, s.obliqueness);
            if let (Tissue::White, Some(a)) = (p.tissue(), cortex) {
                let (rin, _) = annulus_radii(a, z, spec);
                let rho = (x - a.center[0]).hypot(y - a.center[1]);
                wm_depth.set(px, py, (rin - rho).max(0.0) * spec.pixel_size_um / 1000.0);
            }
        }
    }

    let fibers = FiberOrientationField {
        direction,
        inclination,
        density,
    };
    let mut maps = fibers.to_parameter_maps(&spec.optics, spec.incident, spec.pixel_size_um)?;
    maps = scale_attenuation(&maps, jitter.attenuation_scale)?;
    maps = scale_thickness(&maps, jitter.thickness_scale)?;
    if n.intensity_std > 0.0 {
        let mut stack = synthesize_profile(&maps, &spec.angles_deg())?;
        let sd = n.intensity_std * spec.incident;
        for v in stack.data_mut() {
            *v = (*v + sd * rng.sample::<f64, _>(StandardNormal)).max(0.0);
        }
        maps = recover_maps_with(&stack, spec.incident, spec.pixel_size_um, RecoveryOptions::default())?.maps;
    }
    if spec.mask_background {
        maps.mask = Some(region.map(|r| *r != 0));
    }

    let mut section = Section::new(format!("s{index:03}"), maps);
    if jitter.shift != [0.0, 0.0] || theta != 0.0 {
        // reference point q lands on section pixel R (q - c) + c + t
        section = section.with_displacement(DisplacementField::from_fn(h, w, |qx, qy| {
            let (dx, dy) = (qx - center.0, qy - center.1);
            (
                cos_t * dx - sin_t * dy + center.0 + jitter.shift[0] - qx,
                sin_t * dx + cos_t * dy + center.1 + jitter.shift[1] - qy,
            )
        }));
    }
    Ok((
        section,
        SectionTruth {
            region,
            tissue,
            depth,
            wm_depth_mm: wm_depth,
            obliqueness_deg: obliqueness,
            jitter,
        },
    ))
}

/// Render every section of `spec`; sections are independent and generated in
/// parallel.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let parts = (0..spec.sections)
        .into_par_iter()
        .map(|i| generate_section(spec, i))
        .collect::<Result<Vec<_>>>()?;
    let (sections, truths): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    Ok(Phantom {
        spec: spec.clone(),
        stack: SectionStack::new(sections, spec.spacing_um, spec.pixel_size_um)?,
        truth: GroundTruth {
            sections: truths,
            names: spec.primitives.iter().map(|p| p.name().to_string()).collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::spec::{Bundle, Crossing, NoiseSpec};
    use super::*;
    use crate::signal::recover_maps;

    fn bundle(center: [f64; 2], angle: f64) -> Primitive {
        Primitive::Bundle(Bundle {
            center,
            length: 40.0,
            width: 12.0,
            angle_deg: angle,
            density: 0.6,
            inclination_deg: 0.0,
            texture: TextureSpec {
                stripe_amplitude: 0.0,
                streak_amplitude: 0.0,
                grain: 0.0,
                ..Default::default()
            },
        })
    }

    fn spec(primitives: Vec<Primitive>) -> PhantomSpec {
        PhantomSpec {
            width: 64,
            height: 64,
            sections: 2,
            noise: NoiseSpec::none(),
            primitives,
            ..Default::default()
        }
    }

    #[test]
    fn uniform_bundle_recovers_exactly() {
        let p = generate(&spec(vec![bundle([32.0, 32.0], 30.0)])).unwrap();
        let maps = &p.stack.sections[0].maps;
        let stack = synthesize_profile(maps, &p.spec.angles_deg()).unwrap();
        let rec = recover_maps(&stack, 1.0).unwrap().maps;
        let phi = 30f64.to_radians();
        let expected_r = {
            let t = 0.6 * 60.0;
            (TAU * t * 0.002 / 0.55).sin()
        };
        assert!((rec.direction.get(32, 32) - phi).abs() < 1e-9);
        assert!((rec.retardation.get(32, 32) - expected_r).abs() < 1e-9);
        assert_eq!(*rec.retardation.get(0, 0), 0.0);
        assert_eq!(*p.truth.sections[0].region.get(32, 32), 1);
        assert!(!maps.mask.as_ref().unwrap().get(0, 0));
    }

    #[test]
    fn overlap_is_reported() {
        let err = generate(&spec(vec![bundle([32.0, 32.0], 0.0), bundle([36.0, 32.0], 90.0)])).unwrap_err();
        assert!(matches!(err, Error::OverlappingPrimitives(0, 1)));
    }

    #[test]
    fn fill_yields_to_other_primitives() {
        let fill = Primitive::Crossing(Crossing {
            region: Shape::Disk {
                center: [32.0, 32.0],
                radius: 30.0,
            },
            fill: true,
            directions_deg: vec![],
            cell_px: 4.0,
            density: 0.5,
            inclination_deg: 0.0,
            texture: TextureSpec::default(),
        });
        let p = generate(&spec(vec![fill, bundle([32.0, 32.0], 0.0)])).unwrap();
        let r = &p.truth.sections[0].region;
        assert_eq!(*r.get(32, 32), 2);
        assert_eq!(*r.get(32, 50), 1);
        assert_eq!(*r.get(0, 0), 0);
    }

    #[test]
    fn seeded_generation_is_repeatable() {
        let mut s = spec(vec![bundle([32.0, 32.0], 10.0)]);
        s.noise = NoiseSpec::default();
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        for (x, y) in a.stack.sections.iter().zip(&b.stack.sections) {
            assert_eq!(x.maps, y.maps);
        }
        for (x, y) in a.truth.sections.iter().zip(&b.truth.sections) {
            assert_eq!(x.region, y.region);
            assert_eq!(x.jitter, y.jitter);
            let bits = |g: &Grid<f64>| g.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&x.depth), bits(&y.depth));
        }
    }

    #[test]
    fn shifted_section_moves_region() {
        let mut s = spec(vec![bundle([32.0, 32.0], 0.0)]);
        s.noise.shift_px = 2.0;
        let p = generate(&s).unwrap();
        let t = &p.truth.sections[1];
        let [sx, sy] = t.jitter.shift;
        assert!(sx.hypot(sy) <= 2.0);
        let sec = &p.stack.sections[1];
        let (mx, my) = sec.to_section(32.0, 32.0).unwrap();
        assert!((mx - 32.0 - sx).abs() < 1e-9 && (my - 32.0 - sy).abs() < 1e-9);
    }
}
