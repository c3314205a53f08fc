//! Anchor/positive pair sampling by spatial proximity across a section stack.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentationChain, AugmentationSpec, DisplacementField};
use crate::error::{Error, Result};
use crate::signal::ParameterMaps;

/// One section with its own (unregistered) rasters.
#[derive(Clone, Debug)]
pub struct Section {
    pub id: String,
    pub maps: ParameterMaps,
    /// Maps reference coordinates to this section's pixel coordinates.
    pub displacement: Option<DisplacementField>,
}

impl Section {
    pub fn new(id: impl Into<String>, maps: ParameterMaps) -> Self {
        Self {
            id: id.into(),
            maps,
            displacement: None,
        }
    }

    pub fn with_displacement(mut self, field: DisplacementField) -> Self {
        self.displacement = Some(field);
        self
    }

    /// Section pixel coordinates of a reference position.
    pub fn to_section(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        match &self.displacement {
            Some(f) => f.map_point(x, y),
            None => Some((x, y)),
        }
    }

    fn foreground_at(&self, x: f64, y: f64) -> bool {
        let Some((sx, sy)) = self.to_section(x, y) else {
            return false;
        };
        let (h, w) = self.maps.dims();
        let (ix, iy) = (sx.round(), sy.round());
        if ix < 0.0 || iy < 0.0 || ix >= w as f64 || iy >= h as f64 {
            return false;
        }
        self.maps.mask.as_ref().is_none_or(|m| *m.get(ix as usize, iy as usize))
    }
}

/// Ordered sections sharing reference raster dimensions.
#[derive(Clone, Debug)]
pub struct SectionStack {
    pub sections: Vec<Section>,
    pub spacing_um: f64,
    pub pixel_size_um: f64,
}

impl SectionStack {
    pub fn new(sections: Vec<Section>, spacing_um: f64, pixel_size_um: f64) -> Result<Self> {
        if sections.is_empty() {
            return Err(Error::invalid("stack has no sections"));
        }
        if !(spacing_um > 0.0) || !(pixel_size_um > 0.0) {
            return Err(Error::invalid("section spacing and pixel size must be positive"));
        }
        let dims = sections[0].maps.dims();
        for s in &sections {
            if s.maps.dims() != dims {
                return Err(Error::shape(
                    format!("{}x{}", dims.1, dims.0),
                    format!("{}x{} in section {}", s.maps.width(), s.maps.height(), s.id),
                ));
            }
            if let Some(f) = &s.displacement {
                if f.dims() != dims {
                    return Err(Error::shape(
                        format!("{}x{} displacement", dims.1, dims.0),
                        format!("{}x{}", f.dims().1, f.dims().0),
                    ));
                }
            }
        }
        Ok(Self {
            sections,
            spacing_um,
            pixel_size_um,
        })
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    /// Reference raster `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        self.sections[0].maps.dims()
    }

    fn max_displacement(&self) -> f64 {
        self.sections
            .iter()
            .filter_map(|s| s.displacement.as_ref().map(|f| f.max_magnitude()))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    Same,
    Cl2d,
    Cl3d,
    Nn,
}

impl std::str::FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "same" => Ok(Self::Same),
            "cl2d" | "cl-2d" => Ok(Self::Cl2d),
            "cl3d" | "cl-3d" => Ok(Self::Cl3d),
            "nn" => Ok(Self::Nn),
            other => Err(Error::invalid(format!("unknown pair mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairSpec {
    pub mode: PairMode,
    pub radius_um: f64,
    /// Side of the extracted anchor and positive patches before augmentation.
    pub patch_side: usize,
    /// Positive draws per anchor before the anchor is redrawn.
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for PairSpec {
    fn default() -> Self {
        Self {
            mode: PairMode::Cl3d,
            radius_um: 118.0,
            patch_side: 192,
            max_retries: 16,
            seed: 0,
        }
    }
}

/// A patch center in reference coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub section: usize,
    pub x: usize,
    pub y: usize,
}

/// Foreground reference locations far enough from the border that a patch
/// (and its warped center) always fits.
#[derive(Clone, Debug)]
pub struct AnchorIndex {
    locations: Vec<Location>,
    margin: usize,
    dims: (usize, usize),
}

impl AnchorIndex {
    pub fn new(stack: &SectionStack, patch_side: usize) -> Result<Self> {
        let (h, w) = stack.dims();
        let margin = patch_side / 2 + stack.max_displacement().ceil() as usize + 1;
        let mut locations = Vec::new();
        if h > 2 * margin && w > 2 * margin {
            for (s, section) in stack.sections.iter().enumerate() {
                for y in margin..h - margin {
                    for x in margin..w - margin {
                        if section.foreground_at(x as f64, y as f64) {
                            locations.push(Location { section: s, x, y });
                        }
                    }
                }
            }
        }
        if locations.is_empty() {
            return Err(Error::EmptyForeground);
        }
        Ok(Self {
            locations,
            margin,
            dims: (h, w),
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let m = self.margin as f64;
        x >= m && y >= m && x < (self.dims.1 - self.margin) as f64 && y < (self.dims.0 - self.margin) as f64
    }
}

/// Uniform draw over foreground anchor locations.
pub fn sample_anchor<R: Rng + ?Sized>(index: &AnchorIndex, rng: &mut R) -> Location {
    index.locations[rng.random_range(0..index.locations.len())]
}

fn adjacent_section<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> Option<usize> {
    match (k > 0, k + 1 < n) {
        (true, true) => Some(if rng.random_bool(0.5) { k - 1 } else { k + 1 }),
        (true, false) => Some(k - 1),
        (false, true) => Some(k + 1),
        (false, false) => None,
    }
}

/// One positive draw; `OutOfVolume` when it leaves the volume or lands on background.
fn try_positive<R: Rng + ?Sized>(
    anchor: Location,
    spec: &PairSpec,
    stack: &SectionStack,
    index: &AnchorIndex,
    rng: &mut R,
) -> Result<Location> {
    let r_px = spec.radius_um / stack.pixel_size_um;
    let n = stack.len();
    let (section, dx, dy) = match spec.mode {
        PairMode::Same => return Ok(anchor),
        PairMode::Cl2d => {
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            (anchor.section, r_px * t.cos(), r_px * t.sin())
        }
        PairMode::Nn => {
            let s = adjacent_section(anchor.section, n, rng).ok_or(Error::OutOfVolume(spec.max_retries))?;
            (s, 0.0, 0.0)
        }
        PairMode::Cl3d => {
            let u: f64 = rng.random_range(-1.0..=1.0);
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            let dz = spec.radius_um * u;
            let planar = r_px * (1.0 - u * u).max(0.0).sqrt();
            let k = anchor.section as f64 + dz / stack.spacing_um;
            let mut s = k.round();
            if s == anchor.section as f64 {
                s = if dz > 0.0 {
                    s + 1.0
                } else if dz < 0.0 {
                    s - 1.0
                } else {
                    match adjacent_section(anchor.section, n, rng) {
                        Some(v) => v as f64,
                        None => -1.0,
                    }
                };
            }
            if s < 0.0 || s >= n as f64 {
                return Err(Error::OutOfVolume(spec.max_retries));
            }
            (s as usize, planar * t.cos(), planar * t.sin())
        }
    };
    let x = (anchor.x as f64 + dx).round();
    let y = (anchor.y as f64 + dy).round();
    if !index.inside(x, y) || !stack.sections[section].foreground_at(x, y) {
        return Err(Error::OutOfVolume(spec.max_retries));
    }
    Ok(Location {
        section,
        x: x as usize,
        y: y as usize,
    })
}

/// Positive for an anchor, retried up to `spec.max_retries` times.
pub fn sample_positive<R: Rng + ?Sized>(
    anchor: Location,
    spec: &PairSpec,
    stack: &SectionStack,
    index: &AnchorIndex,
    rng: &mut R,
) -> Result<Location> {
    let mut last = Error::OutOfVolume(spec.max_retries);
    for _ in 0..spec.max_retries.max(1) {
        match try_positive(anchor, spec, stack, index, rng) {
            Ok(p) => return Ok(p),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Anchor and positive locations; anchors are redrawn while their positive
/// cannot be placed.
pub fn sample_pair<R: Rng + ?Sized>(
    spec: &PairSpec,
    stack: &SectionStack,
    index: &AnchorIndex,
    rng: &mut R,
) -> Result<(Location, Location)> {
    const MAX_ANCHORS: usize = 1000;
    for _ in 0..MAX_ANCHORS {
        let anchor = sample_anchor(index, rng);
        if let Ok(p) = sample_positive(anchor, spec, stack, index, rng) {
            return Ok((anchor, p));
        }
    }
    Err(Error::OutOfVolume(spec.max_retries))
}

/// Square crop centered on a reference location, in the section's own pixel
/// coordinates.
pub fn extract_patch(stack: &SectionStack, loc: Location, side: usize) -> Result<ParameterMaps> {
    let section = stack
        .sections
        .get(loc.section)
        .ok_or_else(|| Error::invalid(format!("no section {}", loc.section)))?;
    let (h, w) = section.maps.dims();
    let out_of_bounds = |x: i64, y: i64| Error::OutOfBounds {
        x,
        y,
        side,
        width: w,
        height: h,
    };
    let (cx, cy) = section
        .to_section(loc.x as f64, loc.y as f64)
        .ok_or_else(|| out_of_bounds(loc.x as i64, loc.y as i64))?;
    let x0 = cx.round() as i64 - (side / 2) as i64;
    let y0 = cy.round() as i64 - (side / 2) as i64;
    if x0 < 0 || y0 < 0 || x0 as usize + side > w || y0 as usize + side > h {
        return Err(out_of_bounds(x0, y0));
    }
    section.maps.crop(x0 as usize, y0 as usize, side, side)
}

/// `2N` augmented crops ordered `[a0, p0, a1, p1, ...]`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub crops: Vec<ParameterMaps>,
    pub pairs: Vec<(usize, usize)>,
    pub locations: Vec<(Location, Location)>,
    /// Crop pixels that fell outside their source patch.
    pub out_of_domain: usize,
}

/// Sampler state shared by all batches of a run.
#[derive(Clone, Debug)]
pub struct PairSampler<'a> {
    pub stack: &'a SectionStack,
    pub pairs: PairSpec,
    pub augmentation: AugmentationSpec,
    pub index: AnchorIndex,
}

impl<'a> PairSampler<'a> {
    pub fn new(stack: &'a SectionStack, pairs: PairSpec, augmentation: AugmentationSpec) -> Result<Self> {
        if augmentation.crop > pairs.patch_side {
            return Err(Error::invalid(format!(
                "augmentation crop {} exceeds patch side {}",
                augmentation.crop, pairs.patch_side
            )));
        }
        if pairs.radius_um < 0.0 {
            return Err(Error::invalid("pair radius must be >= 0"));
        }
        if matches!(pairs.mode, PairMode::Nn | PairMode::Cl3d) && stack.len() < 2 {
            return Err(Error::invalid("3D pairs need at least two sections"));
        }
        augmentation.validate()?;
        let index = AnchorIndex::new(stack, pairs.patch_side)?;
        Ok(Self {
            stack,
            pairs,
            augmentation,
            index,
        })
    }

    /// Generator for pair number `pair` of the stream; every pair has its own
    /// stream so batches can be built in parallel and reproduced exactly.
    pub fn pair_rng(&self, pair: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.pairs.seed);
        rng.set_stream(pair);
        rng
    }

    fn augmented(&self, loc: Location, rng: &mut ChaCha8Rng) -> Result<(ParameterMaps, usize)> {
        let patch = extract_patch(self.stack, loc, self.pairs.patch_side)?;
        let chain = AugmentationChain::sample(&self.augmentation, patch.dims(), rng);
        let warped = chain.apply(&patch)?;
        let outside = warped.in_domain.as_slice().iter().filter(|v| !**v).count();
        Ok((warped.maps, outside))
    }

    /// Batch `batch` of `n` pairs.
    pub fn batch(&self, batch: u64, n: usize) -> Result<Batch> {
        if n == 0 {
            return Err(Error::invalid("batch needs at least one pair"));
        }
        let items: Vec<_> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = self.pair_rng(batch * n as u64 + i as u64);
                let (a, p) = sample_pair(&self.pairs, self.stack, &self.index, &mut rng)?;
                let (ca, oa) = self.augmented(a, &mut rng)?;
                let (cp, op) = self.augmented(p, &mut rng)?;
                Ok(((a, p), ca, cp, oa + op))
            })
            .collect::<Result<_>>()?;
        let mut out = Batch {
            crops: Vec::with_capacity(2 * n),
            pairs: (0..n).map(|i| (2 * i, 2 * i + 1)).collect(),
            locations: Vec::with_capacity(n),
            out_of_domain: 0,
        };
        for (loc, a, p, outside) in items {
            out.locations.push(loc);
            out.crops.push(a);
            out.crops.push(p);
            out.out_of_domain += outside;
        }
        Ok(out)
    }
}

/// Convenience wrapper building a sampler for a single batch.
pub fn make_batch(stack: &SectionStack, pairs: &PairSpec, augmentation: &AugmentationSpec, n: usize) -> Result<Batch> {
    PairSampler::new(stack, pairs.clone(), augmentation.clone())?.batch(0, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn stack(n: usize, side: usize) -> SectionStack {
        let sections = (0..n)
            .map(|s| {
                let mut maps = ParameterMaps::constant(side, side, 0.5, 0.3, 0.4, 1.0);
                maps.transmittance = Grid::from_fn(side, side, |x, y| (x + 2 * y + s) as f64 / (4 * side) as f64);
                Section::new(format!("s{s}"), maps)
            })
            .collect();
        SectionStack::new(sections, 60.0, 5.2).unwrap()
    }

    #[test]
    fn same_mode_returns_anchor() {
        let st = stack(1, 64);
        let spec = PairSpec {
            mode: PairMode::Same,
            patch_side: 32,
            ..Default::default()
        };
        let idx = AnchorIndex::new(&st, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = sample_anchor(&idx, &mut rng);
        assert_eq!(sample_positive(a, &spec, &st, &idx, &mut rng).unwrap(), a);
    }

    #[test]
    fn nn_uses_adjacent_section_same_position() {
        let st = stack(3, 64);
        let spec = PairSpec {
            mode: PairMode::Nn,
            patch_side: 32,
            ..Default::default()
        };
        let idx = AnchorIndex::new(&st, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = sample_anchor(&idx, &mut rng);
            let p = sample_positive(a, &spec, &st, &idx, &mut rng).unwrap();
            assert_eq!((p.x, p.y), (a.x, a.y));
            assert_eq!(p.section.abs_diff(a.section), 1);
        }
    }

    #[test]
    fn cl3d_zero_radius_is_nn() {
        let st = stack(3, 64);
        let spec = PairSpec {
            mode: PairMode::Cl3d,
            radius_um: 0.0,
            patch_side: 32,
            ..Default::default()
        };
        let idx = AnchorIndex::new(&st, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = sample_anchor(&idx, &mut rng);
            let p = sample_positive(a, &spec, &st, &idx, &mut rng).unwrap();
            assert_eq!((p.x, p.y), (a.x, a.y));
            assert_eq!(p.section.abs_diff(a.section), 1);
        }
    }

    #[test]
    fn single_foreground_pixel_always_drawn() {
        let mut st = stack(1, 40);
        st.sections[0].maps.mask = Some(Grid::from_fn(40, 40, |x, y| (x, y) == (20, 19)));
        let idx = AnchorIndex::new(&st, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            assert_eq!(
                sample_anchor(&idx, &mut rng),
                Location {
                    section: 0,
                    x: 20,
                    y: 19
                }
            );
        }
        st.sections[0].maps.mask = Some(Grid::filled(40, 40, false));
        assert!(matches!(AnchorIndex::new(&st, 16), Err(Error::EmptyForeground)));
    }

    #[test]
    fn extraction_follows_displacement() {
        let st = stack(1, 64);
        let loc = Location {
            section: 0,
            x: 30,
            y: 30,
        };
        let direct = extract_patch(&st, loc, 16).unwrap();
        assert_eq!(direct, st.sections[0].maps.crop(22, 22, 16, 16).unwrap());
        let mut shifted = st.clone();
        shifted.sections[0].displacement = Some(DisplacementField::from_fn(64, 64, |_, _| (3.0, -2.0)));
        let crop = extract_patch(&shifted, loc, 16).unwrap();
        assert_eq!(crop, st.sections[0].maps.crop(25, 20, 16, 16).unwrap());
        assert!(matches!(
            extract_patch(
                &st,
                Location {
                    section: 0,
                    x: 2,
                    y: 30
                },
                16
            ),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn batches_are_reproducible_and_in_domain() {
        let st = stack(3, 96);
        let spec = PairSpec {
            patch_side: 48,
            radius_um: 118.0,
            seed: 4,
            ..Default::default()
        };
        let aug = AugmentationSpec {
            crop: 32,
            ..Default::default()
        };
        let a = make_batch(&st, &spec, &aug, 4).unwrap();
        let b = make_batch(&st, &spec, &aug, 4).unwrap();
        assert_eq!(a.crops.len(), 8);
        assert_eq!(a.pairs, vec![(0, 1), (2, 3), (4, 5), (6, 7)]);
        assert_eq!(a.crops, b.crops);
        assert_eq!(a.out_of_domain, 0);
        assert!(a.crops.iter().all(|c| c.dims() == (32, 32)));
        for (anchor, positive) in &a.locations {
            assert_ne!(anchor.section, positive.section);
        }
    }
}
