//! File-level operations behind the subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pli_core::analysis::{
    cross_section_iou, evaluate_classifier, evaluate_regressor, label_maps, rbf_retrieve, silhouette,
    ClassifierProbeConfig, ProbeScore, QueryPoint, RegressorProbeConfig, TwoStepClustering, ZScore,
    SILHOUETTE_SUBSAMPLE,
};
use pli_core::augment::{sample_augmentation, AugmentationChain, AugmentationSpec};
use pli_core::context::{PairMode, PairSpec};
use pli_core::contrastive::{embed, train_with_progress, TrainOutcome, TrainState};
use pli_core::features::{classical_feature_map, ClassicalKind};
use pli_core::io::{
    displacement_raster, intensity_raster, save_labels, LabelSet, LabeledPoint, RasterContainer, SectionEntry,
    StackManifest,
};
use pli_core::phantom::{generate, PhantomSpec};
use pli_core::pipeline::{smooth, stack_samples, FeatureMap, PcaModel, Samples};
use pli_core::signal::{recover_maps_with, synthesize_profile, RecoveryOptions};
use pli_core::{Grid, ParameterMaps};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, CliResult};
use crate::settings::TrainSettings;

pub const MANIFEST_FILE: &str = "stack.toml";

pub fn section_id(i: usize) -> String {
    format!("s{i:03}")
}

/// Render a phantom as intensity stacks plus masks, displacement fields and
/// ground truth; returns the written manifest.
pub fn synthesize(spec: &PhantomSpec, out: &Path) -> CliResult<StackManifest> {
    let phantom = generate(spec)?;
    std::fs::create_dir_all(out)?;
    let mut manifest = StackManifest::new(out, spec.pixel_size_um, spec.spacing_um, spec.incident);
    let angles = spec.angles_deg();
    for (i, (section, truth)) in phantom.stack.sections.iter().zip(&phantom.truth.sections).enumerate() {
        let id = section_id(i);
        std::fs::create_dir_all(out.join(&id))?;
        let rel = |name: &str| PathBuf::from(&id).join(format!("{name}.plir"));
        let mut entry = SectionEntry {
            id: id.clone(),
            ..Default::default()
        };
        intensity_raster(&synthesize_profile(&section.maps, &angles)?)?.save(out.join(rel("intensity")))?;
        entry.intensity = Some(rel("intensity"));
        if let Some(mask) = &section.maps.mask {
            RasterContainer::from_mask("mask", mask).save(out.join(rel("mask")))?;
            entry.mask = Some(rel("mask"));
        }
        if let Some(d) = &section.displacement {
            displacement_raster(d)?.save(out.join(rel("displacement")))?;
            entry.displacement = Some(rel("displacement"));
        }
        let region = truth.region.map(|r| *r as f64);
        let tissue = truth.tissue.map(|t| *t as u8 as f64);
        RasterContainer::from_grids(&[
            ("region", &region),
            ("tissue", &tissue),
            ("depth", &truth.depth),
            ("wm_depth_mm", &truth.wm_depth_mm),
            ("obliqueness_deg", &truth.obliqueness_deg),
        ])?
        .save(out.join(rel("truth")))?;
        entry.truth = Some(rel("truth"));
        manifest.sections.push(entry);
    }
    manifest.save(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Fit parameter maps to every section that has an intensity stack and
/// record them in the manifest. Returns the number of degenerate pixels.
pub fn recover(manifest_path: &Path, floor_fraction: f64) -> CliResult<usize> {
    let mut manifest = StackManifest::load(manifest_path)?;
    let mut degenerate = 0;
    let mut any = false;
    for i in 0..manifest.sections.len() {
        let entry = manifest.sections[i].clone();
        if entry.intensity.is_none() {
            continue;
        }
        any = true;
        let stack = manifest.load_intensity(&entry)?;
        let rec = recover_maps_with(
            &stack,
            manifest.incident,
            manifest.pixel_size_um,
            RecoveryOptions { floor_fraction },
        )?;
        degenerate += rec.degenerate_count();
        let mut maps = rec.maps;
        if let Some(p) = &entry.mask {
            maps = maps.with_mask(RasterContainer::load(manifest.resolve(p))?.to_mask()?);
        }
        manifest.store_maps(i, &maps)?;
    }
    if !any {
        return Err(CliError::invalid("no section has an intensity stack"));
    }
    manifest.save(manifest_path)?;
    Ok(degenerate)
}

const MAP_CHANNELS: [&str; 3] = ["transmittance", "direction", "retardation"];

/// Parameter maps as one raster with channels `transmittance`, `direction`,
/// `retardation` and, when present, `mask`.
pub fn maps_raster(maps: &ParameterMaps) -> CliResult<RasterContainer> {
    let mask = maps.mask.as_ref().map(|m| m.map(|v| f64::from(u8::from(*v))));
    let mut grids = vec![
        (MAP_CHANNELS[0], &maps.transmittance),
        (MAP_CHANNELS[1], &maps.direction),
        (MAP_CHANNELS[2], &maps.retardation),
    ];
    if let Some(m) = &mask {
        grids.push(("mask", m));
    }
    Ok(RasterContainer::from_grids(&grids)?)
}

pub fn maps_from_raster(r: &RasterContainer, incident: f64, pixel_size_um: f64) -> CliResult<ParameterMaps> {
    let maps = ParameterMaps::new(
        r.channel_by_name(MAP_CHANNELS[0])?,
        r.channel_by_name(MAP_CHANNELS[1])?
            .map(|p| pli_core::signal::canonical_direction(*p)),
        r.channel_by_name(MAP_CHANNELS[2])?,
        incident,
        pixel_size_um,
    )?;
    Ok(if r.names.iter().any(|n| n == "mask") {
        maps.with_mask(r.channel_by_name("mask")?.map(|v| *v != 0.0))
    } else {
        maps
    })
}

/// Draw one augmentation chain from `seed` and apply it.
pub fn augment(
    maps: &ParameterMaps,
    spec: &AugmentationSpec,
    seed: u64,
) -> CliResult<(AugmentationChain, RasterContainer)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chain, warped) = sample_augmentation(spec, maps, &mut rng)?;
    let mut out = maps_raster(&warped.maps)?;
    let domain = warped.in_domain.map(|v| f64::from(u8::from(*v)));
    let mut grids: Vec<(String, Grid<f64>)> = Vec::new();
    for (c, name) in out.names.iter().enumerate() {
        grids.push((name.clone(), out.channel(c)?));
    }
    grids.push(("in_domain".into(), domain));
    let refs: Vec<(&str, &Grid<f64>)> = grids.iter().map(|(n, g)| (n.as_str(), g)).collect();
    out = RasterContainer::from_grids(&refs)?;
    Ok((chain, out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FeatureMethod {
    Hist,
    Lbp,
    Glcm,
    Combined,
    Encoder,
}

impl FeatureMethod {
    fn classical(self) -> Option<ClassicalKind> {
        match self {
            FeatureMethod::Hist => Some(ClassicalKind::Histogram),
            FeatureMethod::Lbp => Some(ClassicalKind::Lbp),
            FeatureMethod::Glcm => Some(ClassicalKind::Glcm),
            FeatureMethod::Combined => Some(ClassicalKind::Combined),
            FeatureMethod::Encoder => None,
        }
    }
}

/// Feature maps for every section with parameter maps, in manifest order.
pub fn extract_features(
    manifest: &StackManifest,
    method: FeatureMethod,
    state: Option<&TrainState>,
    tile: usize,
    stride: usize,
) -> CliResult<(Vec<String>, Vec<FeatureMap>)> {
    let mut ids = Vec::new();
    let mut out = Vec::new();
    for (i, s) in manifest.sections.iter().filter(|s| s.has_maps()).enumerate() {
        let maps = manifest.load_maps(s)?;
        let fm = match (method.classical(), state) {
            (Some(kind), _) => classical_feature_map(&maps, i, kind, tile, stride)?,
            (None, Some(state)) => embed(&maps, i, state, tile, stride)?,
            (None, None) => return Err(CliError::usage("encoder features need --ckpt")),
        };
        ids.push(s.id.clone());
        out.push(fm);
    }
    if out.is_empty() {
        return Err(CliError::invalid("no section has parameter maps; run recover first"));
    }
    Ok((ids, out))
}

pub fn train(
    manifest: &StackManifest,
    mode: PairMode,
    radius_um: f64,
    settings: &TrainSettings,
    progress: impl FnMut(u64, f64),
) -> CliResult<TrainOutcome> {
    let train_split = manifest
        .sections
        .iter()
        .any(|s| s.split == pli_core::io::Split::Train)
        .then_some(pli_core::io::Split::Train);
    let stack = manifest.load_stack(train_split)?;
    let pairs = PairSpec {
        mode,
        radius_um,
        patch_side: settings.pairs.patch_side,
        max_retries: settings.pairs.max_retries,
        seed: settings.pairs.seed,
    };
    Ok(train_with_progress(
        &stack,
        &pairs,
        &settings.augmentation,
        &settings.encoder,
        &settings.train,
        progress,
    )?)
}

/// Optional PCA projection (first `components` axes), then optional
/// Gaussian smoothing of every channel.
pub fn reduce(
    maps: &[FeatureMap],
    pca: Option<&PcaModel>,
    components: Option<usize>,
    smooth_sigma: f64,
) -> CliResult<Vec<FeatureMap>> {
    let truncated = match (pca, components) {
        (Some(p), Some(k)) => {
            if k == 0 || k > p.k() {
                return Err(CliError::invalid(format!("components must lie in 1..={}", p.k())));
            }
            Some(truncate_pca(p, k))
        }
        (Some(p), None) => Some(p.clone()),
        (None, Some(_)) => return Err(CliError::usage("components need a PCA model")),
        (None, None) => None,
    };
    maps.iter()
        .map(|m| {
            let m = match &truncated {
                Some(p) => p.project_map(m)?,
                None => m.clone(),
            };
            Ok(if smooth_sigma > 0.0 {
                smooth(&m, smooth_sigma)?
            } else {
                m
            })
        })
        .collect()
}

pub fn truncate_pca(p: &PcaModel, k: usize) -> PcaModel {
    PcaModel {
        mean: p.mean.clone(),
        components: p.components[..k].to_vec(),
        explained_variance: p.explained_variance[..k].to_vec(),
        explained_variance_ratio: p.explained_variance_ratio[..k].to_vec(),
        rank_deficient: p.rank_deficient,
    }
}

pub fn zscore_maps(maps: &[FeatureMap]) -> CliResult<Vec<FeatureMap>> {
    let z = ZScore::fit(&stack_samples(maps)?);
    maps.iter()
        .map(|m| {
            Ok(m.map_foreground(
                &z.apply(&m.foreground_samples()),
                &format!("{}+z", m.provenance.extractor),
            )?)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ClusterSettings {
    pub k: usize,
    pub cuts: Vec<usize>,
    pub max_fit_samples: usize,
    pub seed: u64,
}

pub struct ClusterOutput {
    pub clustering: TwoStepClustering,
    pub fine: Vec<Grid<usize>>,
    pub cuts: BTreeMap<usize, Vec<Grid<usize>>>,
    pub silhouettes: BTreeMap<usize, f64>,
}

pub fn cluster(maps: &[FeatureMap], s: &ClusterSettings) -> CliResult<ClusterOutput> {
    let samples = stack_samples(maps)?;
    if samples.rows() < s.k {
        return Err(CliError::invalid(format!(
            "{} foreground samples cannot form {} clusters",
            samples.rows(),
            s.k
        )));
    }
    let clustering = TwoStepClustering::fit(&samples, s.k, s.max_fit_samples, s.seed)?;
    let fine = label_maps(maps, &clustering, None)?;
    let mut cuts = BTreeMap::new();
    let mut silhouettes = BTreeMap::new();
    for &m in &s.cuts {
        if m == 0 || m > s.k {
            return Err(CliError::invalid(format!("cut {m} outside 1..={}", s.k)));
        }
        let labels = clustering.labels(&samples, Some(m))?;
        if m > 1 {
            silhouettes.insert(m, silhouette(&samples, &labels, SILHOUETTE_SUBSAMPLE, s.seed)?);
        }
        cuts.insert(m, label_maps(maps, &clustering, Some(m))?);
    }
    Ok(ClusterOutput {
        clustering,
        fine,
        cuts,
        silhouettes,
    })
}

pub fn cut_dir(m: usize) -> String {
    format!("m{m}")
}

/// Writes `clustering.json`, `dendrogram.tsv`, `silhouette.csv`, the fine
/// labels under `fine/` and each cut under `m<m>/`.
pub fn save_clusters(out: &Path, ids: &[String], maps: &[FeatureMap], c: &ClusterOutput) -> CliResult<()> {
    std::fs::create_dir_all(out)?;
    let json = serde_json::to_string(&c.clustering).map_err(|e| CliError::invalid(e.to_string()))?;
    std::fs::write(out.join("clustering.json"), json)?;
    std::fs::write(out.join("dendrogram.tsv"), c.clustering.dendrogram.to_table())?;
    let mut csv = String::from("m,silhouette\n");
    for (m, v) in &c.silhouettes {
        csv.push_str(&format!("{m},{v}\n"));
    }
    std::fs::write(out.join("silhouette.csv"), csv)?;
    let masks: Vec<Grid<bool>> = maps.iter().map(|m| m.mask.clone()).collect();
    let set = |clusters, labels: &Vec<Grid<usize>>| LabelSet {
        ids: ids.to_vec(),
        clusters,
        labels: labels.clone(),
        masks: masks.clone(),
    };
    if c.clustering.kmeans.k() <= 256 {
        save_labels(out.join("fine"), &set(c.clustering.kmeans.k(), &c.fine))?;
    }
    for (m, labels) in &c.cuts {
        save_labels(out.join(cut_dir(*m)), &set(*m, labels))?;
    }
    Ok(())
}

pub fn label_iou(set: &LabelSet) -> CliResult<f64> {
    Ok(cross_section_iou(&set.labels, &set.masks)?)
}

fn labeled_samples(maps: &[FeatureMap], points: &[LabeledPoint]) -> CliResult<Samples> {
    let channels = maps.first().map_or(0, |m| m.channels);
    let mut x = Samples::empty(channels);
    for p in points {
        let map = maps
            .get(p.section)
            .ok_or_else(|| CliError::invalid(format!("labelled point in unknown section {}", p.section)))?;
        if p.x >= map.width || p.y >= map.height {
            return Err(CliError::invalid(format!(
                "labelled point ({}, {}) outside the {}x{} feature map",
                p.x, p.y, map.width, map.height
            )));
        }
        let row: Vec<f64> = map.pixel(p.x, p.y).iter().map(|v| *v as f64).collect();
        x.push(&row)?;
    }
    Ok(x)
}

/// Class names sorted and numbered from zero.
pub fn class_indices(points: &[LabeledPoint]) -> (Vec<String>, Vec<usize>) {
    let mut names: Vec<String> = points.iter().map(|p| p.label.clone()).collect();
    names.sort();
    names.dedup();
    let idx = points
        .iter()
        .map(|p| names.binary_search(&p.label).expect("label was collected"))
        .collect();
    (names, idx)
}

pub fn probe_classify(
    maps: &[FeatureMap],
    points: &[LabeledPoint],
    config: &ClassifierProbeConfig,
) -> CliResult<(Vec<String>, ProbeScore)> {
    let x = labeled_samples(maps, points)?;
    let (names, y) = class_indices(points);
    if names.len() < 2 {
        return Err(CliError::invalid("classification needs at least two classes"));
    }
    Ok((names, evaluate_classifier(&x, &y, config)?))
}

pub fn probe_regress(maps: &[FeatureMap], points: &[LabeledPoint], config: &RegressorProbeConfig) -> CliResult<f64> {
    let x = labeled_samples(maps, points)?;
    let y = points
        .iter()
        .map(|p| {
            p.label
                .trim()
                .parse::<f64>()
                .map_err(|_| CliError::invalid(format!("target {:?} is not a number", p.label)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(evaluate_regressor(&x, &y, config)?)
}

pub fn retrieve(maps: &[FeatureMap], points: &[QueryPoint], sigma: f64) -> CliResult<Vec<Grid<f64>>> {
    if points.is_empty() {
        return Err(CliError::invalid("no query points"));
    }
    Ok(rbf_retrieve(maps, points, sigma)?)
}
