//! Acceptance run: one `[PASS]`/`[FAIL]` line per primary criterion.
//! Exits non-zero when any criterion fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use oracles::{axial_diff, info_nce_reference, profile_mix_reference, rbf_reference, ward_reference};
use pli_cli::dataset::QUERY_SMOOTH_SIGMA;
use pli_core::analysis::{
    assign, cross_section_iou, cut, evaluate_classifier, evaluate_regressor, kmeans, rbf_retrieve, silhouette,
    ward_agglomerate, ClassifierProbeConfig, QueryPoint, RegressorProbeConfig, ZScore,
};
use pli_core::augment::{resample_point, sample_augmentation, scale_attenuation, AugmentationSpec};
use pli_core::context::{PairMode, PairSpec};
use pli_core::contrastive::{
    embed, gradient_check, info_nce, train, EncoderConfig, EncoderParams, Tensor, TrainConfig, TrainState,
};
use pli_core::features::{ClassicalKind, TexturePatch, TileGrid};
use pli_core::io::{RasterContainer, RasterData};
use pli_core::phantom::{consistency_phantom_spec, cortex_phantom_spec, generate, two_texture_benchmark, Phantom};
use pli_core::pipeline::{fit_pca, smooth, stack_samples, FeatureMap, Provenance, Samples};
use pli_core::signal::{default_angles, recover_maps, stack_channels, synthesize_profile};
use pli_core::{Grid, ParameterMaps};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TILE: usize = 32;
const STRIDE: usize = 16;
const RADIUS_UM: f64 = 118.0;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Runner {
    failed: usize,
}

impl Runner {
    fn check(&mut self, id: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {id} {detail} ({secs:.1} s)"),
            Err(detail) => {
                self.failed += 1;
                println!("[FAIL] {id} {detail} ({secs:.1} s)");
            }
        }
    }
}

fn random_maps(rng: &mut ChaCha8Rng, side: usize) -> ParameterMaps {
    let t = Grid::from_fn(side, side, |_, _| rng.random_range(0.05..1.0));
    let d = Grid::from_fn(side, side, |_, _| rng.random_range(0.0..PI));
    let r = Grid::from_fn(side, side, |_, _| rng.random_range(0.01..1.0));
    ParameterMaps::new(t, d, r, 1.0, 1.3).unwrap()
}

fn p1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let angles = default_angles();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let maps = random_maps(&mut rng, 3);
        let back = recover_maps(&synthesize_profile(&maps, &angles).unwrap(), 1.0)
            .unwrap()
            .maps;
        for i in 0..9 {
            let (x, y) = (i % 3, i / 3);
            worst = worst
                .max((back.transmittance.get(x, y) - maps.transmittance.get(x, y)).abs())
                .max((back.retardation.get(x, y) - maps.retardation.get(x, y)).abs())
                .max(axial_diff(*back.direction.get(x, y), *maps.direction.get(x, y)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-9 && secs < 5.0,
        format!("max error {worst:.2e} over 1e4 maps in {secs:.2} s"),
    )
}

fn p2() -> Outcome {
    use pli_core::augment::{apply_affine, Affine, Mat2};
    let n = 65;
    let field = |x: f64, y: f64| (0.4 + 0.003 * x - 0.002 * y).rem_euclid(PI);
    let maps = ParameterMaps::new(
        Grid::filled(n, n, 0.6),
        Grid::from_fn(n, n, |x, y| field(x as f64, y as f64)),
        Grid::from_fn(n, n, |x, y| 0.4 + 0.002 * (x + y) as f64),
        1.0,
        1.3,
    )
    .unwrap();
    let stack = synthesize_profile(&maps, &default_angles()).unwrap();
    let base = recover_maps(&stack, 1.0).unwrap().maps;
    let c = (n as f64 - 1.0) / 2.0;
    let mut worst = 0.0f64;
    for deg in [30.0f64, 45.0, 90.0] {
        let theta = deg.to_radians();
        let rotated = apply_affine(&base, &Affine::about_centers(Mat2::rotation(theta), (c, c), (c, c))).unwrap();
        let rec = recover_maps(&synthesize_profile(&rotated.maps, &default_angles()).unwrap(), 1.0)
            .unwrap()
            .maps;
        let inv = Mat2::rotation(-theta);
        for y in 16..n - 16 {
            for x in 16..n - 16 {
                let (sx, sy) = inv.apply(x as f64 - c, y as f64 - c);
                let expected = field(sx + c, sy + c) + theta;
                worst = worst.max(axial_diff(*rec.direction.get(x, y), expected));
            }
        }
    }
    ensure(
        worst < 1e-3,
        format!("max direction error {worst:.2e} rad at 30/45/90 deg"),
    )
}

fn p3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..=4);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let samples: Vec<(f64, f64, f64, f64)> = raw
            .iter()
            .map(|w| {
                (
                    w / total,
                    rng.random_range(0.05..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..PI),
                )
            })
            .collect();
        let (t, r, phi) = resample_point(samples.iter().copied());
        let (et, er, ephi) = profile_mix_reference(&samples);
        worst = worst.max((t - et).abs()).max((r - er).abs());
        if er > 1e-3 {
            worst = worst.max(axial_diff(phi, ephi));
        }
    }
    let (_, r0, _) = resample_point([(0.5, 0.7, 0.6, 0.3), (0.5, 0.7, 0.6, 0.3 + PI / 2.0)]);
    ensure(
        worst < 1e-10 && r0 == 0.0,
        format!("max error {worst:.2e} on 1e3 weight sets, orthogonal r' = {r0}"),
    )
}

fn p4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let maps = random_maps(&mut rng, 48);
    let (_, warped) = sample_augmentation(&AugmentationSpec::identity(32), &maps, &mut rng).unwrap();
    let crop = maps.center_crop(32).unwrap();
    let bits = |g: &Grid<f64>| g.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let identical = bits(&warped.maps.transmittance) == bits(&crop.transmittance)
        && bits(&warped.maps.direction) == bits(&crop.direction)
        && bits(&warped.maps.retardation) == bits(&crop.retardation);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (a, b) = (rng.random_range(0.25..4.0), rng.random_range(0.25..4.0));
        let two = scale_attenuation(&scale_attenuation(&maps, a).unwrap(), b).unwrap();
        let one = scale_attenuation(&maps, a * b).unwrap();
        for (x, y) in two.transmittance.as_slice().iter().zip(one.transmittance.as_slice()) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(
        identical && worst < 1e-12,
        format!("identity crop bit-identical: {identical}, composition error {worst:.2e}"),
    )
}

fn p5() -> Outcome {
    let z1 = Tensor::from_vec(&[2, 3], vec![0.3, -1.0, 2.0, 1.5, 0.2, -0.7]).unwrap();
    let l1 = info_nce(&z1, &[(0, 1)], 0.5).unwrap().0.loss;
    let z2 = Tensor::from_vec(&[4, 3], [0.5, -0.2, 0.9].repeat(4)).unwrap();
    let l2 = info_nce(&z2, &[(0, 1), (2, 3)], 0.5).unwrap().0.loss;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..16)
        .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let z8 = Tensor::from_vec(&[16, 8], rows.concat()).unwrap();
    let pairs: Vec<(usize, usize)> = (0..8).map(|i| (2 * i, 2 * i + 1)).collect();
    let l8 = info_nce(&z8, &pairs, 0.5).unwrap().0.loss;
    let e8 = (l8 - info_nce_reference(&rows, &pairs, 0.5)).abs();
    let e2 = (l2 - 3f64.ln()).abs();
    ensure(
        l1 == 0.0 && e2 < 1e-12 && e8 < 1e-10,
        format!("N=1 loss {l1}, N=2 identical |loss - ln 3| {e2:.1e}, N=8 reference error {e8:.1e}"),
    )
}

fn p6() -> Outcome {
    let cfg = EncoderConfig::default();
    let params = EncoderParams::init(&cfg, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = Tensor::from_vec(
        &[4, 3, 32, 32],
        (0..4 * 3 * 32 * 32).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let start = Instant::now();
    let report = gradient_check(&cfg, &params, &x, &[(0, 1), (2, 3)], 0.5, 1e-4, 1e-6).unwrap();
    let secs = start.elapsed().as_secs_f64();
    ensure(
        report.max_rel_error < 1e-4 && report.checked == params.count() && secs < 60.0,
        format!(
            "{} of {} parameters, max relative error {:.2e} ({} at {}), {} kink retries, {:.1} s",
            report.checked,
            params.count(),
            report.max_rel_error,
            report.worst.0,
            report.worst.1,
            report.kink_retries,
            secs
        ),
    )
}

fn train_model(phantom: &Phantom, mode: PairMode, radius_um: f64) -> TrainState {
    let pairs = PairSpec {
        mode,
        radius_um,
        patch_side: 48,
        max_retries: 16,
        seed: 1,
    };
    let aug = AugmentationSpec {
        crop: TILE,
        ..Default::default()
    };
    train(
        &phantom.stack,
        &pairs,
        &aug,
        &EncoderConfig::default(),
        &TrainConfig::default(),
    )
    .unwrap()
    .state
}

fn embed_all(phantom: &Phantom, state: &TrainState) -> Vec<FeatureMap> {
    phantom
        .stack
        .sections
        .iter()
        .enumerate()
        .map(|(i, s)| embed(&s.maps, i, state, TILE, STRIDE).unwrap())
        .collect()
}

fn row(m: &FeatureMap, c: usize, r: usize) -> Vec<f64> {
    m.pixel(c, r).iter().map(|v| *v as f64).collect()
}

fn p7() -> Outcome {
    let start = Instant::now();
    let phantom = two_texture_benchmark(0).unwrap();
    let state = train_model(&phantom, PairMode::Cl3d, RADIUS_UM);
    let maps = embed_all(&phantom, &state);
    let grid = TileGrid::new(512, 512, TILE, STRIDE).unwrap();
    let mut x = Samples::empty(maps[0].channels);
    let mut y = Vec::new();
    for (m, truth) in maps.iter().zip(&phantom.truth.sections) {
        let tt = truth.at_tiles(&grid);
        for (c, r) in grid.positions() {
            if *tt.pure.get(c, r) {
                x.push(&row(m, c, r)).unwrap();
                y.push(*tt.region.get(c, r));
            }
        }
    }
    let score = evaluate_classifier(&x, &y, &ClassifierProbeConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    ensure(
        score.mean >= 0.90 && secs < 900.0,
        format!(
            "macro F1 {:.3} +- {:.3} (3 classes, 30/class, {} tiles, 50 splits), {secs:.0} s",
            score.mean,
            score.stderr,
            y.len()
        ),
    )
}

fn raw_patches(phantom: &Phantom) -> Vec<FeatureMap> {
    phantom
        .stack
        .sections
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (h, w) = s.maps.dims();
            let grid = TileGrid::new(h, w, TILE, STRIDE).unwrap();
            let channels = stack_channels(&s.maps);
            let mut data = Vec::with_capacity(grid.rows * grid.cols * 3 * TILE * TILE);
            for (c, r) in grid.positions() {
                let (x0, y0) = grid.origin(c, r);
                for g in &channels {
                    for y in y0..y0 + TILE {
                        for x in x0..x0 + TILE {
                            data.push(*g.get(x, y) as f32);
                        }
                    }
                }
            }
            let prov = Provenance {
                section: i,
                extractor: "raw".into(),
                stride: STRIDE,
            };
            FeatureMap::new(
                grid.rows,
                grid.cols,
                3 * TILE * TILE,
                data,
                grid.center_mask(&s.maps),
                prov,
            )
            .unwrap()
        })
        .collect()
}

/// Smooth, z-score, k-means with 8 clusters, mean adjacent-section IoU.
fn kmeans_iou(maps: &[FeatureMap]) -> f64 {
    let smoothed: Vec<FeatureMap> = maps.iter().map(|m| smooth(m, 1.0).unwrap()).collect();
    let all = stack_samples(&smoothed).unwrap();
    let z = ZScore::fit(&all);
    let model = kmeans(&z.apply(&all), 8, 0).unwrap();
    let labels: Vec<Grid<usize>> = smoothed
        .iter()
        .map(|m| {
            let mut it = assign(&z.apply(&m.foreground_samples()), &model).unwrap().into_iter();
            Grid::from_fn(m.height, m.width, |x, y| {
                if *m.mask.get(x, y) {
                    it.next().unwrap()
                } else {
                    0
                }
            })
        })
        .collect();
    let masks: Vec<Grid<bool>> = maps.iter().map(|m| m.mask.clone()).collect();
    cross_section_iou(&labels, &masks).unwrap()
}

struct Consistency {
    phantom: Phantom,
    cl3d: Vec<FeatureMap>,
}

fn consistency() -> Consistency {
    let phantom = generate(&consistency_phantom_spec(7)).unwrap();
    let state = train_model(&phantom, PairMode::Cl3d, RADIUS_UM);
    let cl3d = embed_all(&phantom, &state);
    Consistency { phantom, cl3d }
}

fn p8(data: &Consistency) -> Outcome {
    let cl3d = kmeans_iou(&data.cl3d);
    let raw = kmeans_iou(&raw_patches(&data.phantom));
    let state = train_model(&data.phantom, PairMode::Cl2d, 0.0);
    let cl2d = kmeans_iou(&embed_all(&data.phantom, &state));
    ensure(
        cl3d - raw >= 10.0 && cl3d > cl2d,
        format!("IoU CL-3D {cl3d:.1}, raw patches {raw:.1}, CL-2D(r=0) {cl2d:.1}"),
    )
}

fn grid_for(p: &Phantom) -> TileGrid {
    let (h, w) = p.stack.sections[0].maps.dims();
    TileGrid::new(h, w, TILE, STRIDE).unwrap()
}

fn p9() -> Outcome {
    let dims: Vec<usize> = [
        ClassicalKind::Histogram,
        ClassicalKind::Lbp,
        ClassicalKind::Glcm,
        ClassicalKind::Combined,
    ]
    .iter()
    .map(|k| k.dims())
    .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let maps = random_maps(&mut rng, 32);
        let p = TexturePatch::from_maps(stack_channels(&maps).map(|g| g.map(|v| 0.5 + 0.5 * v))).unwrap();
        for kind in [ClassicalKind::Glcm, ClassicalKind::Lbp] {
            let base = kind.extract(&p).values;
            for q in [
                p.rot90(),
                p.rot90().rot90(),
                p.rot90().rot90().rot90(),
                p.flip_horizontal(),
            ] {
                for (a, b) in base.iter().zip(kind.extract(&q).values) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    ensure(
        dims == [15, 90, 36, 141] && worst < 1e-12,
        format!("dims {dims:?}, GLCM/LBP rot90/flip max deviation {worst:.1e} on 100 patches"),
    )
}

fn p10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pts: Vec<Vec<f64>> = (0..16)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let d = ward_agglomerate(&Samples::from_rows(&pts).unwrap(), None).unwrap();
    let reference = ward_reference(&pts);
    let same = d.merges.len() == reference.len()
        && d.merges
            .iter()
            .zip(&reference)
            .all(|(m, &(a, b, h, s))| (m.a, m.b, m.size) == (a, b, s) && (m.height - h).abs() < 1e-9);

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, c) in [[0.0, 0.0], [8.0, 0.0], [0.0, 8.0], [8.0, 8.0]].iter().enumerate() {
        for _ in 0..40 {
            rows.push(vec![
                c[0] + rng.random_range(-0.5..0.5),
                c[1] + rng.random_range(-0.5..0.5),
            ]);
            labels.push(k);
        }
    }
    let s = silhouette(&Samples::from_rows(&rows).unwrap(), &labels, 10_000, 0).unwrap();

    let mut cuts_exact = true;
    for m in 1..=16 {
        let l = cut(&d, m).unwrap();
        let mut distinct = l.clone();
        distinct.sort();
        distinct.dedup();
        cuts_exact &= distinct.len() == m && distinct.last() == Some(&(m - 1));
    }
    ensure(
        same && s > 0.9 && cuts_exact,
        format!("Ward sequence equal: {same}, blob silhouette {s:.3}, cuts 1..16 exact: {cuts_exact}"),
    )
}

fn p11(data: &Consistency) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 2000;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let x = Samples::from_rows(&rows).unwrap();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 0.5 + r.iter().enumerate().map(|(i, v)| (i as f64 - 2.0) * v).sum::<f64>())
        .collect();
    let exact_cfg = RegressorProbeConfig {
        n_train: n / 2,
        n_test: n / 2,
        lambda: 0.0,
        seed: 0,
    };
    let exact = evaluate_regressor(&x, &y, &exact_cfg).unwrap();
    let mut permuted = y.clone();
    permuted.shuffle(&mut rng);
    let perm = evaluate_regressor(&x, &permuted, &exact_cfg).unwrap();

    let grid = grid_for(&data.phantom);
    let mut fx = Samples::empty(data.cl3d[0].channels);
    let mut fy = Vec::new();
    for (m, truth) in data.cl3d.iter().zip(&data.phantom.truth.sections) {
        let tt = truth.at_tiles(&grid);
        for (c, r) in grid.positions() {
            let d = *tt.depth.get(c, r);
            if !d.is_nan() && *m.mask.get(c, r) {
                fx.push(&row(m, c, r)).unwrap();
                fy.push(d);
            }
        }
    }
    let half = fy.len() / 2;
    let depth_cfg = RegressorProbeConfig {
        n_train: half,
        n_test: half,
        lambda: half as f64,
        seed: 0,
    };
    let depth = evaluate_regressor(&fx, &fy, &depth_cfg).unwrap();
    ensure(
        (exact - 1.0).abs() < 1e-6 && perm <= 0.02 && depth >= 0.6,
        format!(
            "exact R2 {exact:.9}, permuted R2 {perm:.4}, cortical depth R2 {depth:.3} ({} tiles)",
            fy.len()
        ),
    )
}

fn p12(data: &Consistency) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let maps: Vec<FeatureMap> = (0..3)
        .map(|s| {
            let (h, w, c) = (9, 11, 5);
            let values = (0..h * w * c).map(|_| rng.random_range(-2.0f32..2.0)).collect();
            let mask = Grid::from_fn(h, w, |x, y| (x * 3 + y + s) % 7 != 5);
            let prov = Provenance {
                section: s,
                extractor: "random".into(),
                stride: 1,
            };
            FeatureMap::new(h, w, c, values, mask, prov).unwrap()
        })
        .collect();
    let points = [
        QueryPoint { section: 0, x: 1, y: 1 },
        QueryPoint { section: 1, x: 4, y: 7 },
        QueryPoint {
            section: 2,
            x: 10,
            y: 3,
        },
    ];
    let mut worst = 0.0f64;
    for sigma in [0.7, 3.5] {
        let got = rbf_retrieve(&maps, &points, sigma).unwrap();
        for (g, e) in got.iter().zip(rbf_reference(&maps, &points, sigma)) {
            for (a, b) in g.as_slice().iter().zip(e.as_slice()) {
                worst = worst.max((a - b).abs());
            }
        }
    }

    const BUNDLE_A: usize = 3;
    const BUNDLE_B: usize = 4;
    let all = stack_samples(&data.cl3d).unwrap();
    let pca = fit_pca(&all, 20).unwrap();
    let volume = pli_cli::ops::reduce(&data.cl3d, Some(&pca), None, QUERY_SMOOTH_SIGMA).unwrap();
    let grid = grid_for(&data.phantom);
    let truths: Vec<_> = data.phantom.truth.sections.iter().map(|t| t.at_tiles(&grid)).collect();
    let candidates: Vec<(usize, usize)> = grid
        .positions()
        .filter(|&(c, r)| *truths[2].region.get(c, r) == BUNDLE_A && *truths[2].pure.get(c, r))
        .collect();
    let query: Vec<QueryPoint> = [1, 2, 3]
        .iter()
        .map(|q| {
            let (x, y) = candidates[q * candidates.len() / 4];
            QueryPoint { section: 2, x, y }
        })
        .collect();
    let ratio_at = |sigma: f64| {
        let aff = rbf_retrieve(&volume, &query, sigma).unwrap();
        let (mut sa, mut na, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
        for (a, tt) in aff.iter().zip(&truths) {
            for (c, r) in grid.positions() {
                match *tt.region.get(c, r) {
                    BUNDLE_A => (sa, na) = (sa + a.get(c, r), na + 1),
                    BUNDLE_B => (sb, nb) = (sb + a.get(c, r), nb + 1),
                    _ => {}
                }
            }
        }
        (sa / na as f64, sb / nb as f64)
    };
    let (a1, b1) = ratio_at(1.0);
    let (a35, b35) = ratio_at(3.5);
    ensure(
        worst < 1e-10 && a1 >= 2.0 * b1,
        format!(
            "brute force error {worst:.1e}; sigma 1: mean A {a1:.3}, B {b1:.4} (ratio {:.1}); sigma 3.5: A {a35:.3}, B {b35:.3} (ratio {:.2})",
            a1 / b1,
            a35 / b35
        ),
    )
}

fn pli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pli"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "pli {} exited {:?}: {}",
            args[0],
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn p13() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let f32s = RasterContainer::new(
        7,
        5,
        vec!["a".into(), "b".into()],
        RasterData::F32(
            (0..70)
                .map(|_| f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff))
                .collect(),
        ),
    )
    .unwrap();
    let u8s = RasterContainer::new(
        4,
        6,
        vec!["m".into()],
        RasterData::U8((0..24).map(|_| rng.random()).collect()),
    )
    .unwrap();
    let mut round_trip = true;
    for r in [&f32s, &u8s] {
        let bytes = r.to_bytes().unwrap();
        round_trip &= RasterContainer::from_bytes(&bytes).unwrap().to_bytes().unwrap() == bytes
            && RasterContainer::from_bytes(&bytes).unwrap() == *r;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    smoke(dir.path())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(
        round_trip && secs < 600.0,
        format!("raster round trip bit-identical: {round_trip}; smoke pipeline exit 0 in {secs:.0} s"),
    )
}

fn smoke(d: &Path) -> Result<(), String> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let spec = d.join("phantom.toml");
    std::fs::write(&spec, cortex_phantom_spec(256, 3, 13).to_toml()).map_err(|e| e.to_string())?;
    let data = d.join("data");
    let stack = data.join("stack.toml");
    let ckpt = data.join("model.plic");
    let features = data.join("features");
    let clusters = data.join("clusters");
    pli(&["synth", "--spec", &s(&spec), "--out", &s(&data)])?;
    pli(&["recover", "--stack", &s(&stack)])?;
    pli(&[
        "train",
        "--stack",
        &s(&stack),
        "--mode",
        "cl3d",
        "--radius",
        "118",
        "--out",
        &s(&ckpt),
    ])?;
    pli(&[
        "embed",
        "--ckpt",
        &s(&ckpt),
        "--stack",
        &s(&stack),
        "--out",
        &s(&features),
    ])?;
    pli(&[
        "cluster",
        "--features",
        &s(&features),
        "--kmeans",
        "32",
        "--cuts",
        "3,7",
        "--out",
        &s(&clusters),
    ])?;
    let points = d.join("points.csv");
    std::fs::write(&points, "section,x,y\n1,7,7\n").map_err(|e| e.to_string())?;
    pli(&[
        "retrieve",
        "--features",
        &s(&features),
        "--points",
        &s(&points),
        "--sigma",
        "3.5",
        "--out",
        &s(&d.join("hits")),
    ])?;
    Ok(())
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let start = Instant::now();
    let mut runner = Runner { failed: 0 };
    runner.check("P1", p1);
    runner.check("P2", p2);
    runner.check("P3", p3);
    runner.check("P4", p4);
    runner.check("P5", p5);
    runner.check("P6", p6);
    runner.check("P7", p7);
    match catch_unwind(consistency) {
        Ok(data) => {
            runner.check("P8", || p8(&data));
            runner.check("P9", p9);
            runner.check("P10", p10);
            runner.check("P11", || p11(&data));
            runner.check("P12", || p12(&data));
        }
        Err(_) => {
            for id in ["P8", "P11", "P12"] {
                runner.check(id, || Err("training the consistency model failed".into()));
            }
            runner.check("P9", p9);
            runner.check("P10", p10);
        }
    }
    runner.check("P13", p13);
    let total = Duration::from_secs(start.elapsed().as_secs());
    println!("acceptance: {} failed, total {total:?}", runner.failed);
    if runner.failed > 0 {
        std::process::exit(1);
    }
}
