use std::path::Path;
use std::process::{Command, Output};

use pli_core::io::{load_features, load_labels, RasterContainer, StackManifest};
use pli_core::phantom::{cortex_phantom_spec, PhantomSpec};

fn pli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pli")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pli(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "pli {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(pli(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pli(&["train", "--out", "x"]).status.code(), Some(1));
    assert_eq!(
        pli(&["features", "--method", "sift", "--stack", "a", "--out", "b"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(pli(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    std::fs::write(&spec, "width = 0\n").unwrap();
    let out = pli(&["synth", "--spec", s(&spec), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let raster = dir.path().join("broken.plir");
    std::fs::write(&raster, b"PLIR\x01\x00garbage").unwrap();
    let out = pli(&["augment", "--in", s(&raster), "--out", s(&dir.path().join("o.plir"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = pli(&["iou", "--labels", s(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.toml");
    let out = pli(&["synth", "--spec", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn small_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec_path = d.join("phantom.toml");
    std::fs::write(&spec_path, cortex_phantom_spec(128, 2, 5).to_toml()).unwrap();
    let data = d.join("data");
    let stack = data.join("stack.toml");
    ok(&["synth", "--spec", s(&spec_path), "--out", s(&data)]);
    ok(&["recover", "--stack", s(&stack)]);
    let manifest = StackManifest::load(&stack).unwrap();
    assert_eq!(manifest.sections.len(), 2);
    assert!(manifest.sections.iter().all(|e| e.has_maps()));

    let hist = d.join("hist");
    ok(&["features", "--method", "hist", "--stack", s(&stack), "--out", s(&hist)]);
    assert_eq!(load_features(&hist).unwrap().index.channels, 15);

    let config = d.join("train.toml");
    std::fs::write(
        &config,
        "[train]\nbatch_pairs = 8\nvalidation_batches = 1\nepoch_steps = 2\n",
    )
    .unwrap();
    let ckpt = data.join("model.plic");
    ok(&[
        "train",
        "--stack",
        s(&stack),
        "--mode",
        "cl3d",
        "--radius",
        "60",
        "--config",
        s(&config),
        "--steps",
        "3",
        "--out",
        s(&ckpt),
    ]);
    let features = data.join("features");
    ok(&["embed", "--ckpt", s(&ckpt), "--stack", s(&stack), "--out", s(&features)]);
    let set = load_features(&features).unwrap();
    assert_eq!(set.index.channels, 64);
    assert_eq!(set.index.extractor, "encoder");

    let pca = data.join("pca.plic");
    let out = ok(&["pca", "--features", s(&features), "--k", "6", "--out", s(&pca)]);
    assert!(out.contains("6 components"));

    let clusters = data.join("clusters");
    ok(&[
        "cluster",
        "--features",
        s(&features),
        "--kmeans",
        "8",
        "--cuts",
        "2,4",
        "--pca",
        s(&pca),
        "--smooth",
        "1",
        "--out",
        s(&clusters),
    ]);
    assert_eq!(load_labels(clusters.join("m4")).unwrap().clusters, 4);
    assert!(
        std::fs::read_to_string(clusters.join("dendrogram.tsv"))
            .unwrap()
            .lines()
            .count()
            == 8
    );
    let out = ok(&["iou", "--labels", s(&clusters.join("m4"))]);
    let iou: f64 = out.trim().strip_prefix("iou ").unwrap().parse().unwrap();
    assert!((0.0..=100.0).contains(&iou));

    let mask = &set.maps[0].mask;
    let (x, y) = (0..mask.height())
        .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
        .find(|&(x, y)| *mask.get(x, y))
        .unwrap();
    let points = d.join("points.csv");
    std::fs::write(&points, format!("section,x,y\n0,{x},{y}\n")).unwrap();
    let hits = d.join("hits");
    ok(&[
        "retrieve",
        "--features",
        s(&features),
        "--points",
        s(&points),
        "--sigma",
        "3.5",
        "--pca",
        s(&pca),
        "--components",
        "4",
        "--out",
        s(&hits),
    ]);
    let a = RasterContainer::load(hits.join("s000.affinity.plir"))
        .unwrap()
        .channel(0)
        .unwrap();
    assert!((a.get(x, y) - 1.0).abs() < 1e-6);
    assert!(hits.join("s001.affinity.png").exists());

    let labels = d.join("labels.csv");
    let mut csv = String::from("section,x,y,label\n");
    for (sec, m) in set.maps.iter().enumerate() {
        for y in 0..m.height {
            for x in 0..m.width {
                if *m.mask.get(x, y) {
                    csv.push_str(&format!(
                        "{sec},{x},{y},{}\n",
                        if x < m.width / 2 { "left" } else { "right" }
                    ));
                }
            }
        }
    }
    std::fs::write(&labels, csv).unwrap();
    let out = ok(&[
        "probe",
        "classify",
        "--features",
        s(&hist),
        "--labels",
        s(&labels),
        "--n-per-class",
        "5",
        "--repeats",
        "3",
    ]);
    assert!(out.contains("classes left,right"));
}

#[test]
fn augment_writes_a_crop() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = PhantomSpec {
        sections: 1,
        ..cortex_phantom_spec(64, 1, 1)
    };
    let phantom = pli_core::phantom::generate(&spec).unwrap();
    let input = d.join("maps.plir");
    pli_cli::ops::maps_raster(&phantom.stack.sections[0].maps)
        .unwrap()
        .save(&input)
        .unwrap();
    let aug = d.join("aug.toml");
    std::fs::write(&aug, "crop = 40\nblur_probability = 0.0\n").unwrap();
    let out_path = d.join("out.plir");
    let a = ok(&[
        "augment",
        "--in",
        s(&input),
        "--aug",
        s(&aug),
        "--seed",
        "4",
        "--out",
        s(&out_path),
    ]);
    let b = ok(&[
        "augment",
        "--in",
        s(&input),
        "--aug",
        s(&aug),
        "--seed",
        "4",
        "--out",
        s(&out_path),
    ]);
    assert_eq!(a, b);
    let r = RasterContainer::load(&out_path).unwrap();
    assert_eq!((r.height, r.width), (40, 40));
    assert!(r.names.iter().any(|n| n == "in_domain"));
}
