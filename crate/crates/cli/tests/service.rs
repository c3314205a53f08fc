use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use http_body_util::BodyExt;
use pli_cli::dataset::{Dataset, QUERY_SMOOTH_SIGMA};
use pli_cli::ops::{self, ClusterSettings, FeatureMethod, MANIFEST_FILE};
use pli_cli::service::router;
use pli_core::analysis::{rbf_retrieve, QueryPoint};
use pli_core::io::{decode_png, heat_entry, save_features, RasterContainer, StackManifest};
use pli_core::phantom::cortex_phantom_spec;
use serde_json::{json, Value};
use tower::ServiceExt;

fn build(dir: &Path) {
    let spec = cortex_phantom_spec(128, 2, 3);
    ops::synthesize(&spec, dir).unwrap();
    ops::recover(&dir.join(MANIFEST_FILE), 1e-6).unwrap();
    let manifest = StackManifest::load(dir.join(MANIFEST_FILE)).unwrap();
    let (ids, maps) = ops::extract_features(&manifest, FeatureMethod::Hist, None, 32, 16).unwrap();
    save_features(dir.join("features"), &ids, &maps, 32, manifest.pixel_size_um).unwrap();
    let z = ops::zscore_maps(&maps).unwrap();
    let settings = ClusterSettings {
        k: 8,
        cuts: vec![3],
        max_fit_samples: 10_000,
        seed: 0,
    };
    let c = ops::cluster(&z, &settings).unwrap();
    ops::save_clusters(&dir.join("clusters"), &ids, &z, &c).unwrap();
}

struct Fixture {
    _dir: tempfile::TempDir,
    ds: Arc<Dataset>,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    build(dir.path());
    let ds = Arc::new(Dataset::open(dir.path()).unwrap());
    Fixture { _dir: dir, ds }
}

async fn call(ds: &Arc<Dataset>, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = router(ds.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(body: impl Into<String>) -> Request<Body> {
    Request::post("/api/query")
        .header("content-type", "application/json")
        .body(Body::from(body.into()))
        .unwrap()
}

fn foreground_point(ds: &Dataset, section: usize, skip: usize) -> (usize, usize) {
    let m = &ds.features.maps[section];
    (0..m.height)
        .flat_map(|y| (0..m.width).map(move |x| (x, y)))
        .filter(|&(x, y)| *m.mask.get(x, y))
        .nth(skip)
        .expect("foreground voxel")
}

#[tokio::test]
async fn endpoints() {
    let f = fixture();
    let ds = &f.ds;

    let (status, body) = call(ds, get("/api/datasets")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v[0]["sections"], json!(["s000", "s001"]));
    assert_eq!(v[0]["layers"], json!(["transmittance", "fom", "cluster:3"]));
    assert_eq!(v[0]["image"]["width"], 128);

    for layer in ["transmittance", "fom", "cluster:3"] {
        let (status, body) = call(ds, get(&format!("/api/sections/s001/image?layer={layer}"))).await;
        assert_eq!(status, StatusCode::OK, "{layer}");
        let (w, _, c, _) = decode_png(&body).unwrap();
        let expected = if layer.starts_with("cluster") {
            ds.features.maps[1].width
        } else {
            128
        };
        assert_eq!(w, expected);
        assert_eq!(c, if layer == "transmittance" { 1 } else { 3 });
    }
    let (status, _) = call(ds, get("/api/sections/nope/image?layer=fom")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(ds, get("/api/sections/s000/image?layer=cluster:5")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(ds, get("/api/sections/s000/image?layer=depth")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(ds, get("/api/feature-meta")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["extractor"], "histogram");
    assert_eq!(v["channels"], 15);
    assert_eq!(v["pca"]["components"], 15);
    assert_eq!(v["pca"]["fitted_on_load"], true);
}

#[tokio::test]
async fn query_errors() {
    let f = fixture();
    let ds = &f.ds;
    let cases = [
        ("{not json", StatusCode::UNPROCESSABLE_ENTITY),
        (r#"{"points": [], "sigma": 1.0}"#, StatusCode::BAD_REQUEST),
        (
            r#"{"points": [{"section": "zz", "x": 0, "y": 0}], "sigma": 1.0}"#,
            StatusCode::NOT_FOUND,
        ),
        (
            r#"{"points": [{"section": 7, "x": 0, "y": 0}], "sigma": 1.0}"#,
            StatusCode::NOT_FOUND,
        ),
        (
            r#"{"points": [{"section": 0, "x": 0}], "sigma": 1.0}"#,
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            r#"{"points": [{"section": 0, "x": 99, "y": 0}], "sigma": 1.0}"#,
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            r#"{"points": [{"section": 0, "x": 3, "y": 3}], "sigma": -1.0}"#,
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
        (
            r#"{"points": [{"section": 0, "x": 3, "y": 3}], "sigma": 1.0, "components": 99}"#,
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
    ];
    for (body, expected) in cases {
        let (status, _) = call(ds, post(body)).await;
        assert_eq!(status, expected, "{body}");
    }
}

#[tokio::test]
async fn single_voxel_query_peaks_at_the_voxel() {
    let f = fixture();
    let ds = &f.ds;
    let (x, y) = foreground_point(ds, 1, 5);
    let body = json!({ "points": [{ "section": "s001", "x": x, "y": y }], "sigma": 2.0, "components": 5 });
    let (status, body) = call(ds, post(body.to_string())).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["components"], 5);
    let s = &v["sections"][1];
    assert_eq!(s["id"], "s001");
    assert!((s["max"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let png = STANDARD.decode(s["png"].as_str().unwrap()).unwrap();
    let (w, h, c, data) = decode_png(&png).unwrap();
    assert_eq!((w, h, c), (ds.features.maps[1].width, ds.features.maps[1].height, 3));
    let at = 3 * (y * w + x);
    assert_eq!(&data[at..at + 3], &heat_entry(255));
    let brightest = data
        .chunks(3)
        .map(|p| p.iter().map(|v| *v as u32).sum::<u32>())
        .max()
        .unwrap();
    assert_eq!(brightest, 3 * 255);
}

#[tokio::test]
async fn two_point_query_matches_direct_retrieval() {
    let f = fixture();
    let ds = &f.ds;
    let (x0, y0) = foreground_point(ds, 0, 2);
    let (x1, y1) = foreground_point(ds, 1, 9);
    let body = json!({
        "points": [{ "section": 0, "x": x0, "y": y0 }, { "section": "s001", "x": x1, "y": y1 }],
        "sigma": 3.0,
        "components": 4,
        "raw": true,
    });
    let (status, body) = call(ds, post(body.to_string())).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();

    let volume = ops::reduce(&ds.features.maps, Some(&ds.pca), Some(4), QUERY_SMOOTH_SIGMA).unwrap();
    let points = [
        QueryPoint {
            section: 0,
            x: x0,
            y: y0,
        },
        QueryPoint {
            section: 1,
            x: x1,
            y: y1,
        },
    ];
    let expected = rbf_retrieve(&volume, &points, 3.0).unwrap();
    for (s, e) in v["sections"].as_array().unwrap().iter().zip(&expected) {
        let raw = STANDARD.decode(s["raster"].as_str().unwrap()).unwrap();
        let got = RasterContainer::from_bytes(&raw).unwrap().channel(0).unwrap();
        for (a, b) in got.as_slice().iter().zip(e.as_slice()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}
