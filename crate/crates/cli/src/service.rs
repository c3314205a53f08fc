//! HTTP API over a [`Dataset`].
//!
//! | route | result |
//! |---|---|
//! | `GET /api/datasets` | dataset name, sections, layers, raster sizes |
//! | `GET /api/sections/{id}/image?layer=` | PNG of `transmittance`, `fom` or `cluster:<m>` |
//! | `POST /api/query` | per-section affinity heatmaps for a set of query voxels |
//! | `GET /api/feature-meta` | extractor, PCA summary and checkpoint provenance |
//!
//! Unknown sections or layers give 404, an unparsable or inconsistent query
//! 422 and a query without points 400.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use pli_core::analysis::{rbf_retrieve, QueryPoint};
use pli_core::io::{encode_png_gray, encode_png_rgb, render_gray, render_heat, render_labels, RasterContainer};
use serde::Deserialize;
use serde_json::json;

use crate::dataset::{Dataset, QUERY_SMOOTH_SIGMA};
use crate::ops::reduce;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(dataset: Arc<Dataset>) -> Router {
    Router::new()
        .route("/api/datasets", get(datasets))
        .route("/api/sections/{id}/image", get(section_image))
        .route("/api/query", post(query))
        .route("/api/feature-meta", get(feature_meta))
        .with_state(dataset)
}

pub async fn serve(dataset: Dataset, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(dataset))).await
}

async fn datasets(State(ds): State<Arc<Dataset>>) -> Json<serde_json::Value> {
    let (h, w) = ds.maps.first().map_or((0, 0), |m| m.dims());
    let f = ds.features.maps.first();
    Json(json!([{
        "name": ds.name,
        "sections": ds.manifest.sections.iter().map(|s| &s.id).collect::<Vec<_>>(),
        "layers": ds.layers(),
        "pixel_size_um": ds.manifest.pixel_size_um,
        "spacing_um": ds.manifest.spacing_um,
        "image": { "height": h, "width": w },
        "features": {
            "height": f.map_or(0, |m| m.height),
            "width": f.map_or(0, |m| m.width),
            "channels": ds.features.index.channels,
        },
    }]))
}

#[derive(Deserialize)]
struct ImageQuery {
    layer: Option<String>,
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn section_image(
    State(ds): State<Arc<Dataset>>,
    Path(id): Path<String>,
    Query(q): Query<ImageQuery>,
) -> ApiResult<Response> {
    let s = ds
        .section_index(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown section {id:?}")))?;
    let layer = q.layer.as_deref().unwrap_or("transmittance");
    let bytes = match layer {
        "transmittance" => {
            let maps = &ds.maps[s];
            encode_png_gray(&render_gray(&maps.transmittance, 0.0, maps.incident))
        }
        "fom" => encode_png_rgb(&ds.fom(s).map_err(ApiError::internal)?),
        other => {
            let set = other
                .strip_prefix("cluster:")
                .and_then(|m| m.parse::<usize>().ok())
                .and_then(|m| ds.clusterings.get(&m))
                .ok_or_else(|| ApiError::not_found(format!("unknown layer {other:?}")))?;
            encode_png_rgb(&render_labels(&set.labels[s], &set.masks[s]))
        }
    }
    .map_err(ApiError::internal)?;
    Ok(png(bytes))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SectionRef {
    Index(usize),
    Id(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PointRequest {
    section: SectionRef,
    x: usize,
    y: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    points: Vec<PointRequest>,
    sigma: f64,
    components: Option<usize>,
    /// Also return each affinity map as a base64 raster container.
    #[serde(default)]
    raw: bool,
}

async fn query(State(ds): State<Arc<Dataset>>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let req: QueryRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(format!("malformed query: {e}")))?;
    if req.points.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "query has no points"));
    }
    let mut points = Vec::with_capacity(req.points.len());
    for p in &req.points {
        let section = match &p.section {
            SectionRef::Index(i) if *i < ds.manifest.sections.len() => *i,
            SectionRef::Index(i) => return Err(ApiError::not_found(format!("unknown section {i}"))),
            SectionRef::Id(id) => ds
                .section_index(id)
                .ok_or_else(|| ApiError::not_found(format!("unknown section {id:?}")))?,
        };
        points.push(QueryPoint {
            section,
            x: p.x,
            y: p.y,
        });
    }
    if !(req.sigma > 0.0 && req.sigma.is_finite()) {
        return Err(ApiError::unprocessable("sigma must be positive"));
    }
    let components = req.components.unwrap_or(ds.pca.k());
    let volume = reduce(&ds.features.maps, Some(&ds.pca), Some(components), QUERY_SMOOTH_SIGMA)
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let affinities = rbf_retrieve(&volume, &points, req.sigma).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let mut sections = Vec::with_capacity(affinities.len());
    for ((a, map), entry) in affinities.iter().zip(&volume).zip(&ds.manifest.sections) {
        let image = encode_png_rgb(&render_heat(a, Some(&map.mask))).map_err(ApiError::internal)?;
        let max = a.as_slice().iter().copied().fold(0.0, f64::max);
        let mut item = json!({
            "id": entry.id,
            "height": a.height(),
            "width": a.width(),
            "max": max,
            "png": STANDARD.encode(image),
        });
        if req.raw {
            let bytes = RasterContainer::from_grid("affinity", a)
                .to_bytes()
                .map_err(ApiError::internal)?;
            item["raster"] = json!(STANDARD.encode(bytes));
        }
        sections.push(item);
    }
    Ok(Json(json!({
        "sigma": req.sigma,
        "components": components,
        "smooth_sigma": QUERY_SMOOTH_SIGMA,
        "sections": sections,
    })))
}

async fn feature_meta(State(ds): State<Arc<Dataset>>) -> Json<serde_json::Value> {
    Json(ds.feature_meta())
}
