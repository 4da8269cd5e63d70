//! HTTP service behind the pose explorer: the map, rendered views and a
//! health probe.

use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use facepipe_core::appearance::AppearanceMap;
use facepipe_core::io::encode_png;
use facepipe_core::render::Renderer;
use facepipe_core::Pose;
use serde::Deserialize;
use serde_json::json;

use crate::pipeline::render_pose;

pub struct ServiceState {
    pub map: Option<AppearanceMap<f64>>,
    pub renderer: Box<dyn Renderer<f64>>,
    pub size: usize,
}

#[derive(Debug, Deserialize)]
pub struct ViewQuery {
    pub yaw: f64,
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "version": 1, "error": msg.into() }))).into_response()
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/map", get(map))
        .route("/view", get(view))
        .with_state(Arc::new(state))
}

async fn health() -> impl IntoResponse {
    Json(json!({ "status": "ok" }))
}

async fn map(State(state): State<Arc<ServiceState>>) -> Response {
    match &state.map {
        Some(m) => Json(m.to_json()).into_response(),
        None => error(StatusCode::SERVICE_UNAVAILABLE, "no appearance map is loaded"),
    }
}

async fn view(
    State(state): State<Arc<ServiceState>>,
    query: Result<Query<ViewQuery>, axum::extract::rejection::QueryRejection>,
) -> Response {
    let Query(q) = match query {
        Ok(q) => q,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    if state.map.is_none() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no appearance map is loaded");
    }
    let pose = Pose::new(q.yaw, q.pitch, q.roll);
    let st = state.clone();
    let rendered = tokio::task::spawn_blocking(move || {
        let map = st.map.as_ref().expect("checked above");
        let v = render_pose(map, st.renderer.as_ref(), &pose, st.size)?;
        let png = encode_png(&v.image)?;
        Ok::<_, crate::error::PipelineError>((png, v.answer))
    })
    .await;
    let (png, answer) = match rendered {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => return error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let weights: Vec<String> = answer.weights.iter().map(|(v, l)| format!("{v}:{l}")).collect();
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    headers.insert("x-triangle-id", HeaderValue::from(answer.triangle));
    if let Ok(h) = HeaderValue::from_str(&weights.join(",")) {
        headers.insert("x-weights", h);
    }
    (headers, png).into_response()
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: ServiceState, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
