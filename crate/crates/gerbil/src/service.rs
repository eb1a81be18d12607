//! HTTP front end: `POST /annotate` with a NIF document, `GET /health`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use spel_core::{AnnotatedDocument, Linker, SpanAnnotation};

use crate::nif::{emit_nif, parse_nif};

pub const TURTLE: &str = "application/x-turtle";

/// Shared, read-only state of the service.
#[derive(Debug)]
pub struct AnnotationService {
    pub linker: Linker,
    pub kb_prefix: String,
}

impl AnnotationService {
    pub fn new(linker: Linker, kb_prefix: impl Into<String>) -> Self {
        AnnotationService {
            linker,
            kb_prefix: kb_prefix.into(),
        }
    }

    /// Runs the pipeline on a request body. `Err` carries the status code and
    /// a diagnostic message.
    pub fn annotate(&self, body: &str) -> Result<String, (StatusCode, String)> {
        let nif = parse_nif(body).map_err(|e| (StatusCode::BAD_REQUEST, e.to_string()))?;
        let doc = AnnotatedDocument::new(document_id(&nif.context_uri), nif.is_string.clone());
        let annotations: Vec<SpanAnnotation> = self
            .linker
            .link(&doc)
            .map_err(|e| {
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    format!("pipeline failure: {e}"),
                )
            })?
            .iter()
            .map(|p| p.annotation())
            .filter(|a| !a.is_outside())
            .collect();
        emit_nif(&nif, &annotations, &self.kb_prefix)
            .map_err(|e| (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
    }
}

/// A file-name-safe document id derived from the context URI.
fn document_id(context_uri: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in context_uri.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("nif-{h:016x}")
}

async fn annotate(State(service): State<Arc<AnnotationService>>, body: String) -> Response {
    let result = tokio::task::spawn_blocking(move || service.annotate(&body)).await;
    match result {
        Ok(Ok(turtle)) => ([(header::CONTENT_TYPE, TURTLE)], turtle).into_response(),
        Ok(Err((status, message))) => (status, message).into_response(),
        Err(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("pipeline task failed: {e}"),
        )
            .into_response(),
    }
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(service: Arc<AnnotationService>) -> Router {
    Router::new()
        .route("/annotate", post(annotate))
        .route("/health", get(health))
        .with_state(service)
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    service: Arc<AnnotationService>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Serves until interrupted with Ctrl-C.
pub async fn serve(service: Arc<AnnotationService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(service, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
