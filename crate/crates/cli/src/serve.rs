use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use strokescreen::bundle::ModelBundle;
use strokescreen::service::Service;

async fn dispatch(State(service): State<Arc<Service>>, method: Method, uri: Uri, body: Bytes) -> Response {
    let path = uri.path().to_string();
    // Explanations can take a while; keep them off the async workers.
    let result = tokio::task::spawn_blocking(move || service.handle(method.as_str(), &path, &body)).await;
    let (status, text) = result.unwrap_or_else(|_| (500, r#"{"error":{"reason":"internal error"}}"#.to_string()));
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

pub fn serve(model: &Path, host: &str, port: u16) -> anyhow::Result<()> {
    let bundle = ModelBundle::load(model).with_context(|| format!("loading bundle {}", model.display()))?;
    let service = Arc::new(Service::new(bundle)?);
    let app = Router::new().fallback(dispatch).with_state(service);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        eprintln!("{}", serde_json::json!({ "listening": listener.local_addr()?.to_string() }));
        axum::serve(listener, app).await?;
        Ok(())
    })
}
