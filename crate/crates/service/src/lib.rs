//! Review queue service for segmentation bundles.
//!
//! Bundles are ingested over HTTP, scored, and queued worst-predicted first.
//! Every state change is an event in `events.jsonl` under the data
//! directory; the in-memory state is a fold over those events, so a restart
//! reproduces it exactly.

pub mod error;
pub mod events;
pub mod http;
pub mod overlay;
pub mod service;
pub mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use error::ApiError;
pub use events::{Action, Event};
pub use http::router;
pub use overlay::{OverlayKind, Palette};
pub use service::{DecisionRequest, Metrics, Service};
pub use state::{QueueItem, State, Status};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    pub palette: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn open(&self) -> Result<Arc<Service>, String> {
        let palette = match &self.palette {
            Some(p) => Palette::load(p)?,
            None => Palette::default(),
        };
        Service::open(&self.data_dir, palette)
            .map(Arc::new)
            .map_err(|e| format!("{}: {e}", self.data_dir.display()))
    }
}

/// Binds and serves until the listener fails.
pub async fn serve(config: ServiceConfig) -> Result<(), String> {
    let service = config.open()?;
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|e| format!("bind {}: {e}", config.bind))?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    eprintln!("segtriage service listening on http://{addr}");
    axum::serve(listener, router(service)).await.map_err(|e| e.to_string())
}
