//! Questionnaire server: sessions, assignment lifecycle, submissions and
//! usage-event ingestion over HTTP with XML bodies.

pub mod config;
pub mod http;
pub mod service;
pub mod store;
pub mod wire;

use std::sync::Arc;

pub use config::ServerConfig;
pub use http::router;
pub use service::{Clock, ManualClock, StudyService, SystemClock};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Setup(#[from] service::SetupError),
    #[error("{addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Run until ctrl-c. Blocks the calling thread.
pub fn serve(cfg: &ServerConfig) -> Result<(), ServeError> {
    let svc = Arc::new(StudyService::from_config(cfg, Arc::new(SystemClock))?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .map_err(|source| ServeError::Bind {
                addr: cfg.listen.clone(),
                source,
            })?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(svc))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
