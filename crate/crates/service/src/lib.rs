//! Network host for the dialogue engine: sessions over HTTP, a durable turn log
//! and exports of the collected training data.

pub mod config;
pub mod http;
pub mod service;
pub mod store;

use std::sync::Arc;

pub use config::{ConfigError, ServiceConfig};
pub use http::{router, AppState};
pub use service::{MessageReply, Service, ServiceError, SessionView};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Engine(#[from] tutorbot_core::ConfigError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server stopped: {0}")]
    Io(#[from] std::io::Error),
}

/// Builds the engine and service for a configuration.
pub fn build(config: &ServiceConfig) -> Result<AppState, ServeError> {
    let engine = Arc::new(tutorbot_core::Engine::from_config(&config.engine())?);
    let service = Arc::new(Service::open(engine, &config.storage)?);
    Ok(AppState { service, token: config.token.clone() })
}

/// Serves until interrupted.
pub async fn serve(config: &ServiceConfig) -> Result<(), ServeError> {
    let state = build(config)?;
    let addr = config.address();
    let listener =
        tokio::net::TcpListener::bind(&addr).await.map_err(|source| ServeError::Bind { addr: addr.clone(), source })?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
