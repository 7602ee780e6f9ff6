//! REST service for the TAI Scan tool: pre-screening, gated assessment,
//! the audit trail and corpus lookups, all under `/api/v1/`.

pub mod api;
pub mod audit;
pub mod config;
pub mod gate;
pub mod state;

use std::sync::Arc;

use thiserror::Error;

pub use api::router;
pub use config::ServiceConfig;
pub use state::AppState;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("startup: {0}")]
    Startup(String),
    #[error("listener: {0}")]
    Io(#[from] std::io::Error),
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
    tracing::info!("shutting down");
}

/// Builds the state from `config` and serves until SIGINT/SIGTERM.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let addr = config.bind_addr()?;
    let state = Arc::new(AppState::from_config(&config)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, index = ?state.index_state, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}
