//! HTTP/JSON service over dragrank sessions.

pub mod api;
pub mod config;
pub mod store;

use std::sync::Arc;

pub use api::{router, AppState};
pub use config::{ConfigError, ServiceConfig};
pub use store::{Store, StoreError};

/// Builds the application state for `config`, restoring persisted sessions.
pub fn build_state(config: &ServiceConfig) -> Result<Arc<AppState>, StoreError> {
    let store = config.data_dir.as_ref().map(Store::open).transpose()?;
    let state = AppState::new(config.session_config(), store);
    let restored = state.restore()?;
    if restored > 0 {
        tracing::info!("restored {restored} sessions");
    }
    Ok(Arc::new(state))
}

/// Binds to `config.bind` and serves until ctrl-c.
pub async fn serve(config: &ServiceConfig) -> std::io::Result<()> {
    let state = build_state(config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(&config.bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
