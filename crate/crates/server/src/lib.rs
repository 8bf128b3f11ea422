//! HTTP front end for a live crowdlocate experiment.
//!
//! Workers identify themselves with the token returned by `POST /session`,
//! sent back in the `x-session-token` header. Admin endpoints expect the
//! secret configured at start-up in `x-admin-token`.

pub mod api;
pub mod clock;
pub mod error;
pub mod service;

use std::net::SocketAddr;
use std::sync::Arc;

pub use api::{router, ADMIN_HEADER, SESSION_HEADER};
pub use clock::{Clock, ManualClock, SystemClock};
pub use error::ApiError;
pub use service::Service;

/// Environment variable holding the admin secret.
pub const ADMIN_TOKEN_ENV: &str = "CROWDLOCATE_ADMIN_TOKEN";

/// Serves `service` on `addr` until Ctrl-C.
pub async fn serve(service: Arc<Service>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
