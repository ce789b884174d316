//! HTTP service for stored scenarios and what-if computation.
//!
//! Routes: `POST /scenarios`, `GET|PUT|DELETE /scenarios/{id}`,
//! `POST /scenarios/{id}/compute` and `GET /healthz`. Revisions travel in
//! `ETag` and `If-Match`.

pub mod api;
pub mod store;

pub use api::{router, AppState};
pub use store::{Store, StoreError, StoredScenario};
