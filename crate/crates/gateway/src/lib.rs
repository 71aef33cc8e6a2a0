//! Live serving layer: routes each incoming query to one expert backend
//! and relays its answer together with the routing distribution.
//!
//! Endpoints:
//!
//! * `POST /v1/query {"text"}` dispatches to the routed expert, falling
//!   back down the router's preference order when an expert fails.
//! * `POST /v1/route {"text"}` returns the routing decision only.
//! * `GET /healthz` reports per-expert health.

pub mod client;
pub mod dispatch;
pub mod error;
pub mod health;
pub mod mock;
pub mod registry;
pub mod server;

pub use client::ExpertClient;
pub use dispatch::{decide, Decision, Gateway, RoutedResponse, RouterMode, Snapshot};
pub use error::{ExpertCallError, GatewayError};
pub use health::{probe_experts, Health, HealthCache, DEFAULT_HEALTH_TTL};
pub use mock::{MockExpert, MockExpertConfig};
pub use registry::{ExpertEndpoint, Protocol, Registry};
pub use server::{app, serve, serve_on, RouterSource, ServeConfig};
