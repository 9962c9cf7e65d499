//! HTTP API, push stream and service wiring around `iotlens_core`.

pub mod api;
pub mod capture;
pub mod config;
pub mod events;
pub mod refresh;
pub mod services;
