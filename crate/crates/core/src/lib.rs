pub mod analytic;
pub mod conductor;
pub mod config;
pub mod des;
pub mod metrics;
pub mod runner;
pub mod scenarios;
pub mod time;
pub mod topology;
pub mod virtual_resources;
