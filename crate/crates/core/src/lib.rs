pub mod config;
pub mod consistency;
pub mod costs;
pub mod factormodel;
pub mod ingest;
pub mod panel;
pub mod pipeline;
pub mod portfolio;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod stats;
