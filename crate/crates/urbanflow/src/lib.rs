//! IO, file formats, HTTP service and command-line pipeline around
//! `urbanflow-core`.

pub mod config;
pub mod export;
pub mod external;
pub mod ingest;
pub mod model_file;
pub mod scenario;
pub mod store;
pub mod tz;
pub mod pipeline;
pub mod service;
