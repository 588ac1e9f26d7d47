pub mod checkpoint;
pub mod config;
pub mod demo;
pub mod error;
pub mod ingest;
pub mod io;
pub mod protocol;
pub mod report;
pub mod summary;
pub mod table;

pub use error::{LabError, Result};
