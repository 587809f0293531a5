//! Persistence and emission: model documents, CSV tables, scatter SVGs.

pub mod artifact;
pub mod csv;
pub mod svg;

pub use artifact::ModelArtifact;
