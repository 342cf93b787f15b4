//! Equivariant many-body message passing over molecular graphs and their
//! line graphs, with energy, force and polarizability heads.

pub mod batch;
pub mod featurize;
pub mod geometry;
pub mod io;
pub mod layers;
pub mod linegraph;
pub mod model;
pub mod params;
pub mod tensor;
pub mod training;
pub mod verify;

use thiserror::Error;

pub use geometry::{Mat3, Molecule, Vec3};
pub use model::{Eninet, ModelConfig};
pub use params::ModelParams;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    LineGraph(#[from] linegraph::LineGraphError),
    #[error(transparent)]
    Featurize(#[from] featurize::FeaturizeError),
    #[error("parameters: {0}")]
    Params(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("tensor is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged {
        epoch: usize,
        last_good: Box<ModelParams>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
