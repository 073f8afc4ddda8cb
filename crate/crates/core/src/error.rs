//! Error type shared by the geometry kernel and the mesh pipeline.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion has (near) zero norm and cannot be inverted")]
    ZeroQuaternion,

    #[error("expected a unit quaternion, |q|^2 - 1 = {deviation:e}")]
    NotUnit { deviation: f64 },

    #[error("point lies at the projection pole (1 - x3 = {gap:e})")]
    AtPole { gap: f64 },

    #[error("circle radius {radius:e} is degenerate")]
    DegenerateCircle { radius: f64 },

    #[error("circle does not pass through the given point (distance {distance:e})")]
    NotIncident { distance: f64 },

    #[error("edge {0} joins antipodal vertices")]
    AntipodalEdge(usize),

    #[error("design meets the projection pole: {0}")]
    PoleCollision(String),

    #[error("parameter ({theta}, {phi}) outside the surface domain")]
    OutOfDomain { theta: f64, phi: f64 },

    #[error("tangent rows are linearly dependent at ({theta}, {phi})")]
    DegenerateTangent { theta: f64, phi: f64 },

    #[error("glued edges disagree by {mismatch:e}")]
    BadIdentification { mismatch: f64 },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("scene schema error: {0}")]
    Schema(String),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
