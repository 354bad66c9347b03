use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage names, used to tag errors surfaced by [`crate::solve::register`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    GroundAlign,
    Resolution,
    Rasterize,
    Enhance,
    Match,
    Lift,
    RobustEstimate,
    Icp,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::GroundAlign => "ground alignment",
            Stage::Resolution => "resolution scaling",
            Stage::Rasterize => "rasterization",
            Stage::Enhance => "enhancement",
            Stage::Match => "keypoint matching",
            Stage::Lift => "lifting",
            Stage::RobustEstimate => "robust estimation",
            Stage::Icp => "icp refinement",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least 3 points, got {0}")]
    InsufficientPoints(usize),
    #[error("no plane reached the consensus threshold (best {best} of {required} required inliers)")]
    NoConsensus { best: usize, required: usize },
    #[error("degenerate extent: x or y range is zero")]
    DegenerateExtent,
    #[error("external matcher failed: {0}")]
    ExternalMatcherFailure(String),
    #[error("keypoint ({u:.2}, {v:.2}) lies on an empty pixel")]
    EmptyPixel { u: f64, v: f64 },
    #[error("too few correspondences: {0} (need 3)")]
    TooFewCorrespondences(usize),
    #[error("degenerate correspondence configuration")]
    DegenerateConfiguration,
    #[error("outlier rejection left fewer than 3 inliers")]
    ConvergenceFailed,
    #[error("no source point has a target neighbour within {0} m")]
    NoCorrespondencesInRange(f64),
    #[error("requested overlap {requested:.3} cannot be achieved (reachable range {min:.3}..{max:.3})")]
    UnsatisfiableOverlap { requested: f64, min: f64, max: f64 },
    #[error("{stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Strips stage wrappers and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// The stage the error was raised in, if it was wrapped by the pipeline.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
