use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or inconsistent input data.
    Data,
    /// A numerical procedure failed (non-finite values, divergence).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },
    #[error("ray distance must be positive at pixel ({x}, {y}), got {value}")]
    NonPositiveRayDistance { x: usize, y: usize, value: f64 },
    #[error("invalid gaussian {index}: {reason}")]
    InvalidGaussian { index: usize, reason: String },
    #[error("unknown layout kind `{0}`")]
    UnknownLayoutKind(String),

    #[error("cannot render an empty scene")]
    EmptyScene,
    #[error("gaussian {index} has a non-finite projected covariance")]
    DegenerateCovariance { index: usize },

    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    #[error("mask coverage {coverage} is below the minimum {min}")]
    EmptyMask { coverage: f64, min: f64 },
    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("invalid reward configuration: {0}")]
    InvalidRewardConfig(String),

    #[error("loss became non-finite at iteration {iteration}")]
    DivergedLoss { iteration: usize },
    #[error("invalid sampler spec: {0}")]
    InvalidSpec(String),

    #[error("line {line}, field {field}: {reason}")]
    MalformedLine {
        line: usize,
        field: usize,
        reason: String,
    },
    #[error("line {line}: rotation deviates from orthonormal by {deviation:e}")]
    NonOrthonormalRotation { line: usize, deviation: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("file format: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Image(String),
}

impl Error {
    /// Module-qualified, machine-readable error code.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            InvalidIntrinsics(_) => "camgeo.invalid_intrinsics",
            InvalidPose(_) => "camgeo.invalid_pose",
            InvalidTrajectory(_) => "camgeo.invalid_trajectory",
            NonPositiveDepth(_) => "camgeo.non_positive_depth",
            NonPositiveScale(_) => "camgeo.non_positive_scale",
            ShapeMismatch { .. } => "shape_mismatch",
            NonPositiveRayDistance { .. } => "scene.non_positive_ray_distance",
            InvalidGaussian { .. } => "scene.invalid_gaussian",
            UnknownLayoutKind(_) => "scene.unknown_layout_kind",
            EmptyScene => "rasterizer.empty_scene",
            DegenerateCovariance { .. } => "rasterizer.degenerate_covariance",
            InvalidTolerance(_) => "visibility.invalid_tolerance",
            EmptyMask { .. } => "reward.empty_mask",
            ImageTooSmall { .. } => "reward.image_too_small",
            InvalidRewardConfig(_) => "reward.invalid_config",
            DivergedLoss { .. } => "optim.diverged_loss",
            InvalidSpec(_) => "optim.invalid_spec",
            MalformedLine { .. } => "io.malformed_line",
            NonOrthonormalRotation { .. } => "io.non_orthonormal_rotation",
            Config(_) => "io.config",
            Format(_) => "io.format",
            File { .. } | Io(_) => "io.os",
            Image(_) => "io.image",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DegenerateCovariance { .. } | Error::DivergedLoss { .. } => {
                ErrorClass::Numerical
            }
            _ => ErrorClass::Data,
        }
    }

    /// Attaches the offending path to an I/O failure.
    pub fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::File {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn shape(
        what: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
