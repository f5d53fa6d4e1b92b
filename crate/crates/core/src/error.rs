use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid depth {0} (must be finite and positive)")]
    InvalidDepth(f64),
    #[error("pixel ({u}, {v}) lies outside the {width}x{height} image")]
    OutOfBounds { u: f64, v: f64, width: u32, height: u32 },
    #[error("need at least 3 positively weighted correspondences, got {0}")]
    DegenerateCorrespondence(usize),
    #[error("correspondences are collinear or coincident")]
    DegenerateGeometry,
    #[error("calibration system is rank deficient: {0}")]
    RankDeficient(&'static str),
    #[error("calibration produced non-positive scale {0}")]
    CalibrationFailure(f64),
    #[error("no jointly visible points at any candidate timestep")]
    MatchingFailure,
    #[error("flow has no visible target at any timestep")]
    NoTarget,
    #[error("no grasp candidates supplied")]
    NoGrasp,
    #[error("invalid transform: {0}")]
    InvalidTransform(&'static str),
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("planning failure: {0}")]
    PlanningFailure(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
