use crate::formats::FormatError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_STAGE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("stage {stage} failed ({kind}): {message}")]
    Stage { stage: String, kind: String, message: String },
    #[error("trajectory optimization did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => EXIT_VALIDATION,
            Self::Stage { .. } => EXIT_STAGE,
            Self::NotConverged { .. } => EXIT_NOT_CONVERGED,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::Validation(vec![message.into()])
    }

    pub fn stage(stage: &str, err: &objflow_core::Error) -> Self {
        Self::Stage { stage: stage.into(), kind: error_kind(err).into(), message: err.to_string() }
    }

    /// Failure writing a stage output.
    pub fn output(stage: &str, err: &FormatError) -> Self {
        Self::Stage { stage: stage.into(), kind: "io".into(), message: err.to_string() }
    }
}

impl From<FormatError> for CliError {
    /// Input files that cannot be read or parsed are validation failures.
    fn from(e: FormatError) -> Self {
        Self::Validation(vec![e.to_string()])
    }
}

/// Stable snake-case name of a core error variant.
pub fn error_kind(e: &objflow_core::Error) -> &'static str {
    use objflow_core::Error::*;
    match e {
        InvalidDepth(_) => "invalid_depth",
        OutOfBounds { .. } => "out_of_bounds",
        DegenerateCorrespondence(_) => "degenerate_correspondence",
        DegenerateGeometry => "degenerate_geometry",
        RankDeficient(_) => "rank_deficient",
        CalibrationFailure(_) => "calibration_failure",
        MatchingFailure => "matching_failure",
        NoTarget => "no_target",
        NoGrasp => "no_grasp",
        InvalidTransform(_) => "invalid_transform",
        InvalidCamera(_) => "invalid_camera",
        InvalidInput(_) => "invalid_input",
        PlanningFailure(_) => "planning_failure",
    }
}
