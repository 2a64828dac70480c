use crate::geometry::Frame;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage tag attached to errors propagated out of the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineStage {
    Proposal,
    RefinementSource,
    Refinement,
    RobotTransform,
}

impl std::fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PipelineStage::Proposal => "proposal",
            PipelineStage::RefinementSource => "refinement-source",
            PipelineStage::Refinement => "refinement",
            PipelineStage::RobotTransform => "robot-transform",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("frame mismatch: expected {expected:?}, found {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },

    #[error("rotation block is not a valid rotation matrix")]
    InvalidRotation,

    #[error("rotation block is rank-deficient")]
    DegenerateRotation,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("point cloud is degenerate (fewer than 3 non-collinear points)")]
    DegenerateCloud,

    #[error("no ICP correspondences within the distance gate")]
    NoCorrespondences,

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("observation mask is empty")]
    EmptyMask,

    #[error("object not visible from the camera")]
    ObjectOutOfView,

    #[error("no feasible grasp found for the shape/gripper pair")]
    NoFeasibleGrasp,

    #[error("unknown object id `{0}`")]
    UnknownObject(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{stage} stage failed: {source}")]
    Pipeline {
        stage: PipelineStage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn at_stage(self, stage: PipelineStage) -> Error {
        Error::Pipeline {
            stage,
            source: Box::new(self),
        }
    }

    /// Strip pipeline-stage wrappers down to the root cause.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Pipeline { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
