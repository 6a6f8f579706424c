use thiserror::Error;

use crate::world::{EntityId, GroupId, RecordingId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("scale {0} outside [0.1, 10]")]
    ScaleOutOfRange(f64),
}

/// Every failure an engine operation can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("object tag must not be empty")]
    EmptyTag,
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("unknown recording {0}")]
    UnknownRecording(RecordingId),
    #[error("entity {0} is not a clone")]
    NotAClone(EntityId),
    #[error("reference and target are the same object")]
    SameObject,
    #[error("no object within snapping radius of the target")]
    NoSnapAnchor,
    #[error("indirect spawn target must lie on the ground plane (y = {0})")]
    OffGround(f64),
    #[error("clone {0} already belongs to a group")]
    AlreadyGrouped(EntityId),
    #[error("a group needs at least two clones")]
    TooFewMembers,
    #[error("cannot remove the body under user control")]
    CannotRemoveControlledBody,
    #[error("undo stack is empty")]
    EmptyUndoStack,
    #[error("clone {0} is not static")]
    NotStatic(EntityId),
    #[error("timestep {got} does not match the fixed step {expected}")]
    BadTimestep { got: f64, expected: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("a recording is already active")]
    AlreadyRecording,
    #[error("no recording is active")]
    NotRecording,
    #[error("recording captured no motion")]
    EmptyRecording,
    #[error("recording scope does not permit this application")]
    ScopeViolation,
    #[error("hand already holds object {0}")]
    HandOccupied(EntityId),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl EngineError {
    /// Stable machine-readable code used on the wire and in reports.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::EmptyTag => "EmptyTag",
            EngineError::UnknownEntity(_) => "UnknownEntity",
            EngineError::UnknownGroup(_) => "UnknownGroup",
            EngineError::UnknownRecording(_) => "UnknownRecording",
            EngineError::NotAClone(_) => "NotAClone",
            EngineError::SameObject => "SameObject",
            EngineError::NoSnapAnchor => "NoSnapAnchor",
            EngineError::OffGround(_) => "OffGround",
            EngineError::AlreadyGrouped(_) => "AlreadyGrouped",
            EngineError::TooFewMembers => "TooFewMembers",
            EngineError::CannotRemoveControlledBody => "CannotRemoveControlledBody",
            EngineError::EmptyUndoStack => "EmptyUndoStack",
            EngineError::NotStatic(_) => "NotStatic",
            EngineError::BadTimestep { .. } => "BadTimestep",
            EngineError::Geometry(GeometryError::ScaleOutOfRange(_)) => "ScaleOutOfRange",
            EngineError::AlreadyRecording => "AlreadyRecording",
            EngineError::NotRecording => "NotRecording",
            EngineError::EmptyRecording => "EmptyRecording",
            EngineError::ScopeViolation => "ScopeViolation",
            EngineError::HandOccupied(_) => "HandOccupied",
            EngineError::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;
