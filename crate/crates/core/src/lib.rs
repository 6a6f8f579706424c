//! Headless core of a spatiotemporal clone engine.
//!
//! A [`World`] holds tagged objects, the user avatar and its clones. An
//! [`Engine`] owns the world and advances it one fixed step at a time from
//! tracked input and queued [`Command`]s.

pub mod command;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod interaction;
pub mod recorder;
pub mod world;

pub use command::{Command, CommandOutcome};
pub use engine::{Engine, EngineEvent, TickEvents};
pub use error::{EngineError, Result};
pub use geometry::{Pose, Quat, RigidTransform, Vec3};
pub use world::{BodyFrame, EntityId, GroupId, Hand, RecordingId, World, WorldConfig, WorldHash};
