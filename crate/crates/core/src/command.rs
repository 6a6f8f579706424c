//! Engine commands, generic over how they name entities, groups and
//! recordings: runtime ids in the engine, symbolic names in scenario files,
//! recording-local references inside recordings.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, RigidTransform, Vec3};
use crate::recorder::RecordingScope;
use crate::world::{EntityId, GroupId, Hand, RecordingId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapChoice {
    #[default]
    None,
    Grid,
    NearestObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Locomotion {
    Teleport { to: Vec3 },
    Rotate { yaw_delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeRequest<R = RecordingId> {
    Static,
    Synchronous,
    Replayed {
        recording: R,
        #[serde(default)]
        phase: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DuplicateTarget<E = EntityId, G = GroupId> {
    Clone(E),
    Group(G),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ApplyTarget<E = EntityId, G = GroupId> {
    Clone(E),
    Group { id: G, delta: f64 },
    #[serde(rename = "self")]
    Avatar,
}

fn unit_scale() -> f64 {
    1.0
}

fn is_unit(s: &f64) -> bool {
    *s == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command<E = EntityId, G = GroupId, R = RecordingId> {
    SpawnDirect,
    SpawnIndirect {
        target: Pose,
        #[serde(default)]
        snap: SnapChoice,
        #[serde(default = "unit_scale", skip_serializing_if = "is_unit")]
        scale: f64,
    },
    SpawnAuto {
        selected: E,
    },
    SpawnRelative {
        reference: E,
        target: E,
    },
    SetMode {
        clone: E,
        mode: ModeRequest<R>,
    },
    SetMirror {
        clone: E,
        on: bool,
    },
    SetScale {
        clone: E,
        scale: f64,
    },
    SwitchControl {
        target: E,
    },
    SetGroup {
        members: Vec<E>,
    },
    Move {
        target: E,
        new_root: RigidTransform,
    },
    Duplicate {
        target: DuplicateTarget<E, G>,
        #[serde(default)]
        placement: RigidTransform,
    },
    RemoveClone {
        target: E,
    },
    Undo,
    Locomote {
        kind: Locomotion,
    },
    StepOnto {
        target: E,
    },
    Grab {
        holder: E,
        hand: Hand,
    },
    Release {
        holder: E,
        hand: Hand,
    },
    StartRecording {
        scope: RecordingScope,
    },
    StopRecording,
    ApplyRecording {
        recording: R,
        target: ApplyTarget<E, G>,
    },
}

/// Maps the reference types of a command.
pub trait Resolve<E, G, R> {
    type Entity;
    type Group;
    type Recording;
    type Error;

    fn entity(&mut self, e: E) -> Result<Self::Entity, Self::Error>;
    fn group(&mut self, g: G) -> Result<Self::Group, Self::Error>;
    fn recording(&mut self, r: R) -> Result<Self::Recording, Self::Error>;
}

type Resolved<X, E, G, R> = Command<
    <X as Resolve<E, G, R>>::Entity,
    <X as Resolve<E, G, R>>::Group,
    <X as Resolve<E, G, R>>::Recording,
>;

impl<E, G, R> Command<E, G, R> {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SpawnDirect => "spawn_direct",
            Command::SpawnIndirect { .. } => "spawn_indirect",
            Command::SpawnAuto { .. } => "spawn_auto",
            Command::SpawnRelative { .. } => "spawn_relative",
            Command::SetMode { .. } => "set_mode",
            Command::SetMirror { .. } => "set_mirror",
            Command::SetScale { .. } => "set_scale",
            Command::SwitchControl { .. } => "switch_control",
            Command::SetGroup { .. } => "set_group",
            Command::Move { .. } => "move",
            Command::Duplicate { .. } => "duplicate",
            Command::RemoveClone { .. } => "remove_clone",
            Command::Undo => "undo",
            Command::Locomote { .. } => "locomote",
            Command::StepOnto { .. } => "step_onto",
            Command::Grab { .. } => "grab",
            Command::Release { .. } => "release",
            Command::StartRecording { .. } => "start_recording",
            Command::StopRecording => "stop_recording",
            Command::ApplyRecording { .. } => "apply_recording",
        }
    }

    /// Every operation name, in declaration order.
    pub const NAMES: [&'static str; 20] = [
        "spawn_direct",
        "spawn_indirect",
        "spawn_auto",
        "spawn_relative",
        "set_mode",
        "set_mirror",
        "set_scale",
        "switch_control",
        "set_group",
        "move",
        "duplicate",
        "remove_clone",
        "undo",
        "locomote",
        "step_onto",
        "grab",
        "release",
        "start_recording",
        "stop_recording",
        "apply_recording",
    ];

    /// Whether an extended-scope recording captures this command.
    pub fn is_recordable(&self) -> bool {
        !matches!(
            self,
            Command::StartRecording { .. }
                | Command::StopRecording
                | Command::ApplyRecording { target: ApplyTarget::Avatar, .. }
        )
    }

    pub fn resolve<X: Resolve<E, G, R>>(self, x: &mut X) -> Result<Resolved<X, E, G, R>, X::Error> {
        Ok(match self {
            Command::SpawnDirect => Command::SpawnDirect,
            Command::SpawnIndirect { target, snap, scale } => {
                Command::SpawnIndirect { target, snap, scale }
            }
            Command::SpawnAuto { selected } => Command::SpawnAuto { selected: x.entity(selected)? },
            Command::SpawnRelative { reference, target } => Command::SpawnRelative {
                reference: x.entity(reference)?,
                target: x.entity(target)?,
            },
            Command::SetMode { clone, mode } => Command::SetMode {
                clone: x.entity(clone)?,
                mode: match mode {
                    ModeRequest::Static => ModeRequest::Static,
                    ModeRequest::Synchronous => ModeRequest::Synchronous,
                    ModeRequest::Replayed { recording, phase } => {
                        ModeRequest::Replayed { recording: x.recording(recording)?, phase }
                    }
                },
            },
            Command::SetMirror { clone, on } => Command::SetMirror { clone: x.entity(clone)?, on },
            Command::SetScale { clone, scale } => {
                Command::SetScale { clone: x.entity(clone)?, scale }
            }
            Command::SwitchControl { target } => {
                Command::SwitchControl { target: x.entity(target)? }
            }
            Command::SetGroup { members } => Command::SetGroup {
                members: members.into_iter().map(|m| x.entity(m)).collect::<Result<_, _>>()?,
            },
            Command::Move { target, new_root } => {
                Command::Move { target: x.entity(target)?, new_root }
            }
            Command::Duplicate { target, placement } => Command::Duplicate {
                target: match target {
                    DuplicateTarget::Clone(e) => DuplicateTarget::Clone(x.entity(e)?),
                    DuplicateTarget::Group(g) => DuplicateTarget::Group(x.group(g)?),
                },
                placement,
            },
            Command::RemoveClone { target } => Command::RemoveClone { target: x.entity(target)? },
            Command::Undo => Command::Undo,
            Command::Locomote { kind } => Command::Locomote { kind },
            Command::StepOnto { target } => Command::StepOnto { target: x.entity(target)? },
            Command::Grab { holder, hand } => Command::Grab { holder: x.entity(holder)?, hand },
            Command::Release { holder, hand } => {
                Command::Release { holder: x.entity(holder)?, hand }
            }
            Command::StartRecording { scope } => Command::StartRecording { scope },
            Command::StopRecording => Command::StopRecording,
            Command::ApplyRecording { recording, target } => Command::ApplyRecording {
                recording: x.recording(recording)?,
                target: match target {
                    ApplyTarget::Clone(e) => ApplyTarget::Clone(x.entity(e)?),
                    ApplyTarget::Group { id, delta } => {
                        ApplyTarget::Group { id: x.group(id)?, delta }
                    }
                    ApplyTarget::Avatar => ApplyTarget::Avatar,
                },
            },
        })
    }

    /// Re-expresses world-space arguments in the frame `root`.
    pub fn relative_to(self, root: &RigidTransform) -> Self {
        let inv = root.inverse();
        self.map_spatial(|t| inv.compose(t), |p| inv.compose(p).compose(root), |v| {
            inv.transform_point(v)
        })
    }

    /// Inverse of [`Command::relative_to`].
    pub fn placed_at(self, root: &RigidTransform) -> Self {
        let inv = root.inverse();
        self.map_spatial(|t| root.compose(t), |p| root.compose(p).compose(&inv), |v| {
            root.transform_point(v)
        })
    }

    fn map_spatial(
        self,
        frame: impl Fn(&RigidTransform) -> RigidTransform,
        motion: impl Fn(&RigidTransform) -> RigidTransform,
        point: impl Fn(Vec3) -> Vec3,
    ) -> Self {
        match self {
            Command::SpawnIndirect { target, snap, scale } => Command::SpawnIndirect {
                target: frame(&target.as_transform()).as_pose(),
                snap,
                scale,
            },
            Command::Move { target, new_root } => {
                Command::Move { target, new_root: frame(&new_root) }
            }
            Command::Duplicate { target, placement } => {
                Command::Duplicate { target, placement: motion(&placement) }
            }
            Command::Locomote { kind: Locomotion::Teleport { to } } => {
                Command::Locomote { kind: Locomotion::Teleport { to: point(to) } }
            }
            other => other,
        }
    }
}

/// Ids produced by a command.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CommandOutcome {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entities: Vec<EntityId>,
    /// Objects created as a side effect (duplicated held items).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recording: Option<RecordingId>,
    /// Object picked up or let go by a grab or release.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held: Option<EntityId>,
}

impl CommandOutcome {
    pub fn entities(ids: Vec<EntityId>) -> Self {
        CommandOutcome { entities: ids, ..Default::default() }
    }
}
