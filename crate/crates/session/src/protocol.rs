//! Wire messages, quantized snapshots and delta encoding.
//!
//! Every message is a JSON object `{"v": "clonemator-proto/1", "type": ...}`.

use std::collections::BTreeMap;

use clonemator_core::command::CommandOutcome;
use clonemator_core::recorder::{RecordingScope, RecordingSummary};
use clonemator_core::world::CloneMode;
use clonemator_core::{BodyFrame, Command, Engine, EngineEvent, EntityId, GroupId, Pose, Quat, RecordingId, Vec3};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

pub const PROTOCOL_VERSION: &str = "clonemator-proto/1";

/// Wire resolution for positions and quaternion components.
pub const WIRE_QUANTUM: f64 = 1e-4;

pub fn quantize(v: f64) -> f64 {
    let q = (v / WIRE_QUANTUM).round() / WIRE_QUANTUM.recip();
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

pub fn quantize_pose(p: &Pose) -> Pose {
    let (a, q) = (p.position, p.orientation);
    Pose {
        position: Vec3::new(quantize(a.x), quantize(a.y), quantize(a.z)),
        orientation: Quat { w: quantize(q.w), x: quantize(q.x), y: quantize(q.y), z: quantize(q.z) },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Controller,
    Observer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WireMode {
    Static,
    Synchronous,
    Replayed { recording: RecordingId, phase: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntityState {
    Body {
        id: EntityId,
        /// True for the body under the user's control.
        controlled: bool,
        root: Pose,
        body: BodyFrame,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<WireMode>,
        mirror: bool,
        scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group: Option<GroupId>,
        outline: u8,
    },
    Object {
        id: EntityId,
        tag: String,
        pose: Pose,
        grabbable: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        held_by: Option<EntityId>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        scalar_state: BTreeMap<String, f64>,
    },
}

impl EntityState {
    pub fn id(&self) -> EntityId {
        match self {
            EntityState::Body { id, .. } | EntityState::Object { id, .. } => *id,
        }
    }

    /// Root of a body or pose of an object.
    pub fn pose(&self) -> &Pose {
        match self {
            EntityState::Body { root, .. } => root,
            EntityState::Object { pose, .. } => pose,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub started: u64,
    pub from: Pose,
    pub to: Pose,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecorderStatus {
    pub scope: RecordingScope,
    pub elapsed: f64,
}

/// Quantized world state as it would appear on the wire.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshot {
    pub tick: u64,
    pub entities: BTreeMap<EntityId, EntityState>,
    pub transitions: Vec<Transition>,
    pub recorder: Option<RecorderStatus>,
}

impl Snapshot {
    pub fn capture(engine: &Engine, transitions: &[Transition]) -> Snapshot {
        let w = engine.world();
        let avatar = w.avatar();
        let mut entities = BTreeMap::new();
        entities.insert(
            avatar.body_id,
            EntityState::Body {
                id: avatar.body_id,
                controlled: true,
                root: quantize_pose(&avatar.root.as_pose()),
                body: avatar.body.map_poses(quantize_pose),
                mode: None,
                mirror: false,
                scale: quantize(avatar.scale),
                group: None,
                outline: 0,
            },
        );
        for c in w.clones() {
            let mode = match c.mode {
                CloneMode::Static => WireMode::Static,
                CloneMode::Synchronous { .. } => WireMode::Synchronous,
                CloneMode::Replayed { recording, phase, .. } => {
                    WireMode::Replayed { recording, phase: quantize(phase) }
                }
            };
            entities.insert(
                c.id,
                EntityState::Body {
                    id: c.id,
                    controlled: false,
                    root: quantize_pose(&c.root.as_pose()),
                    body: c.body.map_poses(quantize_pose),
                    mode: Some(mode),
                    mirror: c.mirror,
                    scale: quantize(c.scale),
                    group: c.group,
                    outline: c.outline_color_index,
                },
            );
        }
        for o in w.objects() {
            entities.insert(
                o.id,
                EntityState::Object {
                    id: o.id,
                    tag: o.tag.clone(),
                    pose: quantize_pose(&o.pose),
                    grabbable: o.grabbable,
                    held_by: w.attachment_of(o.id).map(|a| a.holder),
                    scalar_state: o.scalar_state.iter().map(|(k, v)| (k.clone(), quantize(*v))).collect(),
                },
            );
        }
        let tick = w.tick();
        Snapshot {
            tick,
            entities,
            transitions: transitions
                .iter()
                .filter(|t| (tick - t.started) as f64 * w.config().dt() < t.duration)
                .copied()
                .collect(),
            recorder: engine
                .recorder_status()
                .map(|(scope, elapsed)| RecorderStatus { scope, elapsed: quantize(elapsed) }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMode {
    Full,
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub tick: u64,
    pub mode: StateMode,
    pub entities: Vec<EntityState>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<EntityId>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub recorder: Option<RecorderStatus>,
}

impl StateMessage {
    /// Heartbeat delta: nothing but the tick.
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.removed.is_empty()
    }
}

pub fn make_full(current: &Snapshot) -> StateMessage {
    StateMessage {
        tick: current.tick,
        mode: StateMode::Full,
        entities: current.entities.values().cloned().collect(),
        removed: Vec::new(),
        transitions: current.transitions.clone(),
        recorder: current.recorder,
    }
}

/// Entities whose quantized state differs from `last_sent`, plus removals.
pub fn make_state_delta(last_sent: &Snapshot, current: &Snapshot) -> StateMessage {
    debug_assert!(last_sent.tick <= current.tick);
    StateMessage {
        tick: current.tick,
        mode: StateMode::Delta,
        entities: current
            .entities
            .iter()
            .filter(|(id, e)| last_sent.entities.get(id) != Some(e))
            .map(|(_, e)| e.clone())
            .collect(),
        removed: last_sent.entities.keys().filter(|id| !current.entities.contains_key(id)).copied().collect(),
        transitions: current.transitions.clone(),
        recorder: current.recorder,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MirrorError {
    #[error("delta at tick {0} before any full snapshot")]
    DeltaBeforeFull(u64),
    #[error("state at tick {got} is older than tick {have}")]
    Stale { have: u64, got: u64 },
}

/// Client-side reconstruction from a full snapshot and later deltas.
#[derive(Debug, Clone, Default)]
pub struct ClientMirror {
    synced: bool,
    pub tick: u64,
    pub entities: BTreeMap<EntityId, EntityState>,
    pub transitions: Vec<Transition>,
    pub recorder: Option<RecorderStatus>,
}

impl ClientMirror {
    pub fn apply(&mut self, m: &StateMessage) -> Result<(), MirrorError> {
        match m.mode {
            StateMode::Full => {
                self.entities.clear();
                self.synced = true;
            }
            StateMode::Delta if !self.synced => return Err(MirrorError::DeltaBeforeFull(m.tick)),
            StateMode::Delta if m.tick < self.tick => {
                return Err(MirrorError::Stale { have: self.tick, got: m.tick })
            }
            StateMode::Delta => {}
        }
        for id in &m.removed {
            self.entities.remove(id);
        }
        for e in &m.entities {
            self.entities.insert(e.id(), e.clone());
        }
        self.tick = m.tick;
        self.transitions = m.transitions.clone();
        self.recorder = m.recorder;
        Ok(())
    }

    pub fn is_synced(&self) -> bool {
        self.synced
    }

    /// Largest positional difference to `s`, or `None` when the entity sets
    /// or their discrete fields differ.
    pub fn max_error(&self, s: &Snapshot) -> Option<f64> {
        if self.entities.len() != s.entities.len() {
            return None;
        }
        let mut worst = 0.0f64;
        for (id, mine) in &self.entities {
            let theirs = s.entities.get(id)?;
            worst = worst.max(entity_error(mine, theirs)?);
        }
        Some(worst)
    }
}

fn pose_error(a: &Pose, b: &Pose) -> f64 {
    let q = a.orientation.dot(b.orientation).abs();
    a.position.distance(b.position).max(1.0 - q.min(1.0))
}

fn entity_error(a: &EntityState, b: &EntityState) -> Option<f64> {
    match (a, b) {
        (
            EntityState::Body { root: ra, body: ba, mode: ma, mirror: xa, group: ga, .. },
            EntityState::Body { root: rb, body: bb, mode: mb, mirror: xb, group: gb, .. },
        ) => {
            if std::mem::discriminant(ma) != std::mem::discriminant(mb)
                || xa != xb
                || ga != gb
                || ba.left_grab != bb.left_grab
                || ba.right_grab != bb.right_grab
            {
                return None;
            }
            Some(
                pose_error(ra, rb)
                    .max(pose_error(&ba.head, &bb.head))
                    .max(pose_error(&ba.left_hand, &bb.left_hand))
                    .max(pose_error(&ba.right_hand, &bb.right_hand)),
            )
        }
        (
            EntityState::Object { tag: ta, pose: pa, held_by: ha, .. },
            EntityState::Object { tag: tb, pose: pb, held_by: hb, .. },
        ) => {
            if ta != tb || ha != hb {
                return None;
            }
            Some(pose_error(pa, pb))
        }
        _ => None,
    }
}

/// Non-engine operations a client may send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientOp {
    /// Root-local tracked input. Held until the next frame arrives.
    Input {
        frame: BodyFrame,
        #[serde(default)]
        client_time: f64,
    },
    /// Viewpoint of an observer. Has no effect on the engine.
    CameraHint { pose: Pose },
    ListRecordings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    Client(ClientOp),
    Engine(Command),
}

impl Payload {
    pub fn op(&self) -> &'static str {
        match self {
            Payload::Client(ClientOp::Input { .. }) => "input",
            Payload::Client(ClientOp::CameraHint { .. }) => "camera_hint",
            Payload::Client(ClientOp::ListRecordings) => "list_recordings",
            Payload::Engine(c) => c.name(),
        }
    }
}

impl<'de> Deserialize<'de> for Payload {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let op = v.get("op").and_then(|o| o.as_str()).ok_or_else(|| D::Error::custom("payload has no \"op\""))?;
        match op {
            "input" | "camera_hint" | "list_recordings" => {
                ClientOp::deserialize(v).map(Payload::Client).map_err(D::Error::custom)
            }
            _ => Command::deserialize(v).map(Payload::Engine).map_err(D::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello { role: Role },
    Command { seq: u64, payload: Payload },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome { connection: u64, role: Role, tick: u64, tick_rate: f64 },
    State(StateMessage),
    Event { tick: u64, event: EngineEvent },
    Ack { seq: u64, tick: u64, op: String, outcome: CommandOutcome },
    Recordings { seq: u64, recordings: Vec<RecordingSummary> },
    Error {
        tick: u64,
        code: String,
        detail: String,
        #[serde(default)]
        seq: Option<u64>,
    },
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    v: String,
    #[serde(flatten)]
    body: T,
}

fn wrap<T: Serialize>(body: &T) -> String {
    serde_json::to_string(&Envelope { v: PROTOCOL_VERSION.to_string(), body })
        .expect("message serializes")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{detail}")]
pub struct DecodeError {
    /// Sequence number, when the envelope got far enough to carry one.
    pub seq: Option<u64>,
    pub detail: String,
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        wrap(self)
    }

    pub fn from_json(text: &str) -> Result<ServerMessage, DecodeError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| DecodeError { seq: None, detail: e.to_string() })?;
        check_version(&v, None)?;
        ServerMessage::deserialize(strip_version(v)).map_err(|e| DecodeError { seq: None, detail: e.to_string() })
    }
}

impl ClientMessage {
    pub fn to_json(&self) -> String {
        wrap(self)
    }

    pub fn from_json(text: &str) -> Result<ClientMessage, DecodeError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| DecodeError { seq: None, detail: e.to_string() })?;
        let seq = v.get("seq").and_then(|s| s.as_u64());
        check_version(&v, seq)?;
        ClientMessage::deserialize(strip_version(v)).map_err(|e| DecodeError { seq, detail: e.to_string() })
    }
}

fn check_version(v: &serde_json::Value, seq: Option<u64>) -> Result<(), DecodeError> {
    match v.get("v").and_then(|x| x.as_str()) {
        Some(PROTOCOL_VERSION) => Ok(()),
        Some(other) => Err(DecodeError { seq, detail: format!("unsupported protocol {other:?}") }),
        None => Err(DecodeError { seq, detail: "missing protocol version \"v\"".into() }),
    }
}

fn strip_version(mut v: serde_json::Value) -> serde_json::Value {
    if let Some(m) = v.as_object_mut() {
        m.remove("v");
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rounds_to_grid() {
        assert_eq!(quantize(1.23456), 1.2346);
        assert_eq!(quantize(-0.00004), 0.0);
        assert!((quantize(0.1 + 0.2) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn engine_command_payload_round_trips() {
        let text = r#"{"v":"clonemator-proto/1","type":"command","seq":3,
            "payload":{"op":"spawn_indirect","target":{"position":[1,0,2]}}}"#;
        let m = ClientMessage::from_json(text).unwrap();
        let ClientMessage::Command { seq: 3, payload: Payload::Engine(Command::SpawnIndirect { .. }) } = &m else {
            panic!("{m:?}")
        };
        assert_eq!(ClientMessage::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn input_payload_parses() {
        let frame = serde_json::to_string(&BodyFrame::neutral()).unwrap();
        let text = format!(r#"{{"v":"clonemator-proto/1","type":"command","seq":1,"payload":{{"op":"input","frame":{frame}}}}}"#);
        let m = ClientMessage::from_json(&text).unwrap();
        assert!(matches!(m, ClientMessage::Command { payload: Payload::Client(ClientOp::Input { .. }), .. }));
    }

    #[test]
    fn bad_payload_keeps_seq() {
        let e = ClientMessage::from_json(r#"{"v":"clonemator-proto/1","type":"command","seq":9,"payload":{"op":"fly"}}"#)
            .unwrap_err();
        assert_eq!(e.seq, Some(9));
        let e = ClientMessage::from_json(r#"{"type":"hello","role":"observer"}"#).unwrap_err();
        assert!(e.detail.contains("version"));
        assert!(ClientMessage::from_json("not json").is_err());
    }

    #[test]
    fn delta_before_full_is_rejected() {
        let mut m = ClientMirror::default();
        let d = make_state_delta(&Snapshot::default(), &Snapshot::default());
        assert_eq!(m.apply(&d), Err(MirrorError::DeltaBeforeFull(0)));
        m.apply(&make_full(&Snapshot::default())).unwrap();
        m.apply(&d).unwrap();
    }
}
