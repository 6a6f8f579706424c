use std::convert::Infallible;

use super::{Engine, EngineEvent, SelfReplay};
use crate::command::{ApplyTarget, Command, Resolve};
use crate::error::{EngineError, Result};
use crate::geometry::{Pose, RigidTransform};
use crate::recorder::{
    ActiveRecording, LocalRef, RecordedCommand, RecordedEventKind, RecordedFrame, Recording,
    RecordingScope,
};
use crate::world::{EntityId, GroupId, RecordingId};

struct ToLocal<'a> {
    bindings: &'a [EntityId],
    groups: &'a [GroupId],
}

impl Resolve<EntityId, GroupId, RecordingId> for ToLocal<'_> {
    type Entity = LocalRef;
    type Group = LocalRef;
    type Recording = RecordingId;
    type Error = Infallible;

    fn entity(&mut self, e: EntityId) -> Result<LocalRef, Infallible> {
        Ok(match self.bindings.iter().position(|b| *b == e) {
            Some(i) => LocalRef::Local(i),
            None => LocalRef::Fixed(e.0),
        })
    }

    fn group(&mut self, g: GroupId) -> Result<LocalRef, Infallible> {
        Ok(match self.groups.iter().position(|b| *b == g) {
            Some(i) => LocalRef::Local(i),
            None => LocalRef::Fixed(g.0),
        })
    }

    fn recording(&mut self, r: RecordingId) -> Result<RecordingId, Infallible> {
        Ok(r)
    }
}

struct FromLocal<'a> {
    bindings: &'a [EntityId],
    groups: &'a [GroupId],
}

impl Resolve<LocalRef, LocalRef, RecordingId> for FromLocal<'_> {
    type Entity = EntityId;
    type Group = GroupId;
    type Recording = RecordingId;
    type Error = EngineError;

    fn entity(&mut self, e: LocalRef) -> Result<EntityId> {
        match e {
            LocalRef::Local(i) => self
                .bindings
                .get(i)
                .copied()
                .ok_or_else(|| EngineError::InvalidInput(format!("unbound local entity {i}"))),
            LocalRef::Fixed(id) => Ok(EntityId(id)),
        }
    }

    fn group(&mut self, g: LocalRef) -> Result<GroupId> {
        match g {
            LocalRef::Local(i) => self
                .groups
                .get(i)
                .copied()
                .ok_or_else(|| EngineError::InvalidInput(format!("unbound local group {i}"))),
            LocalRef::Fixed(id) => Ok(GroupId(id)),
        }
    }

    fn recording(&mut self, r: RecordingId) -> Result<RecordingId> {
        Ok(r)
    }
}

impl Engine {
    pub(crate) fn to_recorded(&self, cmd: &Command, root: &RigidTransform) -> RecordedCommand {
        let rec = self.recorder.as_ref().expect("recording");
        let mut map = ToLocal { bindings: &rec.bindings, groups: &rec.groups };
        let local = match cmd.clone().resolve(&mut map) {
            Ok(c) => c,
            Err(never) => match never {},
        };
        local.relative_to(root)
    }

    pub fn start_recording(&mut self, scope: RecordingScope) -> Result<()> {
        if self.recorder.is_some() {
            return Err(EngineError::AlreadyRecording);
        }
        let avatar = &self.world.avatar;
        let anchor = avatar.root;
        self.recorder = Some(ActiveRecording {
            scope,
            anchor,
            start_tick: self.world.tick,
            frames: vec![RecordedFrame { t: 0.0, body: avatar.body.transformed(&anchor.inverse()) }],
            events: Vec::new(),
            bindings: vec![avatar.body_id],
            groups: Vec::new(),
        });
        self.pending.push(EngineEvent::RecordingStarted { tick: self.world.tick, scope });
        Ok(())
    }

    pub fn stop_recording(&mut self) -> Result<RecordingId> {
        let rec = self.recorder.take().ok_or(EngineError::NotRecording)?;
        if rec.frames.len() < 2 {
            return Err(EngineError::EmptyRecording);
        }
        let id = self.store.alloc();
        let recording = Recording::new(
            id,
            rec.scope,
            self.world.config.tick_rate,
            rec.frames,
            rec.events,
        )?;
        self.store.insert(recording);
        self.pending.push(EngineEvent::RecordingStopped { tick: self.world.tick, recording: id });
        Ok(id)
    }

    /// Appends the avatar's body for the tick just completed.
    pub(crate) fn capture_frame(&mut self) {
        let tick = self.world.tick;
        let dt = self.world.config.dt();
        let body = self.world.avatar.body;
        if let Some(rec) = self.recorder.as_mut() {
            let t = (tick - rec.start_tick) as f64 * dt;
            rec.frames.push(RecordedFrame { t, body: body.transformed(&rec.anchor.inverse()) });
        }
    }

    pub fn apply_recording(&mut self, recording: RecordingId, target: ApplyTarget) -> Result<()> {
        let rec = self.store.get(recording)?.clone();
        let tick = self.world.tick;
        match target {
            ApplyTarget::Clone(id) => {
                self.set_mode(id, crate::command::ModeRequest::Replayed { recording, phase: 0.0 })?;
            }
            ApplyTarget::Group { id, delta } => {
                if !delta.is_finite() {
                    return Err(EngineError::InvalidInput("non-finite phase step".into()));
                }
                let members: Vec<EntityId> = self
                    .world
                    .groups
                    .get(&id)
                    .ok_or(EngineError::UnknownGroup(id))?
                    .iter()
                    .copied()
                    .collect();
                for (i, m) in members.into_iter().enumerate() {
                    let c = self.world.clone_mut(m)?;
                    c.mode = crate::world::CloneMode::Replayed {
                        recording,
                        phase: (i as f64 * delta).rem_euclid(rec.duration),
                        started_at_tick: tick,
                    };
                }
            }
            ApplyTarget::Avatar => {
                if rec.scope != RecordingScope::Extended && !self.world.config.allow_pose_self_replay {
                    return Err(EngineError::ScopeViolation);
                }
                self.self_replay = Some(SelfReplay {
                    recording,
                    anchor: self.world.avatar.root,
                    started_at: tick,
                    bindings: vec![self.world.avatar.body_id],
                    groups: Vec::new(),
                    next_event: 0,
                });
            }
        }
        Ok(())
    }

    /// Step 1 of self-replay: recorded commands due by this tick.
    pub(crate) fn self_replay_commands(&mut self) {
        let Some(sr) = self.self_replay.as_ref() else { return };
        let Ok(rec) = self.store.get(sr.recording).cloned() else {
            self.self_replay = None;
            return;
        };
        let tick = self.world.tick;
        let now = (tick - sr.started_at) as f64 * self.world.config.dt();
        let recording = sr.recording;
        loop {
            let sr = self.self_replay.as_mut().expect("active");
            let idx = sr.next_event;
            let Some(ev) = rec.events.get(idx) else { break };
            if ev.t > now + 1e-9 {
                break;
            }
            sr.next_event += 1;
            let RecordedEventKind::Command { command } = &ev.kind else { continue };
            self.pending.push(EngineEvent::ReplayCue { tick, clone: None, recording, event_index: idx });
            let sr = self.self_replay.as_ref().expect("active");
            let mut map = FromLocal { bindings: &sr.bindings, groups: &sr.groups };
            let root = self.world.avatar.root;
            let resolved = command.clone().resolve(&mut map).map(|c| c.placed_at(&root));
            let result = resolved.and_then(|c| self.execute(c));
            match result {
                Ok(out) => {
                    if let Some(sr) = self.self_replay.as_mut() {
                        sr.bindings.extend(out.entities.iter().chain(&out.objects).copied());
                        sr.groups.extend(out.group);
                    }
                }
                Err(e) => {
                    log::warn!("replayed {} failed: {e}", command.name());
                    self.pending.push(EngineEvent::CommandRejected {
                        tick,
                        op: command.name().into(),
                        code: e.code().into(),
                        detail: e.to_string(),
                    });
                }
            }
        }
    }

    /// Step 2 of self-replay: the avatar body follows the recording. Returns
    /// false when no self-replay is active.
    pub(crate) fn self_replay_input(&mut self) -> bool {
        let Some(sr) = self.self_replay.as_ref() else { return false };
        let Ok(rec) = self.store.get(sr.recording) else { return false };
        let dt = self.world.config.dt();
        let n = self.world.tick - sr.started_at;
        let t = ((n + 1) as f64 * dt).min(rec.duration);
        let world_body = rec.sample_clamped(t).transformed(&sr.anchor);
        let avatar = &mut self.world.avatar;
        let s = avatar.scale;
        let inv = avatar.root.inverse();
        avatar.input = world_body.map_poses(|p| {
            let local = inv.apply(p);
            Pose::new(local.position * (1.0 / s), local.orientation)
        });
        avatar.body = world_body;
        true
    }

    pub(crate) fn finish_self_replay(&mut self) {
        let Some(sr) = self.self_replay.as_ref() else { return };
        let done = match self.store.get(sr.recording) {
            Ok(rec) => {
                let elapsed = (self.world.tick - sr.started_at) as f64 * self.world.config.dt();
                elapsed > rec.duration + 1e-9 && sr.next_event >= rec.events.len()
            }
            Err(_) => true,
        };
        if done {
            let recording = sr.recording;
            self.self_replay = None;
            self.pending.push(EngineEvent::ReplayFinished { tick: self.world.tick, recording });
        }
    }
}
