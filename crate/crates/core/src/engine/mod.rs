//! The clone engine: command dispatch and the fixed-step update.

mod manipulate;
mod replay;
mod solve;
mod spawn;
mod undo;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::command::{Command, CommandOutcome};
use crate::error::{EngineError, Result};
use crate::geometry::Pose;
use crate::interaction::{self, ContactEvent, ContactRule};
use crate::recorder::{
    ActiveRecording, Recording, RecordingScope, RecordingStore, RecordingSummary,
};
use crate::world::{BodyFrame, EntityId, Hand, RecordingId, World};

pub use undo::{UndoEntry, UndoKind};

/// Camera blend length when control switches bodies, in seconds.
pub const SWITCH_TRANSITION_SECONDS: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineEvent {
    Contact(ContactEvent),
    Grab { tick: u64, holder: EntityId, hand: Hand, object: EntityId },
    GrabMissed { tick: u64, holder: EntityId, hand: Hand },
    Release { tick: u64, holder: EntityId, hand: Hand, object: EntityId },
    SwitchTransition { tick: u64, from: Pose, to: Pose, duration: f64 },
    RecordingStarted { tick: u64, scope: RecordingScope },
    RecordingStopped { tick: u64, recording: RecordingId },
    /// A recorded event fired during replay. `clone` is `None` for self-replay.
    ReplayCue { tick: u64, clone: Option<EntityId>, recording: RecordingId, event_index: usize },
    ReplayFinished { tick: u64, recording: RecordingId },
    CommandRejected { tick: u64, op: String, code: String, detail: String },
}

impl EngineEvent {
    pub fn name(&self) -> &'static str {
        match self {
            EngineEvent::Contact(_) => "contact",
            EngineEvent::Grab { .. } => "grab",
            EngineEvent::GrabMissed { .. } => "grab_missed",
            EngineEvent::Release { .. } => "release",
            EngineEvent::SwitchTransition { .. } => "switch_transition",
            EngineEvent::RecordingStarted { .. } => "recording_started",
            EngineEvent::RecordingStopped { .. } => "recording_stopped",
            EngineEvent::ReplayCue { .. } => "replay_cue",
            EngineEvent::ReplayFinished { .. } => "replay_finished",
            EngineEvent::CommandRejected { .. } => "command_rejected",
        }
    }
}

pub type TickEvents = Vec<EngineEvent>;

/// A pass of a recording driving the avatar itself.
#[derive(Debug, Clone)]
struct SelfReplay {
    recording: RecordingId,
    anchor: crate::geometry::RigidTransform,
    started_at: u64,
    bindings: Vec<EntityId>,
    groups: Vec<crate::world::GroupId>,
    next_event: usize,
}

#[derive(Debug, Clone)]
pub struct Engine {
    world: World,
    rules: Vec<ContactRule>,
    undo: Vec<UndoEntry>,
    store: RecordingStore,
    recorder: Option<ActiveRecording>,
    self_replay: Option<SelfReplay>,
    queue: VecDeque<Command>,
    pending: Vec<EngineEvent>,
}

impl Engine {
    pub fn new(world: World) -> Engine {
        Engine {
            world,
            rules: Vec::new(),
            undo: Vec::new(),
            store: RecordingStore::new(),
            recorder: None,
            self_replay: None,
            queue: VecDeque::new(),
            pending: Vec::new(),
        }
    }

    pub fn with_rules(world: World, rules: Vec<ContactRule>) -> Result<Engine> {
        for r in &rules {
            r.validate()?;
        }
        let mut e = Engine::new(world);
        e.rules = rules;
        Ok(e)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// Setup access for loaders and tests.
    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn rules(&self) -> &[ContactRule] {
        &self.rules
    }

    pub fn undo_depth(&self) -> usize {
        self.undo.len()
    }

    pub fn undo_stack(&self) -> &[UndoEntry] {
        &self.undo
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    /// Scope and elapsed seconds of the capture in progress.
    pub fn recorder_status(&self) -> Option<(RecordingScope, f64)> {
        self.recorder.as_ref().map(|r| {
            (r.scope, (self.world.tick - r.start_tick) as f64 * self.world.config.dt())
        })
    }

    pub fn is_self_replaying(&self) -> bool {
        self.self_replay.is_some()
    }

    pub fn list_recordings(&self) -> Vec<RecordingSummary> {
        self.store.list()
    }

    pub fn recording(&self, id: RecordingId) -> Result<&Recording> {
        self.store.get(id).map(|r| r.as_ref())
    }

    /// Adds an externally produced recording under a fresh id.
    pub fn import_recording(&mut self, mut r: Recording) -> Result<RecordingId> {
        r.id = self.store.alloc();
        r.validate()?;
        Ok(self.store.insert(r))
    }

    /// Anchor-relative body at `local_t`, plus the events due in the step ending there.
    pub fn sample_recording(
        &self,
        id: RecordingId,
        local_t: f64,
    ) -> Result<(BodyFrame, Vec<&crate::recorder::RecordedEvent>)> {
        let r = self.store.get(id)?;
        let dt = r.dt();
        let events = r.events_between(local_t - dt, local_t);
        Ok((r.sample(local_t), events.into_iter().map(|i| &r.events[i]).collect()))
    }

    /// Queues a command for step 1 of the next update.
    pub fn enqueue(&mut self, cmd: Command) {
        self.queue.push_back(cmd);
    }

    /// Runs one command immediately.
    pub fn execute(&mut self, cmd: Command) -> Result<CommandOutcome> {
        let root = self.world.avatar.root;
        let recorded = match &self.recorder {
            Some(r) if r.scope == RecordingScope::Extended && cmd.is_recordable() => {
                Some(self.to_recorded(&cmd, &root))
            }
            _ => None,
        };
        let outcome = self.dispatch(cmd)?;
        if let (Some(rc), Some(rec)) = (recorded, self.recorder.as_mut()) {
            let t = (self.world.tick - rec.start_tick) as f64 * self.world.config.dt();
            rec.events.push(crate::recorder::RecordedEvent {
                t,
                kind: crate::recorder::RecordedEventKind::Command { command: rc },
            });
            rec.bindings.extend(outcome.entities.iter().chain(&outcome.objects).copied());
            rec.groups.extend(outcome.group);
        }
        Ok(outcome)
    }

    fn dispatch(&mut self, cmd: Command) -> Result<CommandOutcome> {
        log::debug!("tick {} {}", self.world.tick, cmd.name());
        match cmd {
            Command::SpawnDirect => self.spawn_direct().map(|id| CommandOutcome::entities(vec![id])),
            Command::SpawnIndirect { target, snap, scale } => self
                .spawn_indirect(&target, snap, scale)
                .map(|id| CommandOutcome::entities(vec![id])),
            Command::SpawnAuto { selected } => self.spawn_auto(selected),
            Command::SpawnRelative { reference, target } => self.spawn_relative(reference, target),
            Command::SetMode { clone, mode } => self.set_mode(clone, mode).map(|_| Default::default()),
            Command::SetMirror { clone, on } => {
                self.world.clone_mut(clone)?.mirror = on;
                Ok(Default::default())
            }
            Command::SetScale { clone, scale } => {
                crate::geometry::check_scale(scale)?;
                self.world.clone_mut(clone)?.scale = scale;
                Ok(Default::default())
            }
            Command::SwitchControl { target } => {
                self.switch_control(target).map(|_| CommandOutcome::default())
            }
            Command::SetGroup { members } => self.set_group(&members).map(|g| CommandOutcome {
                group: Some(g),
                ..Default::default()
            }),
            Command::Move { target, new_root } => {
                self.move_clone(target, &new_root).map(|_| Default::default())
            }
            Command::Duplicate { target, placement } => self.duplicate(target, &placement),
            Command::RemoveClone { target } => {
                self.remove_clone(target).map(|_| Default::default())
            }
            Command::Undo => self.undo().map(|_| Default::default()),
            Command::Locomote { kind } => {
                self.locomote(kind);
                Ok(Default::default())
            }
            Command::StepOnto { target } => self.step_onto(target).map(|_| Default::default()),
            Command::Grab { holder, hand } => {
                let held = self.grab(holder, hand)?;
                Ok(CommandOutcome { held, ..Default::default() })
            }
            Command::Release { holder, hand } => {
                let held = self.release(holder, hand)?;
                Ok(CommandOutcome { held, ..Default::default() })
            }
            Command::StartRecording { scope } => {
                self.start_recording(scope).map(|_| Default::default())
            }
            Command::StopRecording => self.stop_recording().map(|r| CommandOutcome {
                recording: Some(r),
                ..Default::default()
            }),
            Command::ApplyRecording { recording, target } => {
                self.apply_recording(recording, target).map(|_| Default::default())
            }
        }
    }

    pub fn grab(&mut self, holder: EntityId, hand: Hand) -> Result<Option<EntityId>> {
        let object = interaction::grab(&mut self.world, holder, hand)?;
        let tick = self.world.tick;
        self.pending.push(match object {
            Some(object) => EngineEvent::Grab { tick, holder, hand, object },
            None => EngineEvent::GrabMissed { tick, holder, hand },
        });
        Ok(object)
    }

    pub fn release(&mut self, holder: EntityId, hand: Hand) -> Result<Option<EntityId>> {
        let object = interaction::release(&mut self.world, holder, hand)?;
        if let Some(object) = object {
            let tick = self.world.tick;
            self.pending.push(EngineEvent::Release { tick, holder, hand, object });
        }
        Ok(object)
    }

    /// Advances the world by one fixed step. `input` is the root-local
    /// tracked frame; it is ignored while a recording drives the avatar.
    pub fn tick_update(&mut self, input: &BodyFrame, dt: f64) -> Result<TickEvents> {
        let expected = self.world.config.dt();
        if (dt - expected).abs() > 1e-12 {
            return Err(EngineError::BadTimestep { got: dt, expected });
        }
        if !input.is_finite() {
            return Err(EngineError::InvalidInput("non-finite input frame".into()));
        }
        let tick = self.world.tick;

        // 1. commands
        while let Some(cmd) = self.queue.pop_front() {
            let op = cmd.name();
            if let Err(e) = self.execute(cmd) {
                log::warn!("tick {tick}: {op} rejected: {e}");
                self.pending.push(EngineEvent::CommandRejected {
                    tick,
                    op: op.into(),
                    code: e.code().into(),
                    detail: e.to_string(),
                });
            }
        }
        self.self_replay_commands();

        let prev_flags: Vec<(EntityId, [bool; 2])> = self
            .world
            .body_ids()
            .into_iter()
            .filter_map(|id| {
                let b = self.world.body_frame(id)?;
                Some((id, [b.left_grab, b.right_grab]))
            })
            .collect();

        // 2. avatar
        if !self.self_replay_input() {
            let avatar = &mut self.world.avatar;
            avatar.input = *input;
            avatar.body = avatar.solve_input(input);
        }

        // 3. clones
        self.solve_clones();

        // 4. grab edges, attachments, settling
        self.resolve_grab_edges(&prev_flags);
        interaction::update_attachments(&mut self.world, dt);
        interaction::settle_free_objects(&mut self.world, dt);

        // 5. contacts
        let contacts = interaction::process_contacts(&mut self.world, &self.rules);
        self.pending.extend(contacts.into_iter().map(EngineEvent::Contact));

        // 6. advance
        self.world.tick += 1;
        self.capture_frame();
        self.finish_self_replay();
        Ok(std::mem::take(&mut self.pending))
    }

    fn resolve_grab_edges(&mut self, prev: &[(EntityId, [bool; 2])]) {
        let mut releases = Vec::new();
        let mut grabs = Vec::new();
        for &(id, before) in prev {
            let Some(now) = self.world.body_frame(id) else { continue };
            for (i, hand) in Hand::BOTH.into_iter().enumerate() {
                match (before[i], now.grab(hand)) {
                    (true, false) => releases.push((id, hand)),
                    (false, true) => grabs.push((id, hand)),
                    _ => {}
                }
            }
        }
        let me = self.world.avatar.body_id;
        for (id, hand) in releases {
            if id == me {
                self.record_event(crate::recorder::RecordedEventKind::Release { hand });
            }
            let _ = self.release(id, hand);
        }
        for (id, hand) in grabs {
            if id == me {
                self.record_event(crate::recorder::RecordedEventKind::Grab { hand });
            }
            match self.grab(id, hand) {
                Ok(_) => {}
                Err(EngineError::HandOccupied(_)) => {}
                Err(e) => log::warn!("grab by {id} failed: {e}"),
            }
        }
    }

    fn record_event(&mut self, kind: crate::recorder::RecordedEventKind) {
        if let Some(rec) = self.recorder.as_mut() {
            // stamped with the frame captured at the end of this tick
            let t = (self.world.tick + 1 - rec.start_tick) as f64 * self.world.config.dt();
            rec.events.push(crate::recorder::RecordedEvent { t, kind });
        }
    }
}

#[cfg(test)]
mod tests;
