//! Drives an engine through a scenario timeline.

use std::collections::BTreeMap;
use std::time::Instant;

use clonemator_core::command::{CommandOutcome, Resolve};
use clonemator_core::world::{GroupId, RecordingId};
use clonemator_core::{Engine, EngineEvent, EntityId, Pose, World};

use crate::check::{check_assertion, relative_frame, Capture, EventLog};
use crate::error::ScenarioError;
use crate::input::InputTrack;
use crate::report::{AssertionResult, RunFailure, RunReport};
use crate::schema::{AssertionKind, Bind, ScenarioCommand, ScenarioScript};

/// Symbolic names bound to runtime ids.
#[derive(Debug, Clone, Default)]
pub struct Names {
    entities: BTreeMap<String, EntityId>,
    groups: BTreeMap<String, GroupId>,
    recordings: BTreeMap<String, RecordingId>,
}

impl Names {
    pub fn entity(&self, name: &str, w: &World) -> Result<EntityId, ScenarioError> {
        match name {
            "avatar" => Ok(w.avatar().body_id),
            "home" => Ok(w.avatar().home_body),
            _ => self
                .entities
                .get(name)
                .copied()
                .ok_or_else(|| ScenarioError::UnresolvedName(name.into())),
        }
    }

    pub fn group(&self, name: &str) -> Result<GroupId, ScenarioError> {
        self.groups.get(name).copied().ok_or_else(|| ScenarioError::UnresolvedName(name.into()))
    }

    pub fn recording(&self, name: &str) -> Result<RecordingId, ScenarioError> {
        self.recordings
            .get(name)
            .copied()
            .ok_or_else(|| ScenarioError::UnresolvedName(name.into()))
    }

    pub fn bind_entity(&mut self, name: &str, id: EntityId) {
        self.entities.insert(name.into(), id);
    }

    fn bind(&mut self, bind: &Bind, out: &CommandOutcome) -> Result<(), String> {
        match bind {
            Bind::Name(n) => {
                if let Some(r) = out.recording {
                    self.recordings.insert(n.clone(), r);
                } else if out.entities.len() == 1 {
                    self.entities.insert(n.clone(), out.entities[0]);
                } else if let Some(g) = out.group {
                    self.groups.insert(n.clone(), g);
                } else {
                    return Err(format!("nothing to bind to {n:?}"));
                }
            }
            Bind::Names(ns) => self.bind_list(ns, &out.entities, "clones")?,
            Bind::Explicit(spec) => {
                self.bind_list(&spec.entities, &out.entities, "clones")?;
                self.bind_list(&spec.objects, &out.objects, "objects")?;
                if let Some(n) = &spec.group {
                    let g = out.group.ok_or("command created no group")?;
                    self.groups.insert(n.clone(), g);
                }
                if let Some(n) = &spec.recording {
                    let r = out.recording.ok_or("command produced no recording")?;
                    self.recordings.insert(n.clone(), r);
                }
            }
        }
        Ok(())
    }

    fn bind_list(&mut self, names: &[String], ids: &[EntityId], what: &str) -> Result<(), String> {
        if names.is_empty() {
            return Ok(());
        }
        if names.len() != ids.len() {
            return Err(format!("{} names for {} new {what}", names.len(), ids.len()));
        }
        for (n, id) in names.iter().zip(ids) {
            self.entities.insert(n.clone(), *id);
        }
        Ok(())
    }
}

struct Resolver<'a> {
    names: &'a Names,
    world: &'a World,
}

impl Resolve<String, String, String> for Resolver<'_> {
    type Entity = EntityId;
    type Group = GroupId;
    type Recording = RecordingId;
    type Error = ScenarioError;

    fn entity(&mut self, e: String) -> Result<EntityId, ScenarioError> {
        self.names.entity(&e, self.world)
    }

    fn group(&mut self, g: String) -> Result<GroupId, ScenarioError> {
        self.names.group(&g)
    }

    fn recording(&mut self, r: String) -> Result<RecordingId, ScenarioError> {
        self.names.recording(&r)
    }
}

/// Builds the engine and binds object and fixture names.
pub fn setup(s: &ScenarioScript) -> Result<(Engine, Names), String> {
    let root = s.avatar_root().as_transform();
    let world = World::with_avatar(s.config.clone(), root, s.initial_input());
    let mut engine = Engine::with_rules(world, s.contact_rules.clone()).map_err(|e| e.to_string())?;
    let mut names = Names::default();
    for o in &s.objects {
        let id = engine
            .world_mut()
            .add_object_with_state(&o.tag, o.pose.pose(), o.grabbable, o.scalar_state.clone())
            .map_err(|e| format!("object {:?}: {e}", o.name.as_deref().unwrap_or(&o.tag)))?;
        if let Some(n) = &o.name {
            names.bind_entity(n, id);
        }
    }
    for f in &s.recordings {
        let id = engine.import_recording(f.recording.clone()).map_err(|e| e.to_string())?;
        names.recordings.insert(f.name.clone(), id);
    }
    Ok((engine, names))
}

fn execute(
    engine: &mut Engine,
    names: &mut Names,
    cmd: &ScenarioCommand,
    bind: Option<&Bind>,
) -> Result<(), (String, String)> {
    let resolved = {
        let mut r = Resolver { names, world: engine.world() };
        cmd.clone().resolve(&mut r).map_err(|e| ("unresolved_name".to_string(), e.to_string()))?
    };
    let out = engine.execute(resolved).map_err(|e| (e.code().to_string(), e.to_string()))?;
    if let Some(b) = bind {
        names.bind(b, &out).map_err(|e| ("bind".to_string(), e))?;
    }
    Ok(())
}

pub fn run_scenario(s: &ScenarioScript) -> RunReport {
    run_with_observer(s, |_, _| {})
}

/// Runs `s`, calling `observe` after every update with the engine and the
/// events that update produced.
pub fn run_with_observer(
    s: &ScenarioScript,
    mut observe: impl FnMut(&Engine, &[EngineEvent]),
) -> RunReport {
    let started = Instant::now();
    let mut report = RunReport::new(&s.name);

    let (mut engine, mut names) = match setup(s) {
        Ok(x) => x,
        Err(detail) => {
            report.failure =
                Some(RunFailure { tick: 0, op: "setup".into(), code: "setup".into(), detail });
            report.finish(s, None, started);
            return report;
        }
    };
    let track = match InputTrack::build(s) {
        Ok(t) => t,
        Err(e) => {
            report.failure = Some(RunFailure {
                tick: 0,
                op: "setup".into(),
                code: "setup".into(),
                detail: e.to_string(),
            });
            report.finish(s, Some(&engine), started);
            return report;
        }
    };

    let mut commands: Vec<(u64, &ScenarioCommand, Option<&Bind>)> = Vec::new();
    for step in &s.timeline {
        if let Some(c) = &step.command {
            commands.extend(step.ticks().map(|t| (t, c, step.bind.as_ref())));
        }
    }
    commands.sort_by_key(|c| c.0);

    let mut captures: BTreeMap<usize, Capture> = BTreeMap::new();
    let mut log = EventLog::default();
    let mut results: Vec<Option<AssertionResult>> = vec![None; s.assertions.len()];
    let dt = s.config.dt();
    let mut next_cmd = 0;

    for tick in 0..=s.ticks {
        for (i, a) in s.assertions.iter().enumerate() {
            if let AssertionKind::RelativeTransformEquals { a: x, b: y, joint, reference_tick: Some(r), .. } =
                &a.check
            {
                if *r == tick {
                    captures.insert(i, relative_frame(engine.world(), &names, x, y, *joint));
                }
            }
        }
        for (i, a) in s.assertions.iter().enumerate() {
            if a.tick == tick {
                results[i] = Some(check_assertion(i, a, &engine, &names, &log, captures.get(&i)));
            }
        }
        if tick == s.ticks {
            break;
        }

        while next_cmd < commands.len() && commands[next_cmd].0 == tick {
            let (_, cmd, bind) = commands[next_cmd];
            next_cmd += 1;
            if let Err((code, detail)) = execute(&mut engine, &mut names, cmd, bind) {
                log::warn!("{}: tick {tick}: {} failed: {detail}", s.name, cmd.name());
                report.failure = Some(RunFailure { tick, op: cmd.name().into(), code, detail });
                break;
            }
        }
        if report.failure.is_some() {
            break;
        }

        match engine.tick_update(&track.frame_at(tick + 1), dt) {
            Ok(events) => {
                log.extend(tick, &events);
                observe(&engine, &events);
                report.ticks_executed += 1;
            }
            Err(e) => {
                report.failure = Some(RunFailure {
                    tick,
                    op: "tick_update".into(),
                    code: e.code().into(),
                    detail: e.to_string(),
                });
                break;
            }
        }
    }

    let aborted = report.failure.as_ref().map(|f| f.tick);
    report.assertions = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.unwrap_or_else(|| AssertionResult::not_reached(i, &s.assertions[i], aborted))
        })
        .collect();
    report.event_counts = log.counts();
    report.finish(s, Some(&engine), started);
    report
}

/// Frame used by pose assertions: a body's root or joint, or an object's pose.
pub(crate) fn entity_pose(
    w: &World,
    id: EntityId,
    joint: crate::schema::JointSel,
) -> Result<Pose, String> {
    use crate::schema::JointSel;
    if let Some(root) = w.body_root(id) {
        let body = w.body_frame(id).expect("body has a frame");
        return Ok(match joint {
            JointSel::Root => root.as_pose(),
            JointSel::Head => body.head,
            JointSel::LeftHand => body.left_hand,
            JointSel::RightHand => body.right_hand,
        });
    }
    match (w.object(id), joint) {
        (Some(o), JointSel::Root) => Ok(o.pose),
        (Some(_), _) => Err(format!("{id} is an object and has no joints")),
        (None, _) => Err(format!("{id} no longer exists")),
    }
}
