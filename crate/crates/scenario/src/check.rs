//! Assertion evaluation.

use std::collections::BTreeMap;

use clonemator_core::geometry::RigidTransform;
use clonemator_core::{Engine, EngineEvent, Pose, World};
use serde_json::{json, Value};

use crate::report::AssertionResult;
use crate::run::{entity_pose, Names};
use crate::schema::{AssertionKind, AssertionSpec, CountOf, JointSel};

/// A relative transform captured at a reference tick, or why it could not be.
pub type Capture = Result<RigidTransform, String>;

/// Engine events tagged with the tick whose update produced them.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    events: Vec<(u64, EngineEvent)>,
}

impl EventLog {
    pub fn extend(&mut self, tick: u64, events: &[EngineEvent]) {
        self.events.extend(events.iter().map(|e| (tick, e.clone())));
    }

    pub fn count(&self, name: &str, rule: Option<&str>, since: u64) -> u64 {
        self.events
            .iter()
            .filter(|(t, e)| *t >= since && e.name() == name)
            .filter(|(_, e)| match (rule, e) {
                (None, _) => true,
                (Some(r), EngineEvent::Contact(c)) => c.rule == r,
                (Some(_), _) => false,
            })
            .count() as u64
    }

    pub fn counts(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for (_, e) in &self.events {
            *out.entry(e.name().to_string()).or_insert(0) += 1;
        }
        out
    }
}

pub(crate) fn relative_frame(
    w: &World,
    names: &Names,
    a: &str,
    b: &str,
    joint: JointSel,
) -> Capture {
    let frame = |n: &str| -> Result<RigidTransform, String> {
        let id = names.entity(n, w).map_err(|e| e.to_string())?;
        entity_pose(w, id, joint).map(Pose::as_transform)
    };
    Ok(frame(a)?.inverse().compose(&frame(b)?))
}

fn pose_json(p: &Pose) -> Value {
    json!({ "position": p.position, "orientation": p.orientation })
}

/// Position distance and rotation angle (radians) between two poses.
fn pose_error(actual: &Pose, expected: &Pose) -> (f64, f64) {
    let d = actual.position.distance(expected.position);
    let dot = actual.orientation.dot(expected.orientation).abs().min(1.0);
    (d, 2.0 * dot.acos())
}

pub fn check_assertion(
    index: usize,
    spec: &AssertionSpec,
    engine: &Engine,
    names: &Names,
    log: &EventLog,
    capture: Option<&Capture>,
) -> AssertionResult {
    let w = engine.world();
    let outcome: Result<(bool, Value), String> = match &spec.check {
        AssertionKind::PoseEquals { entity, joint, expected, tolerance } => names
            .entity(entity, w)
            .map_err(|e| e.to_string())
            .and_then(|id| entity_pose(w, id, *joint))
            .map(|actual| {
                let expected = expected.pose();
                let (d, angle) = pose_error(&actual, &expected);
                let pass = actual.approx_eq(&expected, *tolerance);
                (pass, json!({ "pose": pose_json(&actual), "position_error": d, "angle_error": angle }))
            }),
        AssertionKind::RelativeTransformEquals { a, b, joint, expected, tolerance, .. } => {
            let want: Result<Pose, String> = match (expected, capture) {
                (Some(p), _) => Ok(p.pose()),
                (None, Some(Ok(t))) => Ok(t.as_pose()),
                (None, Some(Err(e))) => Err(format!("reference capture failed: {e}")),
                (None, None) => Err("reference tick not reached".into()),
            };
            want.and_then(|want| {
                let rel = relative_frame(w, names, a, b, *joint)?.as_pose();
                let (d, angle) = pose_error(&rel, &want);
                Ok((
                    rel.approx_eq(&want, *tolerance),
                    json!({ "relative": pose_json(&rel), "position_error": d, "angle_error": angle }),
                ))
            })
        }
        AssertionKind::ScalarStateAtLeast { entity, key, min, tolerance } => names
            .entity(entity, w)
            .map_err(|e| e.to_string())
            .and_then(|id| w.object(id).ok_or_else(|| format!("{entity} is not an object")))
            .map(|o| {
                let v = o.scalar(key);
                (v >= min - tolerance, json!({ "value": v }))
            }),
        AssertionKind::EntityCount { of, tag, within, equals } => {
            let n = match of {
                CountOf::Clones => w.clone_count(),
                CountOf::Groups => w.groups().len(),
                CountOf::Recordings => engine.list_recordings().len(),
                CountOf::Bodies => w.body_ids().len(),
                CountOf::Objects => w
                    .objects()
                    .filter(|o| tag.as_ref().is_none_or(|t| &o.tag == t))
                    .filter(|o| within.is_none_or(|r| r.contains(o.pose.position)))
                    .count(),
            } as u64;
            Ok((n == *equals, json!({ "count": n })))
        }
        AssertionKind::HashEquals { expected } => {
            let h = w.hash().to_hex();
            Ok((h.eq_ignore_ascii_case(expected), json!({ "hash": h })))
        }
        AssertionKind::EventCountEquals { event, rule, since, equals, at_least } => {
            let n = log.count(event, rule.as_deref(), since.unwrap_or(0));
            let pass = match (equals, at_least) {
                (Some(e), _) => n == *e,
                (None, Some(m)) => n >= *m,
                (None, None) => false,
            };
            Ok((pass, json!({ "count": n })))
        }
    };
    match outcome {
        Ok((passed, measured)) => AssertionResult::new(index, spec, passed, measured, None),
        Err(detail) => AssertionResult::new(index, spec, false, Value::Null, Some(detail)),
    }
}
