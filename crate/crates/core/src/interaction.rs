//! Grab/release resolution, rigid attachment of held objects, gravity
//! settling of released objects and scenario-defined contact rules.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::world::{EntityId, Hand, World};

/// An object rigidly following a hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub object: EntityId,
    pub holder: EntityId,
    pub hand: Hand,
    /// Object pose relative to the hand, fixed at grab time.
    pub grip: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactPredicate {
    pub max_distance: f64,
    #[serde(default)]
    pub min_relative_speed: f64,
    /// When set, the speed is measured along this direction only.
    #[serde(default)]
    pub direction: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactEffect {
    pub key: String,
    pub delta: f64,
}

/// Fires when a held `actor_tag` object meets a `target_tag` object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactRule {
    pub name: String,
    pub actor_tag: String,
    pub target_tag: String,
    pub predicate: ContactPredicate,
    pub effect: ContactEffect,
}

impl ContactRule {
    pub fn validate(&self) -> Result<()> {
        let p = &self.predicate;
        if !(p.max_distance.is_finite() && p.max_distance > 0.0) {
            return Err(EngineError::InvalidInput(format!(
                "contact rule {}: max_distance must be positive",
                self.name
            )));
        }
        if let Some(d) = p.direction {
            if (d.length() - 1.0).abs() > 1e-6 {
                return Err(EngineError::InvalidInput(format!(
                    "contact rule {}: direction must be a unit vector",
                    self.name
                )));
            }
        }
        if !self.effect.delta.is_finite() {
            return Err(EngineError::InvalidInput(format!(
                "contact rule {}: non-finite delta",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub tick: u64,
    pub rule: String,
    pub actor: EntityId,
    pub target: EntityId,
}

/// Attaches the nearest free grabbable object within `grab_radius` of the
/// hand. Ties go to the lower id.
pub fn grab(w: &mut World, holder: EntityId, hand: Hand) -> Result<Option<EntityId>> {
    let hand_pose = w.hand_pose(holder, hand).ok_or(EngineError::UnknownEntity(holder))?;
    if let Some(held) = w.held_by(holder, hand) {
        return Err(EngineError::HandOccupied(held));
    }
    let radius = w.config.grab_radius;
    let mut best: Option<(f64, EntityId)> = None;
    for o in w.objects.values() {
        if !o.grabbable || w.attachments.contains_key(&o.id) {
            continue;
        }
        let d = o.pose.position.distance(hand_pose.position);
        if d <= radius && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, o.id));
        }
    }
    let Some((_, object)) = best else { return Ok(None) };
    let obj = w.object_mut(object)?;
    let grip = hand_pose.as_transform().inverse().compose(&obj.pose.as_transform());
    obj.falling = false;
    obj.velocity = Vec3::ZERO;
    w.attachments.insert(object, Attachment { object, holder, hand, grip });
    Ok(Some(object))
}

/// Detaches whatever `holder` holds in `hand`; it becomes a free object.
pub fn release(w: &mut World, holder: EntityId, hand: Hand) -> Result<Option<EntityId>> {
    if !w.is_body(holder) {
        return Err(EngineError::UnknownEntity(holder));
    }
    let Some(object) = w.held_by(holder, hand) else { return Ok(None) };
    w.attachments.remove(&object);
    let ballistic = w.config.ballistic;
    let obj = w.object_mut(object)?;
    if !ballistic {
        obj.velocity = Vec3::ZERO;
    }
    obj.falling = obj.pose.position.y > 0.0 || obj.velocity.y > 0.0;
    if !obj.falling {
        obj.velocity = Vec3::ZERO;
    }
    Ok(Some(object))
}

/// Moves every held object onto its hand and refreshes its velocity estimate.
pub fn update_attachments(w: &mut World, dt: f64) {
    let attachments: Vec<Attachment> = w.attachments.values().copied().collect();
    for a in attachments {
        let Some(hand) = w.hand_pose(a.holder, a.hand) else { continue };
        let pose = hand.as_transform().compose(&a.grip).as_pose();
        if let Some(obj) = w.objects.get_mut(&a.object) {
            obj.velocity = (pose.position - obj.pose.position) * (1.0 / dt);
            obj.pose = pose;
        }
    }
}

/// Re-seats held objects on their hands without touching velocity.
pub(crate) fn snap_attachments(w: &mut World) {
    let attachments: Vec<Attachment> = w.attachments.values().copied().collect();
    for a in attachments {
        let Some(hand) = w.hand_pose(a.holder, a.hand) else { continue };
        if let Some(obj) = w.objects.get_mut(&a.object) {
            obj.pose = hand.as_transform().compose(&a.grip).as_pose();
        }
    }
}

/// Semi-implicit Euler fall for released objects, clamped at the ground.
pub fn settle_free_objects(w: &mut World, dt: f64) {
    let g = w.config.gravity;
    let ballistic = w.config.ballistic;
    for obj in w.objects.values_mut() {
        if !obj.falling || w.attachments.contains_key(&obj.id) {
            continue;
        }
        obj.velocity.y -= g * dt;
        if ballistic {
            obj.pose.position += obj.velocity * dt;
        } else {
            obj.velocity.x = 0.0;
            obj.velocity.z = 0.0;
            obj.pose.position.y += obj.velocity.y * dt;
        }
        if obj.pose.position.y <= 0.0 {
            obj.pose.position.y = 0.0;
            obj.velocity = Vec3::ZERO;
            obj.falling = false;
        }
    }
}

/// Evaluates each rule over (held actor, target) pairs and applies effects.
pub fn process_contacts(w: &mut World, rules: &[ContactRule]) -> Vec<ContactEvent> {
    let mut events = Vec::new();
    for rule in rules {
        let actors: Vec<EntityId> = w
            .attachments
            .keys()
            .copied()
            .filter(|id| w.objects.get(id).is_some_and(|o| o.tag == rule.actor_tag))
            .collect();
        let targets = w.objects_by_tag(&rule.target_tag);
        for &actor in &actors {
            for &target in &targets {
                if actor == target {
                    continue;
                }
                let (a, t) = (&w.objects[&actor], &w.objects[&target]);
                if a.pose.position.distance(t.pose.position) > rule.predicate.max_distance {
                    continue;
                }
                let rel = a.velocity - t.velocity;
                let speed = match rule.predicate.direction {
                    Some(d) => rel.dot(d),
                    None => rel.length(),
                };
                if speed < rule.predicate.min_relative_speed {
                    continue;
                }
                if let Some(obj) = w.objects.get_mut(&target) {
                    *obj.scalar_state.entry(rule.effect.key.clone()).or_insert(0.0) +=
                        rule.effect.delta;
                }
                events.push(ContactEvent {
                    tick: w.tick,
                    rule: rule.name.clone(),
                    actor,
                    target,
                });
            }
        }
    }
    events
}
