use std::collections::BTreeSet;

use super::undo::{Prior, UndoKind};
use super::{Engine, EngineEvent, SWITCH_TRANSITION_SECONDS};
use crate::command::{CommandOutcome, DuplicateTarget, Locomotion, ModeRequest};
use crate::error::{EngineError, Result};
use crate::geometry::{Quat, RigidTransform, Vec3};
use crate::interaction::{snap_attachments, Attachment};
use crate::world::{group_color, CloneEntity, CloneMode, EntityId, GroupId, DEFAULT_OUTLINE};

impl Engine {
    pub(crate) fn user_anchors(&self) -> Vec<(EntityId, RigidTransform)> {
        self.world
            .clones
            .values()
            .filter_map(|c| match c.mode {
                CloneMode::Synchronous { user_anchor, .. } => Some((c.id, user_anchor)),
                _ => None,
            })
            .collect()
    }

    /// Relocates the avatar root. Synchronous clones have their user anchor
    /// carried along so they hold still.
    pub(crate) fn move_avatar_root(&mut self, new_root: RigidTransform) {
        let old = self.world.avatar.root;
        if new_root == old {
            return;
        }
        let delta = new_root.compose(&old.inverse());
        for c in self.world.clones.values_mut() {
            if let CloneMode::Synchronous { user_anchor, .. } = &mut c.mode {
                *user_anchor = delta.compose(user_anchor);
            }
        }
        let avatar = &mut self.world.avatar;
        avatar.root = new_root;
        avatar.body = avatar.solve_input(&avatar.input.clone());
        snap_attachments(&mut self.world);
    }

    pub fn set_mode(&mut self, clone: EntityId, mode: ModeRequest) -> Result<()> {
        let mode = match mode {
            ModeRequest::Static => CloneMode::Static,
            ModeRequest::Synchronous => {
                let root = self.world.clone_mut(clone)?.root;
                CloneMode::Synchronous { user_anchor: self.world.avatar.root, clone_anchor: root }
            }
            ModeRequest::Replayed { recording, phase } => {
                let duration = self.store.get(recording)?.duration;
                if !phase.is_finite() {
                    return Err(EngineError::InvalidInput("non-finite phase".into()));
                }
                CloneMode::Replayed {
                    recording,
                    phase: phase.rem_euclid(duration),
                    started_at_tick: self.world.tick,
                }
            }
        };
        self.world.clone_mut(clone)?.mode = mode;
        Ok(())
    }

    /// Hands control to `target`. The body left behind becomes a static clone.
    pub fn switch_control(&mut self, target: EntityId) -> Result<()> {
        let t = self.world.clone_mut(target)?.clone();
        if let Some(g) = t.group {
            self.world.leave_group(target, g);
        }
        self.world.clones.remove(&target);

        let avatar = self.world.avatar.clone();
        let from = avatar.body.head;
        self.world.clones.insert(
            avatar.body_id,
            CloneEntity {
                id: avatar.body_id,
                root: avatar.root,
                mode: CloneMode::Static,
                body: avatar.body,
                mirror: false,
                scale: avatar.scale,
                group: None,
                outline_color_index: DEFAULT_OUTLINE,
            },
        );

        self.move_avatar_root(t.root);
        let avatar = &mut self.world.avatar;
        avatar.body_id = target;
        avatar.scale = t.scale;
        avatar.controlled_clone = if avatar.home_body == target { None } else { Some(target) };
        avatar.body = t.body;
        let tick = self.world.tick;
        self.pending.push(EngineEvent::SwitchTransition {
            tick,
            from,
            to: t.body.head,
            duration: SWITCH_TRANSITION_SECONDS,
        });
        Ok(())
    }

    pub fn set_group(&mut self, members: &[EntityId]) -> Result<GroupId> {
        let set: BTreeSet<EntityId> = members.iter().copied().collect();
        if set.len() < 2 {
            return Err(EngineError::TooFewMembers);
        }
        for &m in &set {
            if self.world.clone_mut(m)?.group.is_some() {
                return Err(EngineError::AlreadyGrouped(m));
            }
        }
        let g = self.world.alloc_group();
        let color = group_color(g);
        let mut colors = Vec::new();
        for &m in &set {
            let c = self.world.clone_mut(m)?;
            colors.push((m, c.outline_color_index));
            c.group = Some(g);
            c.outline_color_index = color;
        }
        self.world.groups.insert(g, set.clone());
        self.push_undo(UndoKind::Group, set.into_iter().collect(), Prior::Group { group: g, colors });
        Ok(g)
    }

    fn members_of(&self, clone: EntityId) -> Vec<EntityId> {
        match self.world.clones.get(&clone).and_then(|c| c.group) {
            Some(g) => self.world.groups[&g].iter().copied().collect(),
            None => vec![clone],
        }
    }

    /// Rigidly relocates `target`, and its whole group, so its root lands on `new_root`.
    pub fn move_clone(&mut self, target: EntityId, new_root: &RigidTransform) -> Result<()> {
        let old = self.world.clone_mut(target)?.root;
        let new_root = new_root.yaw_only();
        let delta = new_root.compose(&old.inverse()).yaw_only();
        for id in self.members_of(target) {
            let c = self.world.clone_mut(id)?;
            c.root = delta.compose(&c.root);
            c.body = c.body.transformed(&delta);
            if let CloneMode::Synchronous { clone_anchor, .. } = &mut c.mode {
                *clone_anchor = delta.compose(clone_anchor);
            }
        }
        snap_attachments(&mut self.world);
        Ok(())
    }

    /// Copies a clone or group, with held objects, under `placement`.
    pub fn duplicate(
        &mut self,
        target: DuplicateTarget,
        placement: &RigidTransform,
    ) -> Result<CommandOutcome> {
        let sources: Vec<EntityId> = match target {
            DuplicateTarget::Clone(id) => {
                self.world.clone_mut(id)?;
                vec![id]
            }
            DuplicateTarget::Group(g) => self
                .world
                .groups
                .get(&g)
                .ok_or(EngineError::UnknownGroup(g))?
                .iter()
                .copied()
                .collect(),
        };
        let p = placement.yaw_only();
        let mut out = CommandOutcome::default();
        for src in &sources {
            let c = self.world.clones[src].clone();
            let id = self.world.alloc_entity();
            let mode = match c.mode {
                CloneMode::Synchronous { user_anchor, clone_anchor } => {
                    CloneMode::Synchronous { user_anchor, clone_anchor: p.compose(&clone_anchor) }
                }
                m => m,
            };
            let copy = CloneEntity {
                id,
                root: p.compose(&c.root),
                mode,
                body: c.body.transformed(&p),
                group: None,
                outline_color_index: DEFAULT_OUTLINE,
                ..c
            };
            let held: Vec<Attachment> =
                self.world.attachments.values().filter(|a| a.holder == *src).copied().collect();
            self.world.clones.insert(id, copy);
            for a in held {
                let obj = self.world.objects[&a.object].clone();
                let oid = self.world.alloc_entity();
                self.world.objects.insert(
                    oid,
                    crate::world::WorldObject {
                        id: oid,
                        pose: p.apply(&obj.pose),
                        velocity: Vec3::ZERO,
                        falling: false,
                        ..obj
                    },
                );
                self.world.attachments.insert(oid, Attachment { object: oid, holder: id, ..a });
                out.objects.push(oid);
            }
            out.entities.push(id);
        }
        if matches!(target, DuplicateTarget::Group(_)) && out.entities.len() >= 2 {
            let g = self.world.alloc_group();
            let color = group_color(g);
            for id in &out.entities {
                let c = self.world.clones.get_mut(id).expect("just inserted");
                c.group = Some(g);
                c.outline_color_index = color;
            }
            self.world.groups.insert(g, out.entities.iter().copied().collect());
            out.group = Some(g);
        }
        let created = out.entities.iter().chain(&out.objects).copied().collect();
        self.push_undo(UndoKind::Duplicate, created, Prior::None);
        Ok(out)
    }

    /// Deletes a clone. Its held objects drop just in front of the user.
    pub fn remove_clone(&mut self, target: EntityId) -> Result<()> {
        if target == self.world.avatar.body_id {
            return Err(EngineError::CannotRemoveControlledBody);
        }
        self.world.clone_mut(target)?;
        let held: Vec<EntityId> = self
            .world
            .attachments
            .values()
            .filter(|a| a.holder == target)
            .map(|a| a.object)
            .collect();
        let root = self.world.avatar.root;
        let drop_at = root.transform_point(Vec3::new(0.0, 1.0, 0.5));
        for id in held {
            self.world.attachments.remove(&id);
            let obj = self.world.object_mut(id)?;
            obj.pose.position = drop_at;
            obj.pose.orientation = root.rotation;
            obj.velocity = Vec3::ZERO;
            obj.falling = false;
        }
        self.world.delete_clone(target);
        Ok(())
    }

    pub fn locomote(&mut self, kind: Locomotion) {
        let root = self.world.avatar.root;
        let new_root = match kind {
            Locomotion::Teleport { to } => RigidTransform::new(to, root.rotation),
            Locomotion::Rotate { yaw_delta } => RigidTransform::new(
                root.translation,
                Quat::from_yaw_deg(yaw_delta).mul(root.rotation),
            ),
        };
        self.move_avatar_root(new_root);
    }

    /// Stands the avatar on a static clone's head.
    pub fn step_onto(&mut self, target: EntityId) -> Result<()> {
        let c = self.world.clone_mut(target)?;
        if !matches!(c.mode, CloneMode::Static) {
            return Err(EngineError::NotStatic(target));
        }
        let head = c.body.head.position;
        let rotation = self.world.avatar.root.rotation;
        self.move_avatar_root(RigidTransform::new(head, rotation));
        Ok(())
    }
}
