use super::undo::{Prior, UndoKind};
use super::Engine;
use crate::command::{CommandOutcome, SnapChoice};
use crate::error::{EngineError, Result};
use crate::geometry::{check_scale, snap_to_grid, Pose, Quat, RigidTransform, Vec3};
use crate::interaction::Attachment;
use crate::world::{BodyFrame, CloneEntity, CloneMode, EntityId, Hand, DEFAULT_OUTLINE};

const GROUND_TOLERANCE: f64 = 1e-9;

impl Engine {
    fn insert_clone(&mut self, root: RigidTransform, mode: CloneMode, body: BodyFrame, scale: f64) -> EntityId {
        let id = self.world.alloc_entity();
        self.world.clones.insert(
            id,
            CloneEntity {
                id,
                root,
                mode,
                body,
                mirror: false,
                scale,
                group: None,
                outline_color_index: DEFAULT_OUTLINE,
            },
        );
        id
    }

    /// Leaves a static clone where the avatar stands, holding whatever the
    /// avatar held, and steps the avatar back.
    pub fn spawn_direct(&mut self) -> Result<EntityId> {
        let avatar = self.world.avatar.clone();
        let user_anchors = self.user_anchors();
        let id = self.insert_clone(avatar.root, CloneMode::Static, avatar.body, avatar.scale);

        let mut transferred = Vec::new();
        for a in self.world.attachments.values_mut() {
            if a.holder == avatar.body_id {
                transferred.push(*a);
                a.holder = id;
            }
        }
        let back = RigidTransform::translation(Vec3::new(0.0, 0.0, -self.world.config.backward_offset));
        self.move_avatar_root(avatar.root.compose(&back));
        self.push_undo(
            UndoKind::Spawn,
            vec![id],
            Prior::Direct { root: avatar.root, body: avatar.body, user_anchors, transferred },
        );
        Ok(id)
    }

    /// Places an empty-handed static clone in a neutral standing pose.
    pub fn spawn_indirect(&mut self, target: &Pose, snap: SnapChoice, scale: f64) -> Result<EntityId> {
        check_scale(scale)?;
        if !target.is_finite() {
            return Err(EngineError::InvalidInput("non-finite spawn target".into()));
        }
        let y = target.position.y;
        if y.abs() > GROUND_TOLERANCE {
            return Err(EngineError::OffGround(y));
        }
        let cfg = self.world.config.clone();
        let ground = Vec3::new(target.position.x, 0.0, target.position.z);
        let root = match snap {
            SnapChoice::None => RigidTransform::new(ground, target.orientation.yaw_only()),
            SnapChoice::Grid => {
                RigidTransform::new(snap_to_grid(ground, cfg.arm_length), target.orientation.yaw_only())
            }
            SnapChoice::NearestObject => {
                let anchor = self
                    .world
                    .nearest_object(ground, cfg.snap_search_radius, None)
                    .ok_or(EngineError::NoSnapAnchor)?;
                let obj = self.world.objects[&anchor].pose.position;
                let obj = Vec3::new(obj.x, 0.0, obj.z);
                let mut dir = obj - self.world.avatar.root.translation;
                dir.y = 0.0;
                if dir.length() < 1e-9 {
                    dir = obj - ground;
                }
                if dir.length() < 1e-9 {
                    dir = self.world.avatar.root.rotation.rotate(Vec3::FORWARD);
                }
                let dir = dir * (1.0 / dir.length());
                RigidTransform::new(obj - dir * cfg.arm_length, Quat::from_yaw(dir.x.atan2(dir.z)))
            }
        };
        let local = BodyFrame::standing(cfg.standing_height);
        let body = local.map_poses(|p| root.apply(&Pose::new(p.position * scale, p.orientation)));
        let id = self.insert_clone(root, CloneMode::Static, body, scale);
        self.push_undo(UndoKind::Spawn, vec![id], Prior::None);
        Ok(id)
    }

    /// One synchronous clone per other object sharing the selected object's tag.
    pub fn spawn_auto(&mut self, selected: EntityId) -> Result<CommandOutcome> {
        let sel = self.world.object(selected).ok_or(EngineError::UnknownEntity(selected))?;
        let tag = sel.tag.clone();
        let offset = sel.frame().inverse().compose(&self.world.avatar.root);
        let others: Vec<EntityId> =
            self.world.objects_by_tag(&tag).into_iter().filter(|id| *id != selected).collect();
        let mut out = CommandOutcome::default();
        for other in others {
            let frame = self.world.object_frame(other)?;
            let (clone, objects) = self.spawn_synchronous_at(frame.compose(&offset));
            out.entities.push(clone);
            out.objects.extend(objects);
        }
        if !out.entities.is_empty() {
            let created = out.entities.iter().chain(&out.objects).copied().collect();
            self.push_undo(UndoKind::AutoSpawnBatch, created, Prior::None);
        }
        Ok(out)
    }

    /// A synchronous clone standing relative to `target` as the avatar stands relative to `reference`.
    pub fn spawn_relative(&mut self, reference: EntityId, target: EntityId) -> Result<CommandOutcome> {
        let r = self.world.object_frame(reference)?;
        let t = self.world.object_frame(target)?;
        if reference == target {
            return Err(EngineError::SameObject);
        }
        let offset = r.inverse().compose(&self.world.avatar.root);
        let (clone, objects) = self.spawn_synchronous_at(t.compose(&offset));
        let created = std::iter::once(clone).chain(objects.iter().copied()).collect();
        self.push_undo(UndoKind::Spawn, created, Prior::None);
        Ok(CommandOutcome { entities: vec![clone], objects, ..Default::default() })
    }

    /// Synchronous clone at `root`, holding copies of what the avatar holds.
    fn spawn_synchronous_at(&mut self, root: RigidTransform) -> (EntityId, Vec<EntityId>) {
        let avatar = self.world.avatar.clone();
        let root = root.yaw_only();
        let to_clone = root.compose(&avatar.root.inverse());
        let body = avatar.body.transformed(&to_clone);
        let mode = CloneMode::Synchronous { user_anchor: avatar.root, clone_anchor: root };
        let id = self.insert_clone(root, mode, body, 1.0);

        let mut objects = Vec::new();
        for hand in Hand::BOTH {
            let Some(held) = self.world.held_by(avatar.body_id, hand) else { continue };
            let grip = self.world.attachments[&held].grip;
            let src = self.world.objects[&held].clone();
            let copy = self.world.alloc_entity();
            let pose = body.hand(hand).as_transform().compose(&grip).as_pose();
            self.world.objects.insert(
                copy,
                crate::world::WorldObject { id: copy, pose, velocity: Vec3::ZERO, falling: false, ..src },
            );
            self.world
                .attachments
                .insert(copy, Attachment { object: copy, holder: id, hand, grip });
            objects.push(copy);
        }
        (id, objects)
    }
}
