use serde::Serialize;

use super::Engine;
use crate::error::{EngineError, Result};
use crate::geometry::RigidTransform;
use crate::interaction::{snap_attachments, Attachment};
use crate::world::{BodyFrame, CloneMode, EntityId, GroupId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UndoKind {
    Spawn,
    AutoSpawnBatch,
    Group,
    Duplicate,
}

/// Minimal record needed to revert one command.
#[derive(Debug, Clone, PartialEq)]
pub struct UndoEntry {
    pub kind: UndoKind,
    /// Clones and objects the command created.
    pub created: Vec<EntityId>,
    pub(crate) prior: Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Prior {
    None,
    Direct {
        root: RigidTransform,
        body: BodyFrame,
        user_anchors: Vec<(EntityId, RigidTransform)>,
        transferred: Vec<Attachment>,
    },
    Group {
        group: GroupId,
        colors: Vec<(EntityId, u8)>,
    },
}

impl Engine {
    pub(crate) fn push_undo(&mut self, kind: UndoKind, created: Vec<EntityId>, prior: Prior) {
        self.undo.push(UndoEntry { kind, created, prior });
    }

    /// Reverts the newest undoable command. Ids that no longer exist are skipped.
    pub fn undo(&mut self) -> Result<UndoKind> {
        let entry = self.undo.pop().ok_or(EngineError::EmptyUndoStack)?;
        let me = self.world.avatar.body_id;
        match entry.prior {
            Prior::Direct { root, body, user_anchors, transferred } => {
                let Some(&clone) = entry.created.first() else { return Ok(entry.kind) };
                if clone == me {
                    log::info!("undo: spawned body {clone} is under control, left in place");
                    return Ok(entry.kind);
                }
                for a in transferred {
                    let free = self.world.held_by(me, a.hand).is_none();
                    if let Some(cur) = self.world.attachments.get_mut(&a.object) {
                        if cur.holder == clone && free {
                            cur.holder = me;
                        }
                    }
                }
                self.world.delete_clone(clone);
                self.world.avatar.root = root;
                self.world.avatar.body = body;
                for (id, anchor) in user_anchors {
                    if let Some(c) = self.world.clones.get_mut(&id) {
                        if let CloneMode::Synchronous { user_anchor, .. } = &mut c.mode {
                            *user_anchor = anchor;
                        }
                    }
                }
                snap_attachments(&mut self.world);
            }
            Prior::Group { group, colors } => {
                for (id, color) in colors {
                    if let Some(c) = self.world.clones.get_mut(&id) {
                        if c.group == Some(group) {
                            c.group = None;
                            c.outline_color_index = color;
                        }
                    }
                }
                self.world.groups.remove(&group);
            }
            Prior::None => {
                for id in entry.created.iter().rev() {
                    if *id == me {
                        continue;
                    }
                    if self.world.delete_clone(*id).is_none() {
                        self.world.delete_object(*id);
                    }
                }
            }
        }
        Ok(entry.kind)
    }
}
