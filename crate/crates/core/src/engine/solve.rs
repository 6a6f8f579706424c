use super::{Engine, EngineEvent};
use crate::geometry::{mirror_local, Pose, RigidTransform};
use crate::recorder::RecordedEventKind;
use crate::world::{BodyFrame, CloneMode, EntityId, Hand};

/// Local pose with scale applied to position, then reflected when mirrored.
fn shape(p: &Pose, scale: f64, mirror: bool) -> Pose {
    let p = Pose::new(p.position * scale, p.orientation);
    if mirror {
        mirror_local(&p)
    } else {
        p
    }
}

/// World body for a root-local `local` frame placed at `root`.
pub(crate) fn place(root: &RigidTransform, local: &BodyFrame, scale: f64, mirror: bool) -> BodyFrame {
    let frame = if mirror { local.swapped_hands() } else { *local };
    frame.map_poses(|p| root.apply(&shape(p, scale, mirror)))
}

impl Engine {
    /// Step 3: every non-static clone gets a new body.
    pub(crate) fn solve_clones(&mut self) {
        let dt = self.world.config.dt();
        let tick = self.world.tick;
        let avatar_body = self.world.avatar.body;
        let ids: Vec<EntityId> = self.world.clones.keys().copied().collect();
        for id in ids {
            let c = &self.world.clones[&id];
            match c.mode {
                CloneMode::Static => {}
                CloneMode::Synchronous { user_anchor, clone_anchor } => {
                    let local = avatar_body.transformed(&user_anchor.inverse());
                    let body = place(&clone_anchor, &local, c.scale, c.mirror);
                    self.world.clones.get_mut(&id).expect("listed").body = body;
                }
                CloneMode::Replayed { recording, phase, started_at_tick } => {
                    let Ok(rec) = self.store.get(recording).cloned() else {
                        log::warn!("clone {id} replays missing recording {recording}");
                        continue;
                    };
                    let cur = (tick - started_at_tick) as f64 * dt - phase;
                    let mut local = rec.sample(cur);
                    let prev_flags = c.body;
                    // grab intent follows recorded events, not frame flags
                    let (mut left, mut right) = if c.mirror {
                        (prev_flags.right_grab, prev_flags.left_grab)
                    } else {
                        (prev_flags.left_grab, prev_flags.right_grab)
                    };
                    for i in rec.events_between(cur - dt, cur) {
                        let (hand, on) = match rec.events[i].kind {
                            RecordedEventKind::Grab { hand } => (hand, true),
                            RecordedEventKind::Release { hand } => (hand, false),
                            RecordedEventKind::Command { .. } => continue,
                        };
                        match hand {
                            Hand::Left => left = on,
                            Hand::Right => right = on,
                        }
                        self.pending.push(EngineEvent::ReplayCue {
                            tick,
                            clone: Some(id),
                            recording,
                            event_index: i,
                        });
                    }
                    local.left_grab = left;
                    local.right_grab = right;
                    let body = place(&c.root, &local, c.scale, c.mirror);
                    self.world.clones.get_mut(&id).expect("listed").body = body;
                }
            }
        }
    }
}
