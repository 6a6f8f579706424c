use super::*;
use crate::command::{ApplyTarget, DuplicateTarget, Locomotion, ModeRequest, SnapChoice};
use crate::geometry::{Quat, RigidTransform, Vec3};
use crate::world::{CloneMode, WorldConfig};

const TOL: f64 = 1e-9;

fn engine() -> Engine {
    Engine::new(World::new(WorldConfig::default()))
}

fn dt(e: &Engine) -> f64 {
    e.world().config().dt()
}

fn step(e: &mut Engine, input: &BodyFrame) -> TickEvents {
    let dt = dt(e);
    e.tick_update(input, dt).unwrap()
}

fn idle(e: &mut Engine, n: usize) {
    let input = e.world().avatar().input;
    for _ in 0..n {
        step(e, &input);
    }
}

fn clone_local(e: &Engine, id: EntityId) -> BodyFrame {
    let c = e.world().clone_entity(id).unwrap();
    c.body.transformed(&c.root.inverse())
}

fn with_right_hand(p: Vec3) -> BodyFrame {
    let mut f = BodyFrame::neutral();
    f.right_hand.position = p;
    f
}

fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
    a.distance(b) <= tol
}

/// Avatar holding a grabbable object in its right hand.
fn holding(e: &mut Engine, tag: &str) -> EntityId {
    let hand = e.world().avatar().body.right_hand.position;
    let obj = e.world_mut().add_object(tag, Pose::at(hand), true).unwrap();
    let me = e.world().avatar().body_id;
    assert_eq!(e.grab(me, Hand::Right).unwrap(), Some(obj));
    obj
}

/// A 2 s recording of the right hand sweeping along local x and back.
fn sweep_recording(e: &mut Engine) -> RecordingId {
    e.start_recording(RecordingScope::PosesAndGrabs).unwrap();
    for i in 1..=120 {
        let s = (i as f64 / 120.0 * std::f64::consts::TAU).sin();
        step(e, &with_right_hand(Vec3::new(-0.3 + 0.3 * s, 1.0, 0.3)));
    }
    e.stop_recording().unwrap()
}

// ---- spawning

#[test]
fn direct_spawn_transfers_and_steps_back() {
    let mut e = engine();
    let obj = holding(&mut e, "ladle");
    let before = e.world().avatar().clone();
    let id = e.spawn_direct().unwrap();
    let w = e.world();
    let c = w.clone_entity(id).unwrap();
    assert_eq!(c.body, before.body);
    assert_eq!(c.root, before.root);
    assert_eq!(c.mode, CloneMode::Static);
    assert_eq!(w.held_by(id, Hand::Right), Some(obj));
    assert_eq!(w.held_by(w.avatar().body_id, Hand::Right), None);
    let moved = w.avatar().root.translation.distance(before.root.translation);
    assert!((moved - 0.5).abs() < TOL);
    assert!(close(w.avatar().root.translation, Vec3::new(0.0, 0.0, -0.5), TOL));
}

#[test]
fn direct_spawn_chain() {
    let mut e = engine();
    let a = e.spawn_direct().unwrap();
    let b = e.spawn_direct().unwrap();
    let pa = e.world().clone_entity(a).unwrap().root.translation;
    let pb = e.world().clone_entity(b).unwrap().root.translation;
    assert!(close(pa, Vec3::ZERO, TOL));
    assert!(close(pb, Vec3::new(0.0, 0.0, -0.5), TOL));
}

#[test]
fn indirect_spawn_plain_and_grid() {
    let mut e = engine();
    let id = e
        .spawn_indirect(&Pose::with_yaw_deg(Vec3::new(3.0, 0.0, 0.0), 180.0), SnapChoice::None, 1.0)
        .unwrap();
    let c = e.world().clone_entity(id).unwrap();
    assert!(c.root.approx_eq(&RigidTransform::from_yaw_deg(Vec3::new(3.0, 0.0, 0.0), 180.0), TOL));
    assert_eq!(c.mode, CloneMode::Static);
    let local = clone_local(&e, id);
    assert!(local.approx_eq(&BodyFrame::neutral(), TOL));

    let mut cfg = WorldConfig::default();
    cfg.arm_length = 0.5;
    let mut e = Engine::new(World::new(cfg));
    let id = e.spawn_indirect(&Pose::at(Vec3::new(1.1, 0.0, 0.2)), SnapChoice::Grid, 1.0).unwrap();
    let root = e.world().clone_entity(id).unwrap().root.translation;
    assert!(close(root, Vec3::new(1.0, 0.0, 0.0), TOL));
}

#[test]
fn indirect_spawn_snaps_to_object() {
    let mut e = engine();
    e.world_mut().add_object("crate", Pose::at(Vec3::new(2.0, 0.0, 0.0)), false).unwrap();
    let id = e
        .spawn_indirect(&Pose::at(Vec3::new(1.8, 0.0, 0.3)), SnapChoice::NearestObject, 1.0)
        .unwrap();
    let c = e.world().clone_entity(id).unwrap();
    assert!(close(c.root.translation, Vec3::new(1.25, 0.0, 0.0), TOL));
    // facing +x
    assert!(close(c.root.rotation.rotate(Vec3::FORWARD), Vec3::new(1.0, 0.0, 0.0), TOL));

    let far = Pose::at(Vec3::new(9.0, 0.0, 9.0));
    assert_eq!(e.spawn_indirect(&far, SnapChoice::NearestObject, 1.0), Err(EngineError::NoSnapAnchor));
    let raised = Pose::at(Vec3::new(0.0, 1.0, 0.0));
    assert_eq!(e.spawn_indirect(&raised, SnapChoice::None, 1.0), Err(EngineError::OffGround(1.0)));
}

#[test]
fn indirect_spawn_is_empty_handed() {
    let mut e = engine();
    holding(&mut e, "ladle");
    let id = e.spawn_indirect(&Pose::at(Vec3::new(2.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    assert!(Hand::BOTH.iter().all(|h| e.world().held_by(id, *h).is_none()));
}

fn four_pegs(e: &mut Engine) -> Vec<EntityId> {
    (0..4)
        .map(|i| {
            let pose = Pose::with_yaw_deg(Vec3::new(i as f64 * 1.5, 0.3, 1.0), 15.0 * i as f64);
            e.world_mut().add_object("peg", pose, false).unwrap()
        })
        .collect()
}

#[test]
fn auto_spawn_duplicates_held_objects() {
    let mut e = engine();
    let pegs = four_pegs(&mut e);
    let hammer = holding(&mut e, "hammer");
    let offset = e.world().object_frame(pegs[0]).unwrap().inverse().compose(&e.world().avatar().root);
    let out = e.spawn_auto(pegs[0]).unwrap();
    assert_eq!(out.entities.len(), 3);
    assert_eq!(out.objects.len(), 3);
    for (clone, peg) in out.entities.iter().zip(&pegs[1..]) {
        let c = e.world().clone_entity(*clone).unwrap();
        assert!(matches!(c.mode, CloneMode::Synchronous { .. }));
        let held = e.world().held_by(*clone, Hand::Right).unwrap();
        assert_ne!(held, hammer);
        assert_eq!(e.world().object(held).unwrap().tag, "hammer");
        let o = e.world().object_frame(*peg).unwrap().inverse().compose(&c.root);
        assert!(o.approx_eq(&offset, TOL));
    }
    assert_eq!(e.undo_depth(), 1);
    assert_eq!(e.undo().unwrap(), UndoKind::AutoSpawnBatch);
    assert_eq!(e.world().clone_count(), 0);
    assert_eq!(e.world().objects_by_tag("hammer"), vec![hammer]);
}

#[test]
fn auto_spawn_unique_tag_is_noop() {
    let mut e = engine();
    let lone = e.world_mut().add_object("anvil", Pose::IDENTITY, false).unwrap();
    assert!(e.spawn_auto(lone).unwrap().entities.is_empty());
    assert_eq!(e.undo_depth(), 0);
}

#[test]
fn relative_spawn_example() {
    let mut e = Engine::new(World::with_avatar(
        WorldConfig::default(),
        RigidTransform::translation(Vec3::new(0.0, 0.0, -1.0)),
        BodyFrame::neutral(),
    ));
    let r = e.world_mut().add_object("handle", Pose::IDENTITY, false).unwrap();
    let t = e
        .world_mut()
        .add_object("handle", Pose::with_yaw_deg(Vec3::new(5.0, 0.0, 5.0), 90.0), false)
        .unwrap();
    let out = e.spawn_relative(r, t).unwrap();
    let c = e.world().clone_entity(out.entities[0]).unwrap();
    // R(90°)·(0,0,−1) = (−1,0,0)
    assert!(c.root.approx_eq(&RigidTransform::from_yaw_deg(Vec3::new(4.0, 0.0, 5.0), 90.0), TOL));
    assert_eq!(e.spawn_relative(r, r), Err(EngineError::SameObject));
    assert_eq!(e.spawn_relative(r, EntityId(99)), Err(EngineError::UnknownEntity(EntityId(99))));
}

// ---- modes, mirror, scale

#[test]
fn mode_transitions() {
    let mut e = engine();
    let id = e.spawn_indirect(&Pose::at(Vec3::new(2.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    let frozen = e.world().clone_entity(id).unwrap().body;
    step(&mut e, &with_right_hand(Vec3::new(-0.3, 1.3, 0.2)));
    assert_eq!(e.world().clone_entity(id).unwrap().body, frozen);

    e.set_mode(id, ModeRequest::Synchronous).unwrap();
    let held = with_right_hand(Vec3::new(-0.3, 1.3, 0.2));
    step(&mut e, &held);
    // continuous: the first solve after anchor capture reproduces the avatar's local body
    let local = clone_local(&e, id);
    let avatar_local = e.world().avatar().body.transformed(&e.world().avatar().root.inverse());
    assert!(local.approx_eq(&avatar_local, TOL));

    e.set_mode(id, ModeRequest::Static).unwrap();
    let before = e.world().clone_entity(id).unwrap().body;
    step(&mut e, &with_right_hand(Vec3::new(-0.5, 1.2, 0.4)));
    assert_eq!(e.world().clone_entity(id).unwrap().body, before);
}

#[test]
fn replayed_mode_starts_at_frame_zero() {
    let mut e = engine();
    let rec = sweep_recording(&mut e);
    let id = e.spawn_indirect(&Pose::at(Vec3::new(3.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    e.set_mode(id, ModeRequest::Replayed { recording: rec, phase: 0.0 }).unwrap();
    idle(&mut e, 1);
    let first = e.recording(rec).unwrap().frames[0].body;
    assert!(clone_local(&e, id).approx_eq(&first, TOL));
    assert_eq!(
        e.set_mode(id, ModeRequest::Replayed { recording: RecordingId(42), phase: 0.0 }),
        Err(EngineError::UnknownRecording(RecordingId(42)))
    );
}

fn sync_clone_at(e: &mut Engine, p: Vec3, yaw: f64) -> EntityId {
    let id = e.spawn_indirect(&Pose::with_yaw_deg(p, yaw), SnapChoice::None, 1.0).unwrap();
    e.set_mode(id, ModeRequest::Synchronous).unwrap();
    idle(e, 1);
    id
}

#[test]
fn mirror_raises_opposite_hand() {
    let mut e = engine();
    let id = sync_clone_at(&mut e, Vec3::new(0.0, 0.0, 3.0), 180.0);
    e.world_mut().clone_mut(id).unwrap().mirror = true;
    idle(&mut e, 1);
    let before = clone_local(&e, id);
    step(&mut e, &with_right_hand(Vec3::new(-0.3, 1.3, 0.2)));
    let after = clone_local(&e, id);
    let rise = after.left_hand.position.y - before.left_hand.position.y;
    assert!((rise - 0.3).abs() < TOL);
    assert!(close(after.right_hand.position, before.right_hand.position, TOL));

    // stepping +x locally maps to −x in the clone frame
    let mut shifted = with_right_hand(Vec3::new(-0.3, 1.3, 0.2));
    shifted = shifted.transformed(&RigidTransform::translation(Vec3::new(0.2, 0.0, 0.0)));
    step(&mut e, &shifted);
    let moved = clone_local(&e, id);
    assert!((moved.head.position.x - (after.head.position.x - 0.2)).abs() < TOL);
}

#[test]
fn mirror_toggle_is_involution() {
    let mut e = engine();
    let id = sync_clone_at(&mut e, Vec3::new(1.0, 0.0, 2.0), 30.0);
    let input = with_right_hand(Vec3::new(-0.1, 1.4, 0.5));
    step(&mut e, &input);
    let plain = e.world().clone_entity(id).unwrap().body;
    for on in [true, false] {
        e.world_mut().clone_mut(id).unwrap().mirror = on;
        step(&mut e, &input);
    }
    assert!(e.world().clone_entity(id).unwrap().body.approx_eq(&plain, TOL));
}

#[test]
fn scale_multiplies_local_positions() {
    let mut e = engine();
    let id = sync_clone_at(&mut e, Vec3::new(4.0, 0.0, 0.0), 0.0);
    e.execute(Command::SetScale { clone: id, scale: 2.0 }).unwrap();
    step(&mut e, &with_right_hand(Vec3::new(0.0, 0.0, 0.5)));
    let local = clone_local(&e, id);
    assert!(close(local.right_hand.position, Vec3::new(0.0, 0.0, 1.0), TOL));
    assert_eq!(
        e.execute(Command::SetScale { clone: id, scale: 11.0 }),
        Err(EngineError::Geometry(crate::error::GeometryError::ScaleOutOfRange(11.0)))
    );
}

#[test]
fn giant_clone_amplifies_motion() {
    let mut e = engine();
    let id = sync_clone_at(&mut e, Vec3::new(4.0, 0.0, 0.0), 0.0);
    e.execute(Command::SetScale { clone: id, scale: 5.0 }).unwrap();
    let path: Vec<Vec3> = (0..30).map(|i| Vec3::new(-0.3 + 0.01 * i as f64, 1.0, 0.2 + 0.005 * i as f64)).collect();
    step(&mut e, &with_right_hand(path[0]));
    let start = e.world().clone_entity(id).unwrap().body.right_hand.position;
    for p in &path[1..] {
        step(&mut e, &with_right_hand(*p));
    }
    let end = e.world().clone_entity(id).unwrap().body.right_hand.position;
    let ratio = end.distance(start) / path[29].distance(path[0]);
    assert!((ratio - 5.0).abs() < 1e-9);
}

// ---- switching

#[test]
fn switch_exchanges_bodies() {
    let mut e = engine();
    let id = e.spawn_indirect(&Pose::with_yaw_deg(Vec3::new(2.0, 0.0, 1.0), 90.0), SnapChoice::None, 1.0).unwrap();
    let bodies = e.world().body_ids().len();
    let old = e.world().avatar().clone();
    let events = {
        e.switch_control(id).unwrap();
        std::mem::take(&mut e.pending)
    };
    let w = e.world();
    assert_eq!(w.avatar().body_id, id);
    assert_eq!(w.avatar().root, RigidTransform::from_yaw_deg(Vec3::new(2.0, 0.0, 1.0), 90.0).yaw_only());
    let former = w.clone_entity(old.body_id).unwrap();
    assert_eq!(former.mode, CloneMode::Static);
    assert_eq!(former.body, old.body);
    assert_eq!(w.body_ids().len(), bodies);
    assert!(matches!(events[0], EngineEvent::SwitchTransition { duration, .. } if duration == 0.3));
    assert_eq!(e.switch_control(EntityId(77)), Err(EngineError::UnknownEntity(EntityId(77))));
}

#[test]
fn switching_into_scaled_clone() {
    let mut e = engine();
    let id = e.spawn_indirect(&Pose::at(Vec3::new(2.0, 0.0, 0.0)), SnapChoice::None, 2.0).unwrap();
    e.switch_control(id).unwrap();
    step(&mut e, &with_right_hand(Vec3::new(-0.3, 1.0, 0.2)));
    let a = e.world().avatar().body.right_hand.position;
    step(&mut e, &with_right_hand(Vec3::new(-0.3, 1.1, 0.3)));
    let b = e.world().avatar().body.right_hand.position;
    let ratio = a.distance(b) / Vec3::new(0.0, 0.1, 0.1).length();
    assert!((ratio - 2.0).abs() < 1e-9);
}

// ---- grouping, moving, duplicating

#[test]
fn grouping_shares_color_and_undoes() {
    let mut e = engine();
    let a = e.spawn_indirect(&Pose::at(Vec3::new(1.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    let b = e.spawn_indirect(&Pose::at(Vec3::new(2.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    let h = e.world().hash();
    let g = e.set_group(&[a, b]).unwrap();
    let (ca, cb) = (e.world().clone_entity(a).unwrap(), e.world().clone_entity(b).unwrap());
    assert_eq!((ca.group, cb.group), (Some(g), Some(g)));
    assert_eq!(ca.outline_color_index, cb.outline_color_index);
    assert_ne!(ca.outline_color_index, crate::world::DEFAULT_OUTLINE);
    assert_eq!(e.set_group(&[a, b]), Err(EngineError::AlreadyGrouped(a)));
    e.undo().unwrap();
    assert_eq!(e.world().hash(), h);
    assert_eq!(e.set_group(&[a]), Err(EngineError::TooFewMembers));
}

#[test]
fn move_ungrouped_and_grouped() {
    let mut e = engine();
    let a = e.spawn_indirect(&Pose::at(Vec3::new(1.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    let b = e.spawn_indirect(&Pose::with_yaw_deg(Vec3::new(2.0, 0.0, 1.0), 45.0), SnapChoice::None, 1.0).unwrap();
    let root_b = e.world().clone_entity(b).unwrap().root;
    e.move_clone(a, &RigidTransform::translation(Vec3::new(3.0, 0.0, 0.0))).unwrap();
    assert!(close(e.world().clone_entity(a).unwrap().root.translation, Vec3::new(3.0, 0.0, 0.0), TOL));
    assert_eq!(e.world().clone_entity(b).unwrap().root, root_b);

    e.set_group(&[a, b]).unwrap();
    let rel = |e: &Engine| {
        let (ra, rb) = (e.world().clone_entity(a).unwrap().root, e.world().clone_entity(b).unwrap().root);
        ra.inverse().compose(&rb)
    };
    let before = rel(&e);
    e.move_clone(b, &RigidTransform::from_yaw_deg(Vec3::new(-4.0, 0.0, 2.0), 170.0)).unwrap();
    assert!(rel(&e).approx_eq(&before, TOL));
}

#[test]
fn moving_sync_member_keeps_local_solve() {
    let mut e = engine();
    let a = sync_clone_at(&mut e, Vec3::new(1.0, 0.0, 2.0), 0.0);
    let b = sync_clone_at(&mut e, Vec3::new(-1.0, 0.0, 2.0), 0.0);
    e.set_group(&[a, b]).unwrap();
    let input = with_right_hand(Vec3::new(-0.2, 1.2, 0.4));
    step(&mut e, &input);
    let before = clone_local(&e, a);
    e.move_clone(a, &RigidTransform::from_yaw_deg(Vec3::new(6.0, 0.0, -3.0), 60.0)).unwrap();
    step(&mut e, &input);
    assert!(clone_local(&e, a).approx_eq(&before, TOL));
}

#[test]
fn duplicate_group_and_replayed_clone() {
    let mut e = engine();
    let ids: Vec<EntityId> = (0..3)
        .map(|i| {
            let p = Pose::with_yaw_deg(Vec3::new(i as f64, 0.0, 1.0), 20.0 * i as f64);
            e.spawn_indirect(&p, SnapChoice::None, 1.0).unwrap()
        })
        .collect();
    let g = e.set_group(&ids).unwrap();
    let h = e.world().hash();
    let out = e
        .duplicate(DuplicateTarget::Group(g), &RigidTransform::translation(Vec3::new(5.0, 0.0, 0.0)))
        .unwrap();
    assert_eq!(out.entities.len(), 3);
    let ng = out.group.unwrap();
    assert_ne!(ng, g);
    for i in 0..3 {
        for j in 0..3 {
            let r = |id: EntityId| e.world().clone_entity(id).unwrap().root;
            let orig = r(ids[i]).inverse().compose(&r(ids[j]));
            let copy = r(out.entities[i]).inverse().compose(&r(out.entities[j]));
            assert!(orig.approx_eq(&copy, TOL));
        }
        assert_eq!(e.world().clone_entity(out.entities[i]).unwrap().group, Some(ng));
    }
    e.undo().unwrap();
    assert_eq!(e.world().hash(), h);

    let rec = sweep_recording(&mut e);
    e.apply_recording(rec, ApplyTarget::Clone(ids[0])).unwrap();
    let out = e.duplicate(DuplicateTarget::Clone(ids[0]), &RigidTransform::IDENTITY).unwrap();
    let copy = e.world().clone_entity(out.entities[0]).unwrap();
    assert!(matches!(copy.mode, CloneMode::Replayed { recording, .. } if recording == rec));
}

#[test]
fn single_duplicate_matches_spawn() {
    let mut e = engine();
    let a = e.spawn_indirect(&Pose::at(Vec3::new(1.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    let out = e
        .duplicate(DuplicateTarget::Clone(a), &RigidTransform::translation(Vec3::new(1.0, 0.0, 0.0)))
        .unwrap();
    let mut fresh = engine();
    let b = fresh.spawn_indirect(&Pose::at(Vec3::new(2.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    let (x, y) = (e.world().clone_entity(out.entities[0]).unwrap(), fresh.world().clone_entity(b).unwrap());
    assert!(x.root.approx_eq(&y.root, TOL));
    assert!(x.body.approx_eq(&y.body, TOL));
    assert_eq!((x.mode, x.mirror, x.scale), (y.mode, y.mirror, y.scale));
}

// ---- removal and undo

#[test]
fn remove_drops_held_object_near_user() {
    let mut e = engine();
    let wood = holding(&mut e, "wood");
    let id = e.spawn_direct().unwrap();
    e.locomote(Locomotion::Teleport { to: Vec3::new(5.0, 0.0, 5.0) });
    e.remove_clone(id).unwrap();
    let p = e.world().object(wood).unwrap().pose.position;
    assert!(close(p, Vec3::new(5.0, 1.0, 5.5), TOL));
    assert!(e.world().attachment_of(wood).is_none());
    let me = e.world().avatar().body_id;
    assert_eq!(e.remove_clone(me), Err(EngineError::CannotRemoveControlledBody));
}

#[test]
fn remove_dissolves_small_group() {
    let mut e = engine();
    let a = e.spawn_indirect(&Pose::at(Vec3::new(1.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    let b = e.spawn_indirect(&Pose::at(Vec3::new(2.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    e.set_group(&[a, b]).unwrap();
    e.remove_clone(a).unwrap();
    assert!(e.world().groups().is_empty());
    assert_eq!(e.world().clone_entity(b).unwrap().group, None);
    e.world().check_integrity().unwrap();
}

#[test]
fn undo_restores_hash_for_each_spawn() {
    let mut e = engine();
    let pegs = four_pegs(&mut e);
    holding(&mut e, "hammer");
    idle(&mut e, 3);
    let cmds = vec![
        Command::SpawnDirect,
        Command::SpawnIndirect { target: Pose::at(Vec3::new(2.0, 0.0, 2.0)), snap: SnapChoice::Grid, scale: 1.5 },
        Command::SpawnAuto { selected: pegs[0] },
        Command::SpawnRelative { reference: pegs[1], target: pegs[2] },
    ];
    for cmd in cmds {
        let h = e.world().hash();
        e.execute(cmd).unwrap();
        assert_ne!(e.world().hash(), h);
        e.execute(Command::Undo).unwrap();
        assert_eq!(e.world().hash(), h);
    }
    assert_eq!(e.undo(), Err(EngineError::EmptyUndoStack));
}

// ---- locomotion

#[test]
fn teleport_does_not_move_sync_clones() {
    let mut e = engine();
    let id = sync_clone_at(&mut e, Vec3::new(2.0, 0.0, 2.0), 90.0);
    let input = with_right_hand(Vec3::new(-0.2, 1.1, 0.3));
    step(&mut e, &input);
    let before = e.world().clone_entity(id).unwrap().body;
    e.locomote(Locomotion::Teleport { to: Vec3::new(5.0, 0.0, 0.0) });
    step(&mut e, &input);
    assert!(e.world().clone_entity(id).unwrap().body.approx_eq(&before, 1e-12));
}

#[test]
fn rotation_establishes_offset() {
    let mut e = engine();
    let id = sync_clone_at(&mut e, Vec3::new(0.0, 0.0, 3.0), 0.0);
    e.locomote(Locomotion::Rotate { yaw_delta: 90.0 });
    step(&mut e, &with_right_hand(Vec3::new(-0.3, 1.0, 0.2)));
    let (a0, c0) = (e.world().avatar().body.right_hand.position, e.world().clone_entity(id).unwrap().body.right_hand.position);
    step(&mut e, &with_right_hand(Vec3::new(-0.3, 1.0, 0.5)));
    let (a1, c1) = (e.world().avatar().body.right_hand.position, e.world().clone_entity(id).unwrap().body.right_hand.position);
    let (da, dc) = (a1 - a0, c1 - c0);
    // avatar now pushes along +x in the world; the clone still pushes along +z
    assert!(close(da, Vec3::new(0.3, 0.0, 0.0), TOL));
    assert!(close(dc, Vec3::new(0.0, 0.0, 0.3), TOL));
    assert!(da.dot(dc).abs() < TOL);
}

#[test]
fn zero_teleport_is_noop() {
    let mut e = engine();
    sync_clone_at(&mut e, Vec3::new(2.0, 0.0, 2.0), 0.0);
    let h = e.world().hash();
    let here = e.world().avatar().root.translation;
    e.locomote(Locomotion::Teleport { to: here });
    assert_eq!(e.world().hash(), h);
}

#[test]
fn step_onto_static_clone() {
    let mut e = engine();
    let id = e.spawn_indirect(&Pose::at(Vec3::new(2.0, 0.0, 3.0)), SnapChoice::None, 1.0).unwrap();
    e.step_onto(id).unwrap();
    assert!(close(e.world().avatar().root.translation, Vec3::new(2.0, 1.6, 3.0), TOL));
    // head 1.6 m above the new root plus a 0.75 m arm clears 2.5 m
    let reach = e.world().avatar().body.head.position.y + e.world().config().arm_length;
    assert!(reach >= 2.5);
    e.set_mode(id, ModeRequest::Synchronous).unwrap();
    assert_eq!(e.step_onto(id), Err(EngineError::NotStatic(id)));
}

// ---- tick update

#[test]
fn sync_clone_follows_in_its_frame() {
    let mut e = engine();
    let id = sync_clone_at(&mut e, Vec3::new(3.0, 0.0, 0.0), 90.0);
    let before = clone_local(&e, id);
    step(&mut e, &with_right_hand(Vec3::new(-0.2, 1.0, 0.2)));
    let after = clone_local(&e, id);
    assert!(close(after.right_hand.position - before.right_hand.position, Vec3::new(0.1, 0.0, 0.0), TOL));
}

#[test]
fn brigade_mirroring_alternates_hands() {
    let mut e = engine();
    let ids: Vec<EntityId> =
        (1..=4).map(|i| sync_clone_at(&mut e, Vec3::new(0.0, 0.0, 2.0 * i as f64), 0.0)).collect();
    for id in [ids[1], ids[3]] {
        e.world_mut().clone_mut(id).unwrap().mirror = true;
    }
    idle(&mut e, 1);
    let before: Vec<BodyFrame> = ids.iter().map(|id| clone_local(&e, *id)).collect();
    let mut raised = BodyFrame::neutral();
    raised.left_hand.position.y += 0.4;
    step(&mut e, &raised);
    for (k, id) in ids.iter().enumerate() {
        let after = clone_local(&e, *id);
        let (up, still) = if k % 2 == 1 { (Hand::Right, Hand::Left) } else { (Hand::Left, Hand::Right) };
        assert!((after.hand(up).position.y - before[k].hand(up).position.y - 0.4).abs() < TOL);
        assert!(close(after.hand(still).position, before[k].hand(still).position, TOL));
    }
}

#[test]
fn solve_is_deterministic() {
    let run = || {
        let mut e = engine();
        let pegs = four_pegs(&mut e);
        holding(&mut e, "hammer");
        e.spawn_auto(pegs[0]).unwrap();
        let mut hashes = Vec::new();
        for i in 0..90 {
            let y = 1.0 + 0.3 * (i as f64 * 0.2).sin();
            step(&mut e, &with_right_hand(Vec3::new(-0.3, y, 0.3)));
            hashes.push(e.world().hash());
        }
        hashes
    };
    assert_eq!(run(), run());
}

#[test]
fn bad_timestep_rejected() {
    let mut e = engine();
    let r = e.tick_update(&BodyFrame::neutral(), 1.0 / 72.0);
    assert!(matches!(r, Err(EngineError::BadTimestep { .. })));
    assert_eq!(e.world().tick(), 0);
}

#[test]
fn queued_commands_apply_at_next_tick() {
    let mut e = engine();
    e.enqueue(Command::SpawnIndirect { target: Pose::at(Vec3::new(1.0, 0.0, 0.0)), snap: SnapChoice::None, scale: 1.0 });
    e.enqueue(Command::RemoveClone { target: EntityId(99) });
    assert_eq!(e.world().clone_count(), 0);
    let events = step(&mut e, &BodyFrame::neutral());
    assert_eq!(e.world().clone_count(), 1);
    assert!(events.iter().any(|ev| matches!(ev, EngineEvent::CommandRejected { code, .. } if code == "UnknownEntity")));
}

// ---- grab edges

#[test]
fn grab_flags_drive_attachment() {
    let mut e = engine();
    let ball = e.world_mut().add_object("ball", Pose::at(Vec3::new(-0.3, 1.0, 0.3)), true).unwrap();
    let mut f = BodyFrame::neutral();
    f.right_grab = true;
    let ev = step(&mut e, &f);
    assert!(ev.iter().any(|x| matches!(x, EngineEvent::Grab { object, .. } if *object == ball)));
    f.right_hand.position.y = 1.5;
    step(&mut e, &f);
    assert!(close(e.world().object(ball).unwrap().pose.position, Vec3::new(-0.3, 1.5, 0.3), TOL));
    f.right_grab = false;
    let ev = step(&mut e, &f);
    assert!(ev.iter().any(|x| matches!(x, EngineEvent::Release { .. })));
    assert!(e.world().object(ball).unwrap().falling);
}

#[test]
fn same_tick_handoff_between_clones() {
    let mut e = engine();
    // two static clones facing each other with touching right hands
    let a = e.spawn_indirect(&Pose::at(Vec3::new(0.0, 0.0, 2.0)), SnapChoice::None, 1.0).unwrap();
    let b = e.spawn_indirect(&Pose::with_yaw_deg(Vec3::new(-0.6, 0.0, 2.4), 180.0), SnapChoice::None, 1.0).unwrap();
    let pa = e.world().clone_entity(a).unwrap().body.right_hand.position;
    let pb = e.world().clone_entity(b).unwrap().body.right_hand.position;
    assert!(pa.distance(pb) < 0.25);
    let bucket = e.world_mut().add_object("bucket", Pose::at(pa), true).unwrap();
    e.grab(a, Hand::Right).unwrap();
    e.world.clones.get_mut(&a).unwrap().body.right_grab = true;
    idle(&mut e, 1);
    // a lets go while b closes its hand in the same tick
    e.world.clones.get_mut(&a).unwrap().body.right_grab = false;
    e.world.clones.get_mut(&b).unwrap().body.right_grab = true;
    let prev = vec![(a, [false, true]), (b, [false, false])];
    e.resolve_grab_edges(&prev);
    assert_eq!(e.world().attachment_of(bucket).unwrap().holder, b);
}

// ---- recorder

#[test]
fn recording_frame_count() {
    let mut e = engine();
    e.start_recording(RecordingScope::PosesAndGrabs).unwrap();
    assert_eq!(e.start_recording(RecordingScope::Extended), Err(EngineError::AlreadyRecording));
    idle(&mut e, 120);
    let id = e.stop_recording().unwrap();
    let r = e.recording(id).unwrap();
    assert_eq!(r.frames.len(), 121);
    assert!((r.duration - 2.0).abs() < 1e-12);
    assert_eq!(e.stop_recording(), Err(EngineError::NotRecording));
    e.start_recording(RecordingScope::Extended).unwrap();
    assert_eq!(e.stop_recording(), Err(EngineError::EmptyRecording));
    assert!(e.list_recordings().iter().map(|s| s.id).eq([id]));
}

#[test]
fn recordings_are_anchor_relative() {
    let record_at = |root: RigidTransform| {
        let mut e = Engine::new(World::with_avatar(WorldConfig::default(), root, BodyFrame::neutral()));
        e.start_recording(RecordingScope::PosesAndGrabs).unwrap();
        idle(&mut e, 10);
        let id = e.stop_recording().unwrap();
        e.recording(id).unwrap().frames.clone()
    };
    let a = record_at(RigidTransform::IDENTITY);
    let b = record_at(RigidTransform::from_yaw_deg(Vec3::new(7.0, 0.0, -3.0), 135.0));
    for (x, y) in a.iter().zip(&b) {
        assert!(x.body.approx_eq(&y.body, TOL));
    }
}

#[test]
fn list_recordings_ascending() {
    let mut e = engine();
    assert!(e.list_recordings().is_empty());
    let a = sweep_recording(&mut e);
    let b = sweep_recording(&mut e);
    let list = e.list_recordings();
    assert_eq!(list.iter().map(|s| s.id).collect::<Vec<_>>(), vec![a, b]);
    for s in list {
        assert_eq!(s.duration, e.recording(s.id).unwrap().duration);
    }
}

#[test]
fn replay_on_clone_loops_at_its_root() {
    let mut e = engine();
    let rec = sweep_recording(&mut e);
    let id = e.spawn_indirect(&Pose::with_yaw_deg(Vec3::new(4.0, 0.0, 4.0), 70.0), SnapChoice::None, 1.0).unwrap();
    e.apply_recording(rec, ApplyTarget::Clone(id)).unwrap();
    let r = e.recording(rec).unwrap().clone();
    for n in 0..300u64 {
        idle(&mut e, 1);
        let expected = r.sample(n as f64 * r.dt());
        assert!(clone_local(&e, id).approx_eq(&expected, TOL), "tick {n}");
    }
}

#[test]
fn group_phase_shift() {
    let mut e = engine();
    let rec = sweep_recording(&mut e);
    let ids: Vec<EntityId> = (0..4)
        .map(|i| e.spawn_indirect(&Pose::at(Vec3::new(i as f64, 0.0, 3.0)), SnapChoice::None, 1.0).unwrap())
        .collect();
    let g = e.set_group(&ids).unwrap();
    e.apply_recording(rec, ApplyTarget::Group { id: g, delta: 0.5 }).unwrap();
    let phases: Vec<f64> = ids
        .iter()
        .map(|id| match e.world().clone_entity(*id).unwrap().mode {
            CloneMode::Replayed { phase, .. } => phase,
            _ => panic!("not replayed"),
        })
        .collect();
    assert_eq!(phases, vec![0.0, 0.5, 1.0, 1.5]);
    let mut history: Vec<Vec<BodyFrame>> = vec![Vec::new(); 4];
    for _ in 0..240 {
        idle(&mut e, 1);
        for (k, id) in ids.iter().enumerate() {
            history[k].push(clone_local(&e, *id));
        }
    }
    // clone i at tick n equals clone 0 at tick n − 30·i (0.5 s per step), modulo 120 ticks
    for k in 1..4 {
        for n in 120..240 {
            let src = (n - 30 * k) % 120 + 120;
            let src = if src >= 240 { src - 120 } else { src };
            assert!(history[k][n].approx_eq(&history[0][src], TOL), "clone {k} tick {n}");
        }
    }
}

#[test]
fn teleport_automator() {
    let mut e = engine();
    e.execute(Command::StartRecording { scope: RecordingScope::Extended }).unwrap();
    idle(&mut e, 2);
    let out = e
        .execute(Command::SpawnIndirect {
            target: Pose::at(Vec3::new(0.0, 0.0, 3.0)),
            snap: SnapChoice::None,
            scale: 1.0,
        })
        .unwrap();
    let original = e.world().avatar().body_id;
    idle(&mut e, 2);
    e.execute(Command::SwitchControl { target: out.entities[0] }).unwrap();
    e.execute(Command::Locomote { kind: Locomotion::Rotate { yaw_delta: 180.0 } }).unwrap();
    idle(&mut e, 2);
    e.execute(Command::RemoveClone { target: original }).unwrap();
    e.execute(Command::Locomote { kind: Locomotion::Rotate { yaw_delta: 180.0 } }).unwrap();
    idle(&mut e, 2);
    let rec = e.execute(Command::StopRecording).unwrap().recording.unwrap();
    assert_eq!(e.world().clone_count(), 0);
    let offset = e.world().avatar().root;
    assert!(close(offset.translation, Vec3::new(0.0, 0.0, 3.0), TOL));

    // elsewhere, facing sideways
    e.locomote(Locomotion::Teleport { to: Vec3::new(-4.0, 0.0, 1.0) });
    e.locomote(Locomotion::Rotate { yaw_delta: 90.0 });
    let start = e.world().avatar().root;
    let clones_before = e.world().clone_count();
    e.apply_recording(rec, ApplyTarget::Avatar).unwrap();
    idle(&mut e, 20);
    assert!(!e.is_self_replaying());
    let end = e.world().avatar().root;
    assert!(end.approx_eq(&start.compose(&offset), 1e-9));
    assert_eq!(e.world().clone_count(), clones_before);
}

#[test]
fn pose_only_self_replay_needs_permission() {
    let mut e = engine();
    let rec = sweep_recording(&mut e);
    assert_eq!(e.apply_recording(rec, ApplyTarget::Avatar), Err(EngineError::ScopeViolation));
    let mut cfg = WorldConfig::default();
    cfg.allow_pose_self_replay = true;
    let mut e2 = Engine::new(World::new(cfg));
    let id = e2.import_recording(e.recording(rec).unwrap().clone()).unwrap();
    e2.apply_recording(id, ApplyTarget::Avatar).unwrap();
    idle(&mut e2, 60);
    let expected = e2.recording(id).unwrap().frames[60].body;
    assert!(e2.world().avatar().body.approx_eq(&expected, TOL));
}

#[test]
fn replayed_grab_events_fire_each_loop() {
    let mut e = engine();
    e.start_recording(RecordingScope::PosesAndGrabs).unwrap();
    let mut f = BodyFrame::neutral();
    idle(&mut e, 30);
    f.right_grab = true;
    step(&mut e, &f);
    for _ in 0..29 {
        step(&mut e, &f);
    }
    f.right_grab = false;
    for _ in 0..60 {
        step(&mut e, &f);
    }
    let rec = e.stop_recording().unwrap();
    assert_eq!(e.recording(rec).unwrap().events.len(), 2);
    let id = e.spawn_indirect(&Pose::at(Vec3::new(3.0, 0.0, 0.0)), SnapChoice::None, 1.0).unwrap();
    e.apply_recording(rec, ApplyTarget::Clone(id)).unwrap();
    let mut cues = 0;
    for _ in 0..(120 * 10) {
        let input = e.world().avatar().input;
        cues += step(&mut e, &input)
            .iter()
            .filter(|ev| matches!(ev, EngineEvent::ReplayCue { clone: Some(c), .. } if *c == id))
            .count();
    }
    assert_eq!(cues, 20);
}

#[test]
fn integrity_after_mixed_commands() {
    let mut e = engine();
    let pegs = four_pegs(&mut e);
    holding(&mut e, "hammer");
    let out = e.spawn_auto(pegs[0]).unwrap();
    let g = e.set_group(&out.entities[..2]).unwrap();
    e.duplicate(DuplicateTarget::Group(g), &RigidTransform::translation(Vec3::new(0.0, 0.0, 4.0))).unwrap();
    e.remove_clone(out.entities[0]).unwrap();
    e.switch_control(out.entities[2]).unwrap();
    idle(&mut e, 5);
    e.world().check_integrity().unwrap();
    let q = Quat::from_yaw_deg(10.0);
    assert!(q.is_finite());
}
