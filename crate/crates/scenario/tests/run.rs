use clonemator_core::recorder::RecordingScope;
use clonemator_core::{BodyFrame, Engine, World, WorldConfig};
use clonemator_scenario::bundled::load_bundled;
use clonemator_scenario::{load_scenario, run_scenario, run_with_observer, RunReport};

fn doc(body: &str) -> String {
    format!(r#"{{"version":"clonemator-scenario/1","name":"t",{body}}}"#)
}

fn run(body: &str) -> RunReport {
    run_scenario(&load_scenario(&doc(body)).unwrap())
}

#[test]
fn minimal_scenario_runs_one_tick() {
    let r = run(r#""ticks":1"#);
    assert!(r.passed);
    assert_eq!(r.ticks_executed, 1);
    assert_eq!(r.final_hash.len(), 64);
}

#[test]
fn same_scenario_twice_is_byte_identical() {
    let s = load_bundled("vertical_bucket_brigade").unwrap();
    let a = run_scenario(&s);
    let b = run_scenario(&s);
    assert_eq!(a.final_hash, b.final_hash);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn report_omits_wall_clock() {
    let json = run(r#""ticks":1"#).to_json();
    assert!(!json.contains("wall"));
}

#[test]
fn engine_error_aborts_naming_tick_and_command() {
    let r = run(
        r#""ticks":10,
        "timeline":[{"tick":3,"command":{"op":"spawn_indirect","target":{"position":[0,1,2]}}}],
        "assertions":[{"tick":1,"check":{"kind":"entity_count","of":"clones","equals":0}},
                      {"tick":8,"check":{"kind":"entity_count","of":"clones","equals":0}}]"#,
    );
    assert!(!r.passed);
    let f = r.failure.as_ref().unwrap();
    assert_eq!((f.tick, f.op.as_str(), f.code.as_str()), (3, "spawn_indirect", "OffGround"));
    assert_eq!(r.ticks_executed, 3);
    assert!(r.assertions[0].passed);
    assert!(!r.assertions[1].passed);
    assert!(r.assertions[1].detail.as_deref().unwrap().contains("aborted at tick 3"));
}

#[test]
fn unresolved_name_aborts() {
    let r = run(r#""ticks":5,"timeline":[{"tick":0,"command":{"op":"step_onto","target":"ghost"}}]"#);
    let f = r.failure.unwrap();
    assert_eq!(f.code, "unresolved_name");
    assert!(f.detail.contains("ghost"));
}

#[test]
fn unresolved_assertion_name_fails_without_abort() {
    let r = run(
        r#""ticks":2,"assertions":[{"tick":2,"check":{"kind":"pose_equals","entity":"nobody","expected":[0,0,0]}}]"#,
    );
    assert!(!r.passed);
    assert!(r.failure.is_none());
    assert_eq!(r.ticks_executed, 2);
    assert!(r.assertions[0].detail.as_deref().unwrap().contains("nobody"));
}

#[test]
fn scalar_below_minimum_reports_measured() {
    let r = run(
        r#""ticks":1,
        "objects":[{"name":"peg","tag":"peg","pose":[0,0.3,1],"scalar_state":{"depth":0.1}}],
        "assertions":[{"tick":1,"check":{"kind":"scalar_state_at_least","entity":"peg","key":"depth","min":0.2}}]"#,
    );
    assert!(!r.assertions[0].passed);
    assert_eq!(r.assertions[0].measured["value"], 0.1);
}

#[test]
fn hash_equals_against_golden() {
    let golden = run(r#""ticks":3,"objects":[{"tag":"peg","pose":[1,0,1]}]"#).final_hash;
    let body = |h: &str| {
        format!(
            r#""ticks":3,"objects":[{{"tag":"peg","pose":[1,0,1]}}],
            "assertions":[{{"tick":3,"check":{{"kind":"hash_equals","expected":"{h}"}}}}]"#
        )
    };
    assert!(run(&body(&golden)).passed);
    assert!(!run(&body(&"0".repeat(64))).passed);
}

#[test]
fn grouped_clones_stay_rigid_across_move() {
    let r = run(
        r#""ticks":10,
        "timeline":[
          {"tick":0,"command":{"op":"spawn_indirect","target":{"position":[1,0,2]}},"bind":"a"},
          {"tick":0,"command":{"op":"spawn_indirect","target":{"position":[2,0,3],"orientation":[0.7071067811865476,0,0.7071067811865476,0]}},"bind":"b"},
          {"tick":0,"command":{"op":"set_group","members":["a","b"]},"bind":"g"},
          {"tick":5,"command":{"op":"move","target":"a","new_root":{"translation":[-3,0,1],"rotation":[0,0,1,0]}}}],
        "assertions":[
          {"tick":10,"check":{"kind":"relative_transform_equals","a":"a","b":"b","reference_tick":2}},
          {"tick":10,"check":{"kind":"pose_equals","entity":"a","expected":{"position":[-3,0,1],"yaw_deg":180}}},
          {"tick":10,"check":{"kind":"entity_count","of":"groups","equals":1}}]"#,
    );
    assert!(r.passed, "{}", r.to_json());
}

#[test]
fn bind_count_mismatch_aborts() {
    let r = run(
        r#""ticks":4,
        "objects":[{"name":"p1","tag":"peg","pose":[0,0,1]},{"tag":"peg","pose":[3,0,1]}],
        "timeline":[{"tick":1,"command":{"op":"spawn_auto","selected":"p1"},"bind":["x","y"]}]"#,
    );
    let f = r.failure.unwrap();
    assert_eq!((f.tick, f.code.as_str()), (1, "bind"));
}

#[test]
fn recording_fixture_replays_on_a_clone() {
    let mut e = Engine::new(World::new(WorldConfig::default()));
    let dt = e.world().config().dt();
    e.start_recording(RecordingScope::PosesAndGrabs).unwrap();
    for i in 1..=60 {
        let mut f = BodyFrame::neutral();
        f.right_hand.position.y = 1.0 + 0.01 * i as f64;
        e.tick_update(&f, dt).unwrap();
    }
    let id = e.stop_recording().unwrap();
    let fixture = e.recording(id).unwrap().to_json();

    let r = run(&format!(
        r#""ticks":31,
        "recordings":[{{"name":"raise","recording":{fixture}}}],
        "timeline":[
          {{"tick":0,"command":{{"op":"spawn_indirect","target":{{"position":[2,0,0]}}}},"bind":"c"}},
          {{"tick":0,"command":{{"op":"apply_recording","recording":"raise","target":{{"clone":"c"}}}}}}],
        "assertions":[
          {{"tick":31,"check":{{"kind":"pose_equals","entity":"c","joint":"right_hand","expected":[1.7,1.3,0.2]}}}},
          {{"tick":31,"check":{{"kind":"entity_count","of":"recordings","equals":1}}}}]"#
    ));
    assert!(r.passed, "{}", r.to_json());
}

#[test]
fn observer_sees_every_tick() {
    let s = load_scenario(&doc(r#""ticks":25"#)).unwrap();
    let mut ticks = Vec::new();
    run_with_observer(&s, |e, _| ticks.push(e.world().tick()));
    assert_eq!(ticks, (1..=25).collect::<Vec<u64>>());
}

#[test]
fn hammering_drives_all_pegs_on_the_same_tick() {
    let s = load_bundled("hammering").unwrap();
    let mut first_deep = std::collections::BTreeMap::new();
    run_with_observer(&s, |e, _| {
        for o in e.world().objects().filter(|o| o.tag == "peg") {
            if o.scalar("depth") >= 0.2 - 1e-9 {
                first_deep.entry(o.id).or_insert(e.world().tick());
            }
        }
    });
    assert_eq!(first_deep.len(), 4);
    let ticks: std::collections::BTreeSet<u64> = first_deep.values().copied().collect();
    assert_eq!(ticks.len(), 1, "{first_deep:?}");
}

#[test]
fn teleport_automator_displaces_by_recorded_offset() {
    let s = load_bundled("teleport_automator").unwrap();
    let mut roots = Vec::new();
    run_with_observer(&s, |e, _| {
        let t = e.world().tick();
        if t == 70 || t == 135 || t == 220 {
            roots.push(e.world().avatar().root.translation);
        }
    });
    let step = roots[1] - roots[0];
    let step2 = roots[2] - roots[1];
    assert!((step.z - 3.0).abs() < 1e-9 && step.x.abs() < 1e-9);
    assert!((step2.z - 3.0).abs() < 1e-9);
}
