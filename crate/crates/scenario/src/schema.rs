//! Scenario document types and strict loading.

use std::collections::{BTreeMap, BTreeSet};

use clonemator_core::geometry::{Pose, Vec3};
use clonemator_core::interaction::ContactRule;
use clonemator_core::recorder::Recording;
use clonemator_core::{BodyFrame, Command, WorldConfig};
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::input::InputTrack;

pub const SCHEMA_VERSION: &str = "clonemator-scenario/1";

/// Names that always resolve to the current avatar body and the user's
/// original body.
pub const RESERVED_NAMES: [&str; 2] = ["avatar", "home"];

/// A command whose references are symbolic names.
pub type ScenarioCommand = Command<String, String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub version: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub ticks: u64,
    #[serde(default)]
    pub config: WorldConfig,
    #[serde(default)]
    pub avatar: AvatarSetup,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub contact_rules: Vec<ContactRule>,
    #[serde(default)]
    pub recordings: Vec<RecordingFixture>,
    #[serde(default)]
    pub timeline: Vec<TimedStep>,
    #[serde(default)]
    pub assertions: Vec<AssertionSpec>,
}

/// Where a pose is written in scenario files: a bare point, a point with a
/// yaw in degrees, or a full pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoseSpec {
    Point(Vec3),
    Yaw(YawPose),
    Full(Pose),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YawPose {
    pub position: Vec3,
    pub yaw_deg: f64,
}

impl PoseSpec {
    pub fn pose(&self) -> Pose {
        match *self {
            PoseSpec::Point(p) => Pose::at(p),
            PoseSpec::Yaw(y) => Pose::with_yaw_deg(y.position, y.yaw_deg),
            PoseSpec::Full(p) => Pose::new(p.position, p.orientation.normalized()),
        }
    }
}

impl Default for PoseSpec {
    fn default() -> Self {
        PoseSpec::Full(Pose::IDENTITY)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvatarSetup {
    #[serde(default)]
    pub root: PoseSpec,
    /// Starting tracked input; unspecified joints keep the neutral pose.
    #[serde(default)]
    pub input: InputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub tag: String,
    pub pose: PoseSpec,
    #[serde(default)]
    pub grabbable: bool,
    #[serde(default)]
    pub scalar_state: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingFixture {
    pub name: String,
    pub recording: Recording,
}

/// A partial root-local body frame. Missing fields carry over from the
/// previous keyframe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<PoseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_hand: Option<PoseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_hand: Option<PoseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_grab: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_grab: Option<bool>,
}

impl InputSpec {
    pub fn apply_to(&self, base: &BodyFrame) -> BodyFrame {
        let mut f = *base;
        if let Some(p) = self.head {
            f.head = p.pose();
        }
        if let Some(p) = self.left_hand {
            f.left_hand = p.pose();
        }
        if let Some(p) = self.right_hand {
            f.right_hand = p.pose();
        }
        if let Some(g) = self.left_grab {
            f.left_grab = g;
        }
        if let Some(g) = self.right_grab {
            f.right_grab = g;
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Repeat {
    pub every: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedStep {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<ScenarioCommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bind: Option<Bind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<Repeat>,
}

impl TimedStep {
    /// Every tick this step fires at.
    pub fn ticks(&self) -> impl Iterator<Item = u64> + '_ {
        let (every, count) = match self.repeat {
            Some(r) => (r.every, r.count),
            None => (0, 1),
        };
        (0..count).map(move |i| self.tick + i * every)
    }
}

/// Names given to what a command created.
///
/// A single name binds the recording if one was produced, else the only new
/// clone, else the new group. A list binds new clones in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bind {
    Name(String),
    Names(Vec<String>),
    Explicit(BindSpec),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BindSpec {
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(default)]
    pub objects: Vec<String>,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub recording: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointSel {
    #[default]
    Root,
    Head,
    LeftHand,
    RightHand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountOf {
    Clones,
    Objects,
    Groups,
    Recordings,
    Bodies,
}

/// Axis-aligned box, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min: Vec3,
    pub max: Vec3,
}

impl Region {
    pub fn contains(&self, p: Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }
}

fn pose_tolerance() -> f64 {
    1e-6
}

fn scalar_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AssertionKind {
    PoseEquals {
        entity: String,
        #[serde(default)]
        joint: JointSel,
        expected: PoseSpec,
        #[serde(default = "pose_tolerance")]
        tolerance: f64,
    },
    /// `frame(a)⁻¹ ∘ frame(b)` against a fixed value or the value captured
    /// at `reference_tick`.
    RelativeTransformEquals {
        a: String,
        b: String,
        #[serde(default)]
        joint: JointSel,
        #[serde(default)]
        expected: Option<PoseSpec>,
        #[serde(default)]
        reference_tick: Option<u64>,
        #[serde(default = "pose_tolerance")]
        tolerance: f64,
    },
    ScalarStateAtLeast {
        entity: String,
        key: String,
        min: f64,
        #[serde(default = "scalar_tolerance")]
        tolerance: f64,
    },
    EntityCount {
        of: CountOf,
        #[serde(default)]
        tag: Option<String>,
        #[serde(default)]
        within: Option<Region>,
        equals: u64,
    },
    HashEquals {
        expected: String,
    },
    EventCountEquals {
        event: String,
        #[serde(default)]
        rule: Option<String>,
        #[serde(default)]
        since: Option<u64>,
        #[serde(default)]
        equals: Option<u64>,
        #[serde(default)]
        at_least: Option<u64>,
    },
}

impl AssertionKind {
    pub fn name(&self) -> &'static str {
        match self {
            AssertionKind::PoseEquals { .. } => "pose_equals",
            AssertionKind::RelativeTransformEquals { .. } => "relative_transform_equals",
            AssertionKind::ScalarStateAtLeast { .. } => "scalar_state_at_least",
            AssertionKind::EntityCount { .. } => "entity_count",
            AssertionKind::HashEquals { .. } => "hash_equals",
            AssertionKind::EventCountEquals { .. } => "event_count_equals",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertionSpec {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub check: AssertionKind,
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioScript, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let script: ScenarioScript = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    script.validate()?;
    Ok(script)
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

impl ScenarioScript {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "version {:?}, expected {SCHEMA_VERSION:?}",
                self.version
            )));
        }
        if self.name.is_empty() {
            return Err(invalid("empty scenario name"));
        }
        self.config.validate().map_err(|e| invalid(format!("config: {e}")))?;
        for r in &self.contact_rules {
            r.validate().map_err(|e| invalid(format!("contact rule {:?}: {e}", r.name)))?;
        }

        let mut names = BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if o.tag.is_empty() {
                return Err(invalid(format!("objects[{i}]: empty tag")));
            }
            if let Some(n) = &o.name {
                if RESERVED_NAMES.contains(&n.as_str()) || !names.insert(n.as_str()) {
                    return Err(invalid(format!("objects[{i}]: name {n:?} reserved or reused")));
                }
            }
        }
        let mut rec_names = BTreeSet::new();
        for f in &self.recordings {
            if !rec_names.insert(f.name.as_str()) {
                return Err(invalid(format!("recording fixture {:?} defined twice", f.name)));
            }
            f.recording.validate().map_err(|e| invalid(format!("recording {:?}: {e}", f.name)))?;
        }

        let mut last = 0;
        for (i, s) in self.timeline.iter().enumerate() {
            if s.tick < last {
                return Err(invalid(format!(
                    "timeline[{i}] at tick {} follows tick {last}; timeline must be sorted",
                    s.tick
                )));
            }
            last = s.tick;
            match (&s.command, &s.input) {
                (Some(_), None) => {}
                (None, Some(_)) if s.bind.is_none() => {}
                (None, Some(_)) => return Err(invalid(format!("timeline[{i}]: input steps bind nothing"))),
                _ => return Err(invalid(format!("timeline[{i}]: needs exactly one of command, input"))),
            }
            if let Some(r) = s.repeat {
                if r.every == 0 || r.count == 0 {
                    return Err(invalid(format!("timeline[{i}]: repeat needs every, count >= 1")));
                }
            }
            let end = s.ticks().last().unwrap_or(s.tick);
            let limit_ok = if s.command.is_some() { end < self.ticks } else { end <= self.ticks };
            if !limit_ok {
                return Err(invalid(format!("timeline[{i}]: tick {end} outside a {}-tick run", self.ticks)));
            }
        }

        for (i, a) in self.assertions.iter().enumerate() {
            if a.tick > self.ticks {
                return Err(invalid(format!("assertions[{i}]: tick {} beyond run length", a.tick)));
            }
            match &a.check {
                AssertionKind::RelativeTransformEquals { expected, reference_tick, .. } => {
                    match (expected, reference_tick) {
                        (Some(_), None) => {}
                        (None, Some(r)) if *r <= a.tick => {}
                        _ => {
                            return Err(invalid(format!(
                                "assertions[{i}]: give expected or an earlier reference_tick"
                            )))
                        }
                    }
                }
                AssertionKind::EventCountEquals { equals, at_least, .. } => {
                    if equals.is_some() == at_least.is_some() {
                        return Err(invalid(format!("assertions[{i}]: give one of equals, at_least")));
                    }
                }
                AssertionKind::EntityCount { of, tag, within, .. } => {
                    if *of != CountOf::Objects && (tag.is_some() || within.is_some()) {
                        return Err(invalid(format!("assertions[{i}]: tag and within apply to objects")));
                    }
                }
                _ => {}
            }
        }

        let track = InputTrack::build(self)?;
        track.check_reach(self.config.max_reach)?;
        Ok(())
    }

    /// Initial root-local tracked frame.
    pub fn initial_input(&self) -> BodyFrame {
        self.avatar.input.apply_to(&BodyFrame::neutral())
    }

    pub fn avatar_root(&self) -> Pose {
        self.avatar.root.pose()
    }
}
