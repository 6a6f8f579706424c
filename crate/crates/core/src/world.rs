//! The mutable world: tagged objects, the user avatar, clones, groups and
//! attachments, plus queries and the canonical state hash.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EngineError, Result};
use crate::geometry::{Pose, Quat, RigidTransform, Vec3};
use crate::interaction::Attachment;

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(EntityId, "#");
id_type!(GroupId, "g");
id_type!(RecordingId, "r");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn other(self) -> Hand {
        match self {
            Hand::Left => Hand::Right,
            Hand::Right => Hand::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    Head,
    LeftHand,
    RightHand,
}

impl Joint {
    pub const ALL: [Joint; 3] = [Joint::Head, Joint::LeftHand, Joint::RightHand];

    pub fn hand(hand: Hand) -> Joint {
        match hand {
            Hand::Left => Joint::LeftHand,
            Hand::Right => Joint::RightHand,
        }
    }
}

/// Default standing head height above the body root.
pub const STANDING_HEIGHT: f64 = 1.6;

/// Three tracked points (head and both wrists) plus per-hand grab intent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyFrame {
    pub head: Pose,
    pub left_hand: Pose,
    pub right_hand: Pose,
    #[serde(default)]
    pub left_grab: bool,
    #[serde(default)]
    pub right_grab: bool,
}

impl Default for BodyFrame {
    fn default() -> Self {
        BodyFrame::neutral()
    }
}

impl BodyFrame {
    /// Standing with hands at the sides, root-local.
    pub fn neutral() -> BodyFrame {
        BodyFrame {
            head: Pose::at(Vec3::new(0.0, STANDING_HEIGHT, 0.0)),
            left_hand: Pose::at(Vec3::new(0.3, 1.0, 0.2)),
            right_hand: Pose::at(Vec3::new(-0.3, 1.0, 0.2)),
            left_grab: false,
            right_grab: false,
        }
    }

    /// Neutral pose with the head at `height`.
    pub fn standing(height: f64) -> BodyFrame {
        let mut f = BodyFrame::neutral();
        f.head.position.y = height;
        f
    }

    pub fn joint(&self, j: Joint) -> &Pose {
        match j {
            Joint::Head => &self.head,
            Joint::LeftHand => &self.left_hand,
            Joint::RightHand => &self.right_hand,
        }
    }

    pub fn joint_mut(&mut self, j: Joint) -> &mut Pose {
        match j {
            Joint::Head => &mut self.head,
            Joint::LeftHand => &mut self.left_hand,
            Joint::RightHand => &mut self.right_hand,
        }
    }

    pub fn hand(&self, hand: Hand) -> &Pose {
        self.joint(Joint::hand(hand))
    }

    pub fn grab(&self, hand: Hand) -> bool {
        match hand {
            Hand::Left => self.left_grab,
            Hand::Right => self.right_grab,
        }
    }

    pub fn set_grab(&mut self, hand: Hand, on: bool) {
        match hand {
            Hand::Left => self.left_grab = on,
            Hand::Right => self.right_grab = on,
        }
    }

    /// Applies `f` to each joint pose, keeping grab flags.
    pub fn map_poses(&self, mut f: impl FnMut(&Pose) -> Pose) -> BodyFrame {
        BodyFrame {
            head: f(&self.head),
            left_hand: f(&self.left_hand),
            right_hand: f(&self.right_hand),
            left_grab: self.left_grab,
            right_grab: self.right_grab,
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> BodyFrame {
        self.map_poses(|p| t.apply(p))
    }

    /// Exchanges the left and right channels, grab flags included.
    pub fn swapped_hands(&self) -> BodyFrame {
        BodyFrame {
            head: self.head,
            left_hand: self.right_hand,
            right_hand: self.left_hand,
            left_grab: self.right_grab,
            right_grab: self.left_grab,
        }
    }

    pub fn is_finite(&self) -> bool {
        Joint::ALL.iter().all(|j| self.joint(*j).is_finite())
    }

    pub fn approx_eq(&self, o: &BodyFrame, tol: f64) -> bool {
        Joint::ALL.iter().all(|j| self.joint(*j).approx_eq(o.joint(*j), tol))
            && self.left_grab == o.left_grab
            && self.right_grab == o.right_grab
    }

    /// Checks a root-local input frame: finite poses and hands within `max_reach` of the head.
    pub fn validate_input(&self, max_reach: f64) -> Result<()> {
        if !self.is_finite() {
            return Err(EngineError::InvalidInput("non-finite pose".into()));
        }
        for hand in Hand::BOTH {
            let d = self.hand(hand).position.distance(self.head.position);
            if d > max_reach {
                return Err(EngineError::InvalidInput(format!(
                    "{hand:?} hand {d:.3} m from head exceeds reach {max_reach} m"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: EntityId,
    pub tag: String,
    pub pose: Pose,
    pub grabbable: bool,
    #[serde(default)]
    pub scalar_state: BTreeMap<String, f64>,
    /// Last estimated linear velocity (held objects) or flight velocity.
    #[serde(default)]
    pub velocity: Vec3,
    /// In free flight since its last release.
    #[serde(default)]
    pub falling: bool,
}

impl WorldObject {
    /// Position plus heading only; pitch and roll of props are ignored.
    pub fn frame(&self) -> RigidTransform {
        RigidTransform::new(self.pose.position, self.pose.orientation.yaw_only())
    }

    pub fn scalar(&self, key: &str) -> f64 {
        self.scalar_state.get(key).copied().unwrap_or(0.0)
    }
}

/// A clone's temporal behavior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CloneMode {
    Static,
    Synchronous {
        user_anchor: RigidTransform,
        clone_anchor: RigidTransform,
    },
    Replayed {
        recording: RecordingId,
        /// Delay in seconds behind the shared replay clock, in `[0, duration)`.
        phase: f64,
        started_at_tick: u64,
    },
}

impl CloneMode {
    pub fn badge(&self) -> &'static str {
        match self {
            CloneMode::Static => "static",
            CloneMode::Synchronous { .. } => "sync",
            CloneMode::Replayed { .. } => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneEntity {
    pub id: EntityId,
    /// Yaw-only standing frame.
    pub root: RigidTransform,
    pub mode: CloneMode,
    /// World-space joints as of the latest solve.
    pub body: BodyFrame,
    pub mirror: bool,
    pub scale: f64,
    pub group: Option<GroupId>,
    pub outline_color_index: u8,
}

/// Outline color of clones outside any group.
pub const DEFAULT_OUTLINE: u8 = 0;
const GROUP_PALETTE: u64 = 7;

pub fn group_color(g: GroupId) -> u8 {
    (1 + (g.0 - 1) % GROUP_PALETTE) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarState {
    /// Entity id of the body the user currently drives.
    pub body_id: EntityId,
    /// Yaw-only.
    pub root: RigidTransform,
    /// World-space joints.
    pub body: BodyFrame,
    /// Latest tracked input, root-local.
    pub input: BodyFrame,
    pub scale: f64,
    /// The body the user started in.
    pub home_body: EntityId,
    pub controlled_clone: Option<EntityId>,
}

impl AvatarState {
    /// World-space body for a root-local input frame.
    pub fn solve_input(&self, input: &BodyFrame) -> BodyFrame {
        let s = self.scale;
        input.map_poses(|p| {
            self.root.apply(&Pose::new(p.position * s, p.orientation))
        })
    }
}

fn default_tick_rate() -> f64 {
    60.0
}
fn default_arm_length() -> f64 {
    0.75
}
fn default_grab_radius() -> f64 {
    0.25
}
fn default_backward_offset() -> f64 {
    0.5
}
fn default_snap_radius() -> f64 {
    3.0
}
fn default_gravity() -> f64 {
    9.81
}
fn default_standing_height() -> f64 {
    STANDING_HEIGHT
}
fn default_max_reach() -> f64 {
    1.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    #[serde(default = "default_tick_rate")]
    pub tick_rate: f64,
    #[serde(default = "default_arm_length")]
    pub arm_length: f64,
    #[serde(default = "default_grab_radius")]
    pub grab_radius: f64,
    #[serde(default = "default_backward_offset")]
    pub backward_offset: f64,
    #[serde(default = "default_snap_radius")]
    pub snap_search_radius: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default = "default_standing_height")]
    pub standing_height: f64,
    #[serde(default = "default_max_reach")]
    pub max_reach: f64,
    /// Released objects keep their hand velocity and fly ballistically.
    #[serde(default)]
    pub ballistic: bool,
    /// Lets pose-only recordings drive the avatar itself.
    #[serde(default)]
    pub allow_pose_self_replay: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            tick_rate: default_tick_rate(),
            arm_length: default_arm_length(),
            grab_radius: default_grab_radius(),
            backward_offset: default_backward_offset(),
            snap_search_radius: default_snap_radius(),
            gravity: default_gravity(),
            standing_height: default_standing_height(),
            max_reach: default_max_reach(),
            ballistic: false,
            allow_pose_self_replay: false,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tick_rate", self.tick_rate),
            ("arm_length", self.arm_length),
            ("grab_radius", self.grab_radius),
            ("backward_offset", self.backward_offset),
            ("snap_search_radius", self.snap_search_radius),
            ("gravity", self.gravity),
            ("standing_height", self.standing_height),
            ("max_reach", self.max_reach),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(EngineError::InvalidInput(format!("config {name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub(crate) objects: BTreeMap<EntityId, WorldObject>,
    pub(crate) clones: BTreeMap<EntityId, CloneEntity>,
    pub(crate) groups: BTreeMap<GroupId, BTreeSet<EntityId>>,
    /// Keyed by the held object.
    pub(crate) attachments: BTreeMap<EntityId, Attachment>,
    pub(crate) avatar: AvatarState,
    pub(crate) tick: u64,
    pub(crate) config: WorldConfig,
    next_entity: u64,
    next_group: u64,
}

impl World {
    pub fn new(config: WorldConfig) -> World {
        Self::with_avatar(config, RigidTransform::IDENTITY, BodyFrame::neutral())
    }

    /// A world whose avatar stands at `root` with root-local `input`.
    pub fn with_avatar(config: WorldConfig, root: RigidTransform, input: BodyFrame) -> World {
        let root = root.yaw_only();
        let mut avatar = AvatarState {
            body_id: EntityId(1),
            root,
            body: input,
            input,
            scale: 1.0,
            home_body: EntityId(1),
            controlled_clone: None,
        };
        avatar.body = avatar.solve_input(&input);
        World {
            objects: BTreeMap::new(),
            clones: BTreeMap::new(),
            groups: BTreeMap::new(),
            attachments: BTreeMap::new(),
            avatar,
            tick: 0,
            config,
            next_entity: 2,
            next_group: 1,
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn avatar(&self) -> &AvatarState {
        &self.avatar
    }

    pub fn objects(&self) -> impl Iterator<Item = &WorldObject> {
        self.objects.values()
    }

    pub fn object(&self, id: EntityId) -> Option<&WorldObject> {
        self.objects.get(&id)
    }

    pub(crate) fn object_mut(&mut self, id: EntityId) -> Result<&mut WorldObject> {
        self.objects.get_mut(&id).ok_or(EngineError::UnknownEntity(id))
    }

    pub fn clones(&self) -> impl Iterator<Item = &CloneEntity> {
        self.clones.values()
    }

    pub fn clone_entity(&self, id: EntityId) -> Option<&CloneEntity> {
        self.clones.get(&id)
    }

    pub(crate) fn clone_mut(&mut self, id: EntityId) -> Result<&mut CloneEntity> {
        if id == self.avatar.body_id {
            return Err(EngineError::NotAClone(id));
        }
        match self.clones.get_mut(&id) {
            Some(c) => Ok(c),
            None if self.objects.contains_key(&id) => Err(EngineError::NotAClone(id)),
            None => Err(EngineError::UnknownEntity(id)),
        }
    }

    pub fn clone_count(&self) -> usize {
        self.clones.len()
    }

    pub fn groups(&self) -> &BTreeMap<GroupId, BTreeSet<EntityId>> {
        &self.groups
    }

    pub fn attachments(&self) -> impl Iterator<Item = &Attachment> {
        self.attachments.values()
    }

    pub fn attachment_of(&self, object: EntityId) -> Option<&Attachment> {
        self.attachments.get(&object)
    }

    /// Object held in `holder`'s `hand`, if any.
    pub fn held_by(&self, holder: EntityId, hand: Hand) -> Option<EntityId> {
        self.attachments
            .values()
            .find(|a| a.holder == holder && a.hand == hand)
            .map(|a| a.object)
    }

    pub(crate) fn alloc_entity(&mut self) -> EntityId {
        let id = EntityId(self.next_entity);
        self.next_entity += 1;
        id
    }

    pub(crate) fn alloc_group(&mut self) -> GroupId {
        let id = GroupId(self.next_group);
        self.next_group += 1;
        id
    }

    pub fn add_object(&mut self, tag: &str, pose: Pose, grabbable: bool) -> Result<EntityId> {
        self.add_object_with_state(tag, pose, grabbable, BTreeMap::new())
    }

    pub fn add_object_with_state(
        &mut self,
        tag: &str,
        pose: Pose,
        grabbable: bool,
        scalar_state: BTreeMap<String, f64>,
    ) -> Result<EntityId> {
        if tag.is_empty() {
            return Err(EngineError::EmptyTag);
        }
        if !pose.is_finite() || scalar_state.values().any(|v| !v.is_finite()) {
            return Err(EngineError::InvalidInput("non-finite object state".into()));
        }
        let id = self.alloc_entity();
        self.objects.insert(
            id,
            WorldObject {
                id,
                tag: tag.to_string(),
                pose: Pose::new(pose.position, pose.orientation.normalized()),
                grabbable,
                scalar_state,
                velocity: Vec3::ZERO,
                falling: false,
            },
        );
        Ok(id)
    }

    /// Ids of objects tagged `tag`, ascending.
    pub fn objects_by_tag(&self, tag: &str) -> Vec<EntityId> {
        self.objects.values().filter(|o| o.tag == tag).map(|o| o.id).collect()
    }

    /// Object nearest to `p` in the ground plane within `radius`; ties go to the lower id.
    pub fn nearest_object(&self, p: Vec3, radius: f64, filter: Option<&str>) -> Option<EntityId> {
        let mut best: Option<(f64, EntityId)> = None;
        for o in self.objects.values() {
            if filter.is_some_and(|t| t != o.tag) {
                continue;
            }
            let d = o.pose.position.horizontal_distance(p);
            if d > radius {
                continue;
            }
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, o.id));
            }
        }
        best.map(|(_, id)| id)
    }

    pub fn object_frame(&self, id: EntityId) -> Result<RigidTransform> {
        self.objects.get(&id).map(WorldObject::frame).ok_or(EngineError::UnknownEntity(id))
    }

    pub fn is_body(&self, id: EntityId) -> bool {
        id == self.avatar.body_id || self.clones.contains_key(&id)
    }

    /// Avatar body id followed by clone ids, ascending.
    pub fn body_ids(&self) -> Vec<EntityId> {
        let mut ids: Vec<EntityId> = self.clones.keys().copied().collect();
        ids.push(self.avatar.body_id);
        ids.sort();
        ids
    }

    pub fn body_frame(&self, id: EntityId) -> Option<&BodyFrame> {
        if id == self.avatar.body_id {
            Some(&self.avatar.body)
        } else {
            self.clones.get(&id).map(|c| &c.body)
        }
    }

    pub fn body_root(&self, id: EntityId) -> Option<RigidTransform> {
        if id == self.avatar.body_id {
            Some(self.avatar.root)
        } else {
            self.clones.get(&id).map(|c| c.root)
        }
    }

    pub fn hand_pose(&self, holder: EntityId, hand: Hand) -> Option<Pose> {
        self.body_frame(holder).map(|b| *b.hand(hand))
    }

    /// Removes a clone with its attachments and group membership.
    pub(crate) fn delete_clone(&mut self, id: EntityId) -> Option<CloneEntity> {
        let clone = self.clones.remove(&id)?;
        self.attachments.retain(|_, a| a.holder != id);
        if let Some(g) = clone.group {
            self.leave_group(id, g);
        }
        Some(clone)
    }

    pub(crate) fn delete_object(&mut self, id: EntityId) -> Option<WorldObject> {
        self.attachments.remove(&id);
        self.objects.remove(&id)
    }

    /// Drops `id` from group `g`, dissolving the group below two members.
    pub(crate) fn leave_group(&mut self, id: EntityId, g: GroupId) {
        let Some(members) = self.groups.get_mut(&g) else { return };
        members.remove(&id);
        if let Some(c) = self.clones.get_mut(&id) {
            c.group = None;
            c.outline_color_index = DEFAULT_OUTLINE;
        }
        if members.len() < 2 {
            let rest = self.groups.remove(&g).unwrap_or_default();
            for m in rest {
                if let Some(c) = self.clones.get_mut(&m) {
                    c.group = None;
                    c.outline_color_index = DEFAULT_OUTLINE;
                }
            }
        }
    }

    /// Referential integrity: groups and attachments name live entities.
    pub fn check_integrity(&self) -> Result<(), String> {
        for (g, members) in &self.groups {
            if members.len() < 2 {
                return Err(format!("group {g} has fewer than two members"));
            }
            for m in members {
                match self.clones.get(m) {
                    Some(c) if c.group == Some(*g) => {}
                    _ => return Err(format!("group {g} lists stale member {m}")),
                }
            }
        }
        for c in self.clones.values() {
            if let Some(g) = c.group {
                if !self.groups.get(&g).is_some_and(|m| m.contains(&c.id)) {
                    return Err(format!("clone {} points at missing group {g}", c.id));
                }
            }
        }
        let mut slots = BTreeSet::new();
        for a in self.attachments.values() {
            if !self.objects.contains_key(&a.object) {
                return Err(format!("attachment for missing object {}", a.object));
            }
            if !self.is_body(a.holder) {
                return Err(format!("attachment held by missing body {}", a.holder));
            }
            if !slots.insert((a.holder, a.hand)) {
                return Err(format!("hand {:?} of {} holds two objects", a.hand, a.holder));
            }
        }
        Ok(())
    }

    pub fn to_document(&self) -> WorldDocument {
        WorldDocument {
            objects: self.objects.values().cloned().collect(),
            clones: self.clones.values().cloned().collect(),
            groups: self
                .groups
                .iter()
                .map(|(id, m)| GroupRecord { id: *id, members: m.iter().copied().collect() })
                .collect(),
            attachments: self.attachments.values().cloned().collect(),
            avatar: self.avatar.clone(),
        }
    }

    pub fn from_document(doc: WorldDocument, config: WorldConfig) -> Result<World> {
        config.validate()?;
        let mut max_id = doc.avatar.body_id.0;
        let mut world = World::new(config);
        world.avatar = doc.avatar;
        for o in doc.objects {
            max_id = max_id.max(o.id.0);
            world.objects.insert(o.id, o);
        }
        for c in doc.clones {
            max_id = max_id.max(c.id.0);
            world.clones.insert(c.id, c);
        }
        let mut max_group = 0;
        for g in doc.groups {
            max_group = max_group.max(g.id.0);
            world.groups.insert(g.id, g.members.into_iter().collect());
        }
        for a in doc.attachments {
            world.attachments.insert(a.object, a);
        }
        world.next_entity = max_id + 1;
        world.next_group = max_group + 1;
        world.check_integrity().map_err(EngineError::InvalidInput)?;
        Ok(world)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("world document serializes")
    }

    pub fn from_json(text: &str, config: WorldConfig) -> Result<World> {
        let doc: WorldDocument =
            serde_json::from_str(text).map_err(|e| EngineError::InvalidInput(e.to_string()))?;
        World::from_document(doc, config)
    }

    pub fn hash(&self) -> WorldHash {
        world_hash(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRecord {
    pub id: GroupId,
    pub members: Vec<EntityId>,
}

/// Canonical world state: everything the hash covers and nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldDocument {
    pub objects: Vec<WorldObject>,
    pub clones: Vec<CloneEntity>,
    pub groups: Vec<GroupRecord>,
    pub attachments: Vec<Attachment>,
    pub avatar: AvatarState,
}

/// SHA-256 of the canonical world serialization.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct WorldHash(pub [u8; 32]);

impl WorldHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for WorldHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for WorldHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WorldHash({})", self.to_hex())
    }
}

/// Number of fractional decimal digits kept when hashing.
pub const HASH_DECIMALS: i32 = 6;

/// Rounds every float in `v` to an integer count of `10^-decimals` units.
pub fn quantize_json(v: &mut serde_json::Value, decimals: i32) {
    use serde_json::Value;
    let scale = 10f64.powi(decimals);
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(0.0);
            let q = (x * scale).round() as i64;
            *v = Value::from(q);
        }
        Value::Array(items) => items.iter_mut().for_each(|i| quantize_json(i, decimals)),
        Value::Object(map) => map.values_mut().for_each(|i| quantize_json(i, decimals)),
        _ => {}
    }
}

/// Canonical quaternion sign: first nonzero of (w, x, y, z) positive.
fn canonical_quat(q: Quat) -> Quat {
    let lead = [q.w, q.x, q.y, q.z].into_iter().find(|c| c.abs() > 1e-12).unwrap_or(1.0);
    if lead < 0.0 {
        Quat { w: -q.w, x: -q.x, y: -q.y, z: -q.z }
    } else {
        q
    }
}

fn canonicalize_quats(v: &mut serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            for (k, item) in map.iter_mut() {
                if (k == "orientation" || k == "rotation") && item.is_array() {
                    if let Ok(q) = serde_json::from_value::<[f64; 4]>(item.clone()) {
                        let q = canonical_quat(Quat { w: q[0], x: q[1], y: q[2], z: q[3] });
                        *item = serde_json::json!([q.w, q.x, q.y, q.z]);
                        continue;
                    }
                }
                canonicalize_quats(item);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(canonicalize_quats),
        _ => {}
    }
}

/// Canonical JSON text hashed by [`world_hash`].
pub fn canonical_json(w: &World) -> String {
    let mut v = serde_json::to_value(w.to_document()).expect("world document serializes");
    canonicalize_quats(&mut v);
    quantize_json(&mut v, HASH_DECIMALS);
    serde_json::to_string(&v).expect("value serializes")
}

/// Digest of objects, clones, groups, attachments and avatar. Excludes the
/// tick counter, undo history and recordings.
pub fn world_hash(w: &World) -> WorldHash {
    let digest = Sha256::digest(canonical_json(w).as_bytes());
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    WorldHash(out)
}
