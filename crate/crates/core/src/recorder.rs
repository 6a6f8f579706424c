//! Motion recordings: root-relative body frames plus timed grab, release and
//! (extended scope) command events, with periodic sampling.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::command::Command;
use crate::error::{EngineError, Result};
use crate::geometry::interp_pose;
use crate::world::{BodyFrame, EntityId, Hand, Joint, RecordingId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordingScope {
    PosesAndGrabs,
    Extended,
}

/// Entity or group reference inside a recording. `Local(i)` names the i-th
/// body bound during capture: index 0 is the recorder's own body, then each
/// id created by a recorded command, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalRef {
    Local(usize),
    Fixed(u64),
}

pub type RecordedCommand = Command<LocalRef, LocalRef, RecordingId>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RecordedEventKind {
    Grab { hand: Hand },
    Release { hand: Hand },
    Command { command: RecordedCommand },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedEvent {
    /// Seconds since the recording started.
    pub t: f64,
    #[serde(flatten)]
    pub kind: RecordedEventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordedFrame {
    pub t: f64,
    /// Body relative to the recording anchor.
    pub body: BodyFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recording {
    pub id: RecordingId,
    pub scope: RecordingScope,
    pub tick_rate: f64,
    pub duration: f64,
    pub frames: Vec<RecordedFrame>,
    pub events: Vec<RecordedEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSummary {
    pub id: RecordingId,
    pub duration: f64,
    pub scope: RecordingScope,
    pub frames: usize,
    pub events: usize,
}

/// How many times the periodic clock passes event time `e` while advancing
/// from `prev` (exclusive) to `cur` (inclusive).
pub fn crossings(e: f64, prev: f64, cur: f64, duration: f64) -> u64 {
    const EPS: f64 = 1e-9;
    if duration <= 0.0 || cur <= prev {
        return 0;
    }
    let k = |x: f64| ((x - e) / duration + EPS).floor();
    (k(cur) - k(prev)).max(0.0) as u64
}

impl Recording {
    /// Builds a recording from captured frames. Needs at least two frames.
    pub fn new(
        id: RecordingId,
        scope: RecordingScope,
        tick_rate: f64,
        frames: Vec<RecordedFrame>,
        events: Vec<RecordedEvent>,
    ) -> Result<Recording> {
        let r = Recording {
            id,
            scope,
            tick_rate,
            duration: frames.last().map(|f| f.t).unwrap_or(0.0),
            frames,
            events,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.len() < 2 || !(self.duration > 0.0) {
            return Err(EngineError::EmptyRecording);
        }
        if self.frames[0].t != 0.0 {
            return Err(EngineError::InvalidInput("first frame must be at t = 0".into()));
        }
        if self.frames.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(EngineError::InvalidInput("frame times must increase".into()));
        }
        let last = self.frames[self.frames.len() - 1].t;
        if self.duration < last {
            return Err(EngineError::InvalidInput("duration shorter than the last frame".into()));
        }
        if self.frames.iter().any(|f| !f.body.is_finite()) {
            return Err(EngineError::InvalidInput("non-finite frame".into()));
        }
        if self.events.iter().any(|e| !(e.t >= 0.0 && e.t <= self.duration)) {
            return Err(EngineError::InvalidInput("event outside the recording".into()));
        }
        if self.scope == RecordingScope::PosesAndGrabs
            && self.events.iter().any(|e| matches!(e.kind, RecordedEventKind::Command { .. }))
        {
            return Err(EngineError::ScopeViolation);
        }
        Ok(())
    }

    pub fn summary(&self) -> RecordingSummary {
        RecordingSummary {
            id: self.id,
            duration: self.duration,
            scope: self.scope,
            frames: self.frames.len(),
            events: self.events.len(),
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    /// Anchor-relative body at local time `t`, wrapped into `[0, duration)`.
    /// Positions interpolate linearly, orientations by slerp; grab flags hold
    /// the value of the earlier frame.
    pub fn sample(&self, t: f64) -> BodyFrame {
        let tau = t.rem_euclid(self.duration);
        self.sample_clamped(tau)
    }

    /// Like [`Recording::sample`] without wrapping: times past the end hold the last frame.
    pub fn sample_clamped(&self, t: f64) -> BodyFrame {
        let frames = &self.frames;
        let last = frames[frames.len() - 1];
        if t <= 0.0 {
            return frames[0].body;
        }
        if t >= last.t {
            // the closing segment runs from the last frame back to the first
            let span = self.duration - last.t;
            if span <= 0.0 || t >= self.duration {
                return last.body;
            }
            return blend(&last.body, &frames[0].body, (t - last.t) / span);
        }
        let i = frames.partition_point(|f| f.t <= t) - 1;
        let (a, b) = (&frames[i], &frames[i + 1]);
        blend(&a.body, &b.body, (t - a.t) / (b.t - a.t))
    }

    /// Indices of events due while the periodic clock advances from `prev` to
    /// `cur`, each repeated once per pass, in time order.
    pub fn events_between(&self, prev: f64, cur: f64) -> Vec<usize> {
        let mut due: Vec<(f64, usize)> = Vec::new();
        let d = self.duration;
        for (i, e) in self.events.iter().enumerate() {
            let n = crossings(e.t, prev, cur, d);
            for k in 0..n {
                // absolute clock time of this firing, for ordering
                let base = ((prev - e.t) / d + 1e-9).floor() + 1.0 + k as f64;
                due.push((e.t + base * d, i));
            }
        }
        due.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        due.into_iter().map(|(_, i)| i).collect()
    }

    /// JSON with every float rounded to 1e-6.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("recording serializes");
        round_floats(&mut v);
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    pub fn from_json(text: &str) -> Result<Recording> {
        let r: Recording =
            serde_json::from_str(text).map_err(|e| EngineError::InvalidInput(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }
}

fn round_floats(v: &mut serde_json::Value) {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(0.0);
            *v = serde_json::json!((x * 1e6).round() / 1e6);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn blend(a: &BodyFrame, b: &BodyFrame, u: f64) -> BodyFrame {
    let mut out = *a;
    for j in Joint::ALL {
        *out.joint_mut(j) = interp_pose(a.joint(j), b.joint(j), u);
    }
    out
}

/// Finished recordings, shared immutably with replaying clones.
#[derive(Debug, Clone, Default)]
pub struct RecordingStore {
    recordings: BTreeMap<RecordingId, Arc<Recording>>,
    next: u64,
}

impl RecordingStore {
    pub fn new() -> Self {
        RecordingStore { recordings: BTreeMap::new(), next: 1 }
    }

    pub fn alloc(&mut self) -> RecordingId {
        self.next = self.next.max(1);
        let id = RecordingId(self.next);
        self.next += 1;
        id
    }

    /// Stores `r`, keeping its id.
    pub fn insert(&mut self, r: Recording) -> RecordingId {
        let id = r.id;
        self.next = self.next.max(id.0 + 1);
        self.recordings.insert(id, Arc::new(r));
        id
    }

    pub fn get(&self, id: RecordingId) -> Result<&Arc<Recording>> {
        self.recordings.get(&id).ok_or(EngineError::UnknownRecording(id))
    }

    pub fn list(&self) -> Vec<RecordingSummary> {
        self.recordings.values().map(|r| r.summary()).collect()
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }
}

/// Capture in progress.
#[derive(Debug, Clone)]
pub(crate) struct ActiveRecording {
    pub scope: RecordingScope,
    pub anchor: crate::geometry::RigidTransform,
    pub start_tick: u64,
    pub frames: Vec<RecordedFrame>,
    pub events: Vec<RecordedEvent>,
    /// Bodies that `LocalRef::Local` indices resolve to.
    pub bindings: Vec<EntityId>,
    pub groups: Vec<crate::world::GroupId>,
}
