//! Scripted tracked input: keyframes with carry-forward and linear blending.

use clonemator_core::geometry::interp_pose;
use clonemator_core::BodyFrame;

use crate::error::ScenarioError;
use crate::schema::ScenarioScript;

/// Full root-local frames keyed by tick, ascending. The first entry is the
/// scenario's initial input at tick 0.
#[derive(Debug, Clone)]
pub struct InputTrack {
    keys: Vec<(u64, BodyFrame)>,
}

impl InputTrack {
    pub fn build(s: &ScenarioScript) -> Result<InputTrack, ScenarioError> {
        let mut partial = Vec::new();
        for step in &s.timeline {
            if let Some(spec) = step.input {
                partial.extend(step.ticks().map(|t| (t, spec)));
            }
        }
        // stable: same-tick keyframes keep document order
        partial.sort_by_key(|(t, _)| *t);
        let mut keys = vec![(0, s.initial_input())];
        for (t, spec) in partial {
            let prev = keys.last().expect("seeded").1;
            keys.push((t, spec.apply_to(&prev)));
        }
        Ok(InputTrack { keys })
    }

    pub fn keyframes(&self) -> &[(u64, BodyFrame)] {
        &self.keys
    }

    pub fn check_reach(&self, max_reach: f64) -> Result<(), ScenarioError> {
        for (t, f) in &self.keys {
            f.validate_input(max_reach)
                .map_err(|e| ScenarioError::Validation(format!("input at tick {t}: {e}")))?;
        }
        Ok(())
    }

    /// Frame the avatar reaches at `tick`. Grab flags switch exactly at
    /// keyframes; poses blend toward the next keyframe.
    pub fn frame_at(&self, tick: u64) -> BodyFrame {
        let i = self.keys.partition_point(|(t, _)| *t <= tick);
        let (ta, a) = self.keys[i.saturating_sub(1)];
        let Some(&(tb, b)) = self.keys.get(i) else { return a };
        let u = (tick - ta) as f64 / (tb - ta) as f64;
        let mut f = BodyFrame {
            head: interp_pose(&a.head, &b.head, u),
            left_hand: interp_pose(&a.left_hand, &b.left_hand, u),
            right_hand: interp_pose(&a.right_hand, &b.right_hand, u),
            ..a
        };
        f.left_grab = a.left_grab;
        f.right_grab = a.right_grab;
        f
    }
}
