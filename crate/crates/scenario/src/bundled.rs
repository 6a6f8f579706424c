//! Scenarios shipped with the crate.

use crate::error::ScenarioError;
use crate::schema::{load_scenario, ScenarioScript};

macro_rules! bundle {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../scenarios/", $name, ".json")))),*]
    };
}

/// `(name, document)` for every bundled scenario.
pub const BUNDLED: &[(&str, &str)] = bundle![
    "hammering",
    "mirrored_net_pull",
    "step_stool",
    "fanning_cutting",
    "stir_pot_replay",
    "phase_shift_dance",
    "vertical_bucket_brigade",
    "ball_pass_9m",
    "apple_fetch_relative",
    "teleport_automator",
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn load_bundled(name: &str) -> Result<ScenarioScript, ScenarioError> {
    let (_, doc) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::UnknownScenario(name.into()))?;
    load_scenario(doc)
}
