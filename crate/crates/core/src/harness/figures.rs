// SPDX-License-Identifier: Apache-2.0

//! Bundled scenarios, one or more per reproduced figure. The JSON files live
//! in `crates/core/scenarios/` and can also be run directly.

use super::HarnessError;
use crate::scenario::Scenario;

pub const FIGURES: &[&str] = &["fig7", "fig8", "fig9", "fig10a", "fig10b", "fig12", "fig13"];

macro_rules! bundled {
    ($($fig:literal => $file:literal),* $(,)?) => {
        &[$(($fig, $file, include_str!(concat!("../../scenarios/", $file, ".json")))),*]
    };
}

const BUNDLED: &[(&str, &str, &str)] = bundled! {
    "fig7" => "fig7a",
    "fig7" => "fig7b",
    "fig8" => "fig8a",
    "fig8" => "fig8b",
    "fig9" => "fig9a",
    "fig9" => "fig9b",
    "fig10a" => "fig10a",
    "fig10b" => "fig10b",
    "fig12" => "fig12",
    "fig13" => "fig13-intra",
    "fig13" => "fig13-intra-nocounter",
    "fig13" => "fig13-shared",
};

/// Parses the bundled scenarios of `figure`.
pub fn scenarios(figure: &str) -> Result<Vec<Scenario>, HarnessError> {
    if !FIGURES.contains(&figure) {
        return Err(HarnessError::UnknownFigure(figure.to_string()));
    }
    BUNDLED
        .iter()
        .filter(|(fig, _, _)| *fig == figure)
        .map(|(_, file, text)| Ok(Scenario::from_json(text, &format!("{file}.json"), &[])?))
        .collect()
}

/// Every bundled scenario with its figure id.
pub fn all() -> Vec<(&'static str, Scenario)> {
    BUNDLED
        .iter()
        .map(|(fig, file, text)| {
            let s = Scenario::from_json(text, &format!("{file}.json"), &[]).expect("bundled scenario parses");
            (*fig, s)
        })
        .collect()
}
