//! Scenarios shipped with the binary.

use serde::Serialize;

use crate::config::{ConfigError, Scenario};

const SOURCES: &[(&str, &str)] = &[
    (
        "heat_baseline",
        include_str!("../presets/heat_baseline.toml"),
    ),
    ("heat_2d_fine", include_str!("../presets/heat_2d_fine.toml")),
    ("ideal_gas_1d", include_str!("../presets/ideal_gas_1d.toml")),
    ("ideal_gas_2d", include_str!("../presets/ideal_gas_2d.toml")),
    (
        "isentropic_2d",
        include_str!("../presets/isentropic_2d.toml"),
    ),
    (
        "slightly_compressible_interior",
        include_str!("../presets/slightly_compressible_interior.toml"),
    ),
    (
        "slightly_compressible_edge",
        include_str!("../presets/slightly_compressible_edge.toml"),
    ),
    (
        "monte_carlo_1d",
        include_str!("../presets/monte_carlo_1d.toml"),
    ),
];

#[derive(Debug, Clone, Serialize)]
pub struct PresetInfo {
    pub name: String,
    pub case: String,
    pub description: String,
    pub checks: Vec<&'static str>,
}

pub fn names() -> Vec<&'static str> {
    SOURCES.iter().map(|(n, _)| *n).collect()
}

pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Option<Result<Scenario, ConfigError>> {
    source(name).map(Scenario::parse)
}

pub fn list() -> Result<Vec<PresetInfo>, ConfigError> {
    SOURCES
        .iter()
        .map(|(_, text)| {
            let s = Scenario::parse(text)?;
            Ok(PresetInfo {
                checks: s.checks.enabled.iter().map(|c| c.name()).collect(),
                name: s.name,
                case: s.case,
                description: s.description,
            })
        })
        .collect()
}

pub fn list_text(items: &[PresetInfo]) -> String {
    let width = items.iter().map(|p| p.name.len()).max().unwrap_or(0);
    items
        .iter()
        .map(|p| format!("{:width$}  {}\n", p.name, p.case))
        .collect()
}

pub fn list_json(items: &[PresetInfo]) -> String {
    serde_json::to_string_pretty(items).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_under_its_own_name() {
        for (name, text) in SOURCES {
            let s = Scenario::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, *name);
            assert!(!s.case.is_empty());
        }
        assert!(names().len() >= 6);
    }
}
