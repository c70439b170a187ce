//! Named parameter sets shipped with the crate.

use serde::Deserialize;

use crate::error::{OperonError, Result};
use crate::model::OperonParameters;

const SOURCES: [(&str, &str); 8] = [
    (
        "repressible_table3",
        include_str!("../fixtures/repressible_table3.json"),
    ),
    (
        "inducible_table3",
        include_str!("../fixtures/inducible_table3.json"),
    ),
    (
        "repressible_n15",
        include_str!("../fixtures/repressible_n15.json"),
    ),
    (
        "repressible_m15n15",
        include_str!("../fixtures/repressible_m15n15.json"),
    ),
    (
        "inducible_table6",
        include_str!("../fixtures/inducible_table6.json"),
    ),
    (
        "inducible_m4",
        include_str!("../fixtures/inducible_m4.json"),
    ),
    (
        "twodelay_rep",
        include_str!("../fixtures/twodelay_rep.json"),
    ),
    (
        "twodelay_ind",
        include_str!("../fixtures/twodelay_ind.json"),
    ),
];

/// A fixture file: a parameter set plus free-text provenance notes.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub name: String,
    pub notes: String,
    pub parameters: OperonParameters,
}

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(name, _)| *name)
}

pub fn fixture(name: &str) -> Result<Fixture> {
    let (_, text) = SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| OperonError::Validation(format!("unknown fixture `{name}`")))?;
    Ok(serde_json::from_str(text)?)
}

/// Parameters of the named fixture.
pub fn load(name: &str) -> Result<OperonParameters> {
    fixture(name).map(|f| f.parameters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Validation;

    #[test]
    fn every_fixture_parses_and_is_strict() {
        for name in names() {
            let fx = fixture(name).unwrap();
            assert_eq!(fx.name, name);
            fx.parameters.validate(Validation::Strict).unwrap();
        }
    }

    #[test]
    fn unknown_fixture() {
        assert!(load("nope").is_err());
    }
}
