//! The bundled walkers.

use crate::morphology::{RobotSpec, SpecError};

pub const NAMES: [&str; 7] = ["daisy3", "daisy4", "daisy6", "dog", "florence", "flori", "floriarms"];

fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "daisy3" => include_str!("../robots/daisy3.toml"),
        "daisy4" => include_str!("../robots/daisy4.toml"),
        "daisy6" => include_str!("../robots/daisy6.toml"),
        "dog" => include_str!("../robots/dog.toml"),
        "florence" => include_str!("../robots/florence.toml"),
        "flori" => include_str!("../robots/flori.toml"),
        "floriarms" => include_str!("../robots/floriarms.toml"),
        _ => return None,
    })
}

/// Bundled robot by name.
pub fn zoo(name: &str) -> Result<RobotSpec, SpecError> {
    let text = source(name).ok_or_else(|| SpecError::UnknownRobot(name.to_string()))?;
    RobotSpec::from_toml_str(text)
}

/// A bundled robot name, or otherwise a path to a robot file.
pub fn resolve(name_or_path: &str) -> Result<RobotSpec, SpecError> {
    if source(name_or_path).is_some() {
        zoo(name_or_path)
    } else if std::path::Path::new(name_or_path).exists() {
        RobotSpec::load(name_or_path)
    } else {
        Err(SpecError::UnknownRobot(name_or_path.to_string()))
    }
}
