use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MapData, Scenario, WorldError, WorldMap};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    format_version: u32,
    #[serde(flatten)]
    body: T,
}

fn read(path: &Path) -> Result<String, WorldError> {
    std::fs::read_to_string(path).map_err(|source| WorldError::Io { path: path.display().to_string(), source })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, WorldError> {
    let v: Versioned<T> =
        serde_json::from_str(text).map_err(|e| WorldError::Parse { path: path.display().to_string(), message: e.to_string() })?;
    if v.format_version != FORMAT_VERSION {
        return Err(WorldError::validation(
            "format_version",
            format!("{} declares version {}, expected {FORMAT_VERSION}", path.display(), v.format_version),
        ));
    }
    Ok(v.body)
}

fn write<T: Serialize>(path: &Path, body: &T) -> Result<(), WorldError> {
    let text = serde_json::to_string_pretty(&Versioned { format_version: FORMAT_VERSION, body }).expect("world types serialize");
    std::fs::write(path, text + "\n").map_err(|source| WorldError::Io { path: path.display().to_string(), source })
}

pub fn load_map(path: impl AsRef<Path>) -> Result<WorldMap, WorldError> {
    let path = path.as_ref();
    let data: MapData = parse(path, &read(path)?)?;
    WorldMap::new(data)
}

pub fn save_map(path: impl AsRef<Path>, map: &WorldMap) -> Result<(), WorldError> {
    write(path.as_ref(), map.data())
}

fn map_candidates(scenario_path: &Path, sc: &Scenario) -> Vec<PathBuf> {
    let dir = scenario_path.parent().unwrap_or(Path::new("."));
    match &sc.map_path {
        Some(p) => vec![dir.join(p)],
        None => vec![dir.join("..").join("maps").join(format!("{}.json", sc.map_id)), dir.join("maps").join(format!("{}.json", sc.map_id))],
    }
}

/// Loads a scenario file and the map it references. Without an explicit
/// `map_path`, the map is looked up as `../maps/<map_id>.json` and then
/// `maps/<map_id>.json` relative to the scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<(Scenario, WorldMap), WorldError> {
    let path = path.as_ref();
    let sc: Scenario = parse(path, &read(path)?)?;
    sc.validate()?;
    let candidates = map_candidates(path, &sc);
    let map_file = candidates
        .iter()
        .find(|p| p.exists())
        .ok_or_else(|| WorldError::validation("map_id", format!("map '{}' not found (looked in {:?})", sc.map_id, candidates)))?;
    let map = load_map(map_file)?;
    if map.id() != sc.map_id {
        return Err(WorldError::validation("map_id", format!("scenario wants '{}', file holds '{}'", sc.map_id, map.id())));
    }
    Ok((sc, map))
}

pub fn save_scenario(path: impl AsRef<Path>, sc: &Scenario) -> Result<(), WorldError> {
    write(path.as_ref(), sc)
}
