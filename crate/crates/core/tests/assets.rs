//! The JSON files under `assets/` must match the bundled builders. Set
//! `LANECRAFT_REGENERATE_ASSETS=1` to rewrite them after changing a builder.

use std::path::PathBuf;

use lanecraft::world::{bundled_maps, bundled_scenarios, curb_bug_fixture, load_map, load_scenario, save_map, save_scenario, Scenario};

fn assets() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets")
}

fn regenerate() -> bool {
    std::env::var_os("LANECRAFT_REGENERATE_ASSETS").is_some()
}

fn all_scenarios() -> Vec<Scenario> {
    let (_, sparse, dense) = curb_bug_fixture();
    let mut out = bundled_scenarios();
    out.push(sparse);
    out.push(dense);
    out
}

#[test]
fn map_files_match_builders() {
    for map in bundled_maps() {
        let path = assets().join("maps").join(format!("{}.json", map.id()));
        if regenerate() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            save_map(&path, &map).unwrap();
        }
        let loaded = load_map(&path).unwrap_or_else(|e| panic!("{e}; regenerate with LANECRAFT_REGENERATE_ASSETS=1"));
        assert!(loaded.data() == map.data(), "{} drifted from its builder", path.display());
    }
}

#[test]
fn scenario_files_match_builders() {
    for sc in all_scenarios() {
        let path = assets().join("scenarios").join(format!("{}.json", sc.name));
        if regenerate() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            save_scenario(&path, &sc).unwrap();
        }
        let (loaded, map) = load_scenario(&path).unwrap_or_else(|e| panic!("{e}; regenerate with LANECRAFT_REGENERATE_ASSETS=1"));
        assert_eq!(loaded, sc, "{} drifted from its builder", path.display());
        assert_eq!(map.id(), sc.map_id);
    }
}

#[test]
fn no_stray_asset_files() {
    let maps: Vec<String> = bundled_maps().iter().map(|m| format!("{}.json", m.id())).collect();
    let scenarios: Vec<String> = all_scenarios().iter().map(|s| format!("{}.json", s.name)).collect();
    for (dir, known) in [("maps", maps), ("scenarios", scenarios)] {
        for entry in std::fs::read_dir(assets().join(dir)).unwrap() {
            let name = entry.unwrap().file_name().to_string_lossy().into_owned();
            assert!(known.contains(&name), "assets/{dir}/{name} has no builder");
        }
    }
}
