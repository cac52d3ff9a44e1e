use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use policygraph_core::RunConfig;

use crate::ServiceError;

pub const DEFAULT_PROFILE: &str = "default";

/// Reads every `<name>.json` in `dir` as a [`RunConfig`]. A `default`
/// profile is always present; without a `default.json` it is the built-in
/// stub configuration.
pub fn load_profiles(dir: Option<&Path>) -> Result<BTreeMap<String, RunConfig>, ServiceError> {
    let mut profiles = BTreeMap::new();
    if let Some(dir) = dir {
        let entries = fs::read_dir(dir).map_err(|e| ServiceError::Profile(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| ServiceError::Profile(e.to_string()))?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let Some(name) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text =
                fs::read_to_string(&path).map_err(|e| ServiceError::Profile(format!("{}: {e}", path.display())))?;
            let config: RunConfig =
                serde_json::from_str(&text).map_err(|e| ServiceError::Profile(format!("{}: {e}", path.display())))?;
            config
                .validate()
                .map_err(|e| ServiceError::Profile(format!("{}: {e}", path.display())))?;
            profiles.insert(name.to_string(), config);
        }
    }
    profiles
        .entry(DEFAULT_PROFILE.to_string())
        .or_insert_with(RunConfig::default);
    Ok(profiles)
}
