//! Config documents: JSON loading with environment overrides, plus the
//! run lock that records what a run directory was trained with.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::train::TrainConfig;

/// Environment prefix for config overrides. `SPICORR_LEARNING_RATE=1e-3`
/// sets `learning_rate`; `__` descends into nested objects, so
/// `SPICORR_TEACHER_ARCH__LATENT_DIM=8` sets `teacher_arch.latent_dim`.
pub const ENV_PREFIX: &str = "SPICORR_";

pub const LOCK_FILE: &str = "config.lock";

/// Applies prefixed environment overrides to a JSON document. Values are
/// parsed as JSON where possible and fall back to plain strings. Returns
/// the dotted paths that were set, in the (sorted) application order.
pub fn apply_env_overrides<I>(doc: &mut Value, vars: I) -> Result<Vec<String>>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut pairs: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_lowercase(), v)))
        .collect();
    pairs.sort();

    let mut applied = Vec::with_capacity(pairs.len());
    for (key, raw) in pairs {
        let segments: Vec<&str> = key.split("__").collect();
        if segments.iter().any(|s| s.is_empty()) {
            return Err(Error::Config(format!(
                "malformed override key {ENV_PREFIX}{}",
                key.to_uppercase()
            )));
        }
        let (last, parents) = segments.split_last().expect("key has at least one segment");
        let mut node = &mut *doc;
        for (i, seg) in parents.iter().enumerate() {
            node = descend(node, seg).ok_or_else(|| {
                Error::Config(format!(
                    "override '{key}' descends into non-object '{}'",
                    segments[..i].join(".")
                ))
            })?;
        }
        match node {
            Value::Object(map) => {
                let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw.clone()));
                map.insert(last.to_string(), value);
            }
            _ => {
                return Err(Error::Config(format!(
                    "override '{key}' descends into non-object '{}'",
                    parents.join(".")
                )))
            }
        }
        applied.push(segments.join("."));
    }
    Ok(applied)
}

/// One step into a nested object, creating the child when absent. The
/// function boundary moves the reference, keeping the borrow chain legal
/// across loop iterations.
fn descend<'a>(node: &'a mut Value, seg: &str) -> Option<&'a mut Value> {
    match node {
        Value::Object(map) => Some(
            map.entry(seg.to_string())
                .or_insert_with(|| Value::Object(Default::default())),
        ),
        _ => None,
    }
}

/// Loads a config of type `T`: the file at `path` if given, otherwise
/// `T::default()`, then environment overrides on top.
pub fn load<T>(path: Option<&Path>) -> Result<T>
where
    T: DeserializeOwned + Serialize + Default,
{
    load_with(path, std::env::vars())
}

pub fn load_with<T, I>(path: Option<&Path>, vars: I) -> Result<T>
where
    T: DeserializeOwned + Serialize + Default,
    I: IntoIterator<Item = (String, String)>,
{
    let (mut doc, source) = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            let doc: Value = serde_json::from_str(&text)
                .map_err(|e| Error::format(p.display().to_string(), e.to_string()))?;
            (doc, p.display().to_string())
        }
        None => (serde_json::to_value(T::default())?, "defaults".to_string()),
    };
    let applied = apply_env_overrides(&mut doc, vars)?;
    if !applied.is_empty() {
        eprintln!("config overrides from environment: {}", applied.join(", "));
    }
    serde_json::from_value(doc).map_err(|e| Error::Config(format!("{source}: {e}")))
}

/// What a run directory was trained with; written as `config.lock`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunLock {
    /// Dataset directory, absolute.
    pub dataset: PathBuf,
    pub train: TrainConfig,
}

pub fn write_lock(run_dir: &Path, lock: &RunLock) -> Result<()> {
    fs::create_dir_all(run_dir)?;
    fs::write(run_dir.join(LOCK_FILE), serde_json::to_string_pretty(lock)?)?;
    Ok(())
}

pub fn read_lock(run_dir: &Path) -> Result<RunLock> {
    let path = run_dir.join(LOCK_FILE);
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Config(format!("{}: {e} (is this a run directory?)", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Refuses to proceed when any declared output already exists, unless
/// `overwrite` is set.
pub fn guard_outputs(paths: &[PathBuf], overwrite: bool) -> Result<()> {
    if overwrite {
        return Ok(());
    }
    let existing: Vec<String> = paths
        .iter()
        .filter(|p| p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if existing.is_empty() {
        Ok(())
    } else {
        Err(Error::WouldClobber(format!(
            "{} (pass --overwrite to replace)",
            existing.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn vars(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn env_overrides_set_scalars_nested_keys_and_arrays() {
        let mut doc = json!({"learning_rate": 1e-5, "teacher_arch": {"latent_dim": 256}});
        let applied = apply_env_overrides(
            &mut doc,
            vars(&[
                ("SPICORR_LEARNING_RATE", "0.001"),
                ("SPICORR_TEACHER_ARCH__LATENT_DIM", "8"),
                ("SPICORR_TEACHER_ARCH__EDGECONV_DIMS", "[8,8]"),
                ("SPICORR_NOTE", "plain text"),
                ("UNRELATED", "ignored"),
            ]),
        )
        .unwrap();
        assert_eq!(
            applied,
            vec!["learning_rate", "note", "teacher_arch.edgeconv_dims", "teacher_arch.latent_dim"]
        );
        assert_eq!(doc["learning_rate"], json!(0.001));
        assert_eq!(doc["teacher_arch"]["latent_dim"], json!(8));
        assert_eq!(doc["teacher_arch"]["edgeconv_dims"], json!([8, 8]));
        assert_eq!(doc["note"], json!("plain text"));
        assert!(doc.get("unrelated").is_none());
    }

    #[test]
    fn env_override_into_scalar_is_rejected() {
        let mut doc = json!({"seed": 1});
        let err = apply_env_overrides(&mut doc, vars(&[("SPICORR_SEED__X", "2")]));
        assert!(err.is_err());

        let mut doc = json!({"a": {}});
        assert!(apply_env_overrides(&mut doc, vars(&[("SPICORR_A__", "2")])).is_err());
    }

    #[test]
    fn load_applies_file_then_env_and_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.json");
        std::fs::write(&path, r#"{"learning_rate": 0.01, "L": 16}"#).unwrap();

        let cfg: TrainConfig =
            load_with(Some(&path), vars(&[("SPICORR_LEARNING_RATE", "0.5")])).unwrap();
        assert_eq!(cfg.learning_rate, 0.5);
        assert_eq!(cfg.l, 16);

        std::fs::write(&path, r#"{"learning_rat": 0.01}"#).unwrap();
        let err = load_with::<TrainConfig, _>(Some(&path), vars(&[])).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");

        let cfg: TrainConfig = load_with(None, vars(&[("SPICORR_SEED", "9")])).unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn lock_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let lock = RunLock {
            dataset: dir.path().join("data"),
            train: TrainConfig::default(),
        };
        write_lock(dir.path(), &lock).unwrap();
        assert_eq!(read_lock(dir.path()).unwrap(), lock);
        assert!(read_lock(&dir.path().join("nope")).is_err());
    }

    #[test]
    fn guard_refuses_existing_outputs_without_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let exists = dir.path().join("report.json");
        std::fs::write(&exists, "{}").unwrap();
        let fresh = dir.path().join("new.json");

        assert!(guard_outputs(&[fresh.clone()], false).is_ok());
        let err = guard_outputs(&[exists.clone(), fresh.clone()], false).unwrap_err();
        assert!(matches!(err, Error::WouldClobber(_)));
        assert!(guard_outputs(&[exists, fresh], true).is_ok());
    }
}
