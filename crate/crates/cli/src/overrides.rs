//! Experiment configuration from a JSON file plus `--key=value` flags.

use std::path::Path;

use nodedistill_core::pipeline::ExperimentConfig;
use serde_json::{Map, Value};

/// Splits raw arguments into `(path, value)` overrides and the rest.
///
/// An argument is an override when it has the form `--key=value` and the
/// first dotted segment of `key` names an experiment field other than
/// `seed`, which is a regular flag.
pub fn extract_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let fields = top_level_fields();
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    for arg in args {
        let parsed = arg
            .strip_prefix("--")
            .and_then(|a| a.split_once('='))
            .filter(|(key, _)| {
                let head = key.split('.').next().unwrap_or_default();
                head != "seed" && fields.iter().any(|f| f == head)
            })
            .map(|(k, v)| (k.to_string(), v.to_string()));
        match parsed {
            Some(o) => overrides.push(o),
            None => rest.push(arg),
        }
    }
    (rest, overrides)
}

fn top_level_fields() -> Vec<String> {
    match serde_json::to_value(ExperimentConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Parses a flag value as JSON, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `path` (dot separated; array indices numeric, `*` for every
/// element) to `value` inside `root`, creating objects along the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(format!("malformed key '{path}'"));
    }
    // The dataset is either {"path": ..} or {"sbm": {..}}; naming the other
    // variant switches to it.
    if segments[0] == "dataset" && segments.len() > 1 {
        if let Some(ds) = root.get_mut("dataset") {
            if ds.get(segments[1]).is_none() {
                *ds = Value::Object(Map::new());
            }
        }
    }
    set_in(root, &segments, value, path)
}

fn set_in(node: &mut Value, segments: &[&str], value: Value, full: &str) -> Result<(), String> {
    let (head, tail) = match segments.split_first() {
        Some(x) => x,
        None => {
            *node = value;
            return Ok(());
        }
    };
    if node.is_null() {
        *node = Value::Object(Map::new());
    }
    match node {
        Value::Object(map) => {
            let child = map.entry(head.to_string()).or_insert(Value::Null);
            set_in(child, tail, value, full)
        }
        Value::Array(items) if *head == "*" => {
            for item in items.iter_mut() {
                set_in(item, tail, value.clone(), full)?;
            }
            Ok(())
        }
        Value::Array(items) => {
            let i: usize = head
                .parse()
                .map_err(|_| format!("'{head}' in '{full}' is not an array index"))?;
            let len = items.len();
            let item = items
                .get_mut(i)
                .ok_or_else(|| format!("index {i} in '{full}' is out of range (length {len})"))?;
            set_in(item, tail, value, full)
        }
        _ => Err(format!("'{full}' descends into a scalar at '{head}'")),
    }
}

/// Lays a (possibly partial) configuration file over the defaults, so that
/// later overrides can address fields the file leaves out.
fn merge_file(root: &mut Value, given: Value) -> Result<(), String> {
    let Value::Object(given) = given else {
        return Err("configuration file must hold a JSON object".into());
    };
    let Value::Object(base) = root else {
        return Err("default configuration is not an object".into());
    };
    for (key, value) in given {
        match base.get_mut(&key) {
            // A different dataset variant replaces the default one.
            Some(ds) if key == "dataset" => match (&*ds, &value) {
                (Value::Object(a), Value::Object(b)) if a.keys().eq(b.keys()) => merge(ds, value),
                _ => *ds = value,
            },
            Some(slot) => merge(slot, value),
            None => {
                base.insert(key, value);
            }
        }
    }
    Ok(())
}

fn merge(base: &mut Value, value: Value) {
    match (base, value) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in b {
                match a.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        a.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Loads the configuration file (or the defaults), applies the overrides
/// in order and validates the result.
pub fn load_config(
    file: Option<&Path>,
    overrides: &[(String, String)],
    seed: u64,
) -> Result<ExperimentConfig, String> {
    let mut root = serde_json::to_value(ExperimentConfig::default()).map_err(|e| e.to_string())?;
    if let Some(p) = file {
        let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        let given = serde_json::from_str::<Value>(&text).map_err(|e| format!("{}: {e}", p.display()))?;
        merge_file(&mut root, given)?;
    }
    for (key, raw) in overrides {
        set_path(&mut root, key, parse_value(raw))?;
    }
    let mut cfg: ExperimentConfig =
        serde_json::from_value(root).map_err(|e| format!("invalid configuration: {e}"))?;
    cfg.seed = seed;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nodedistill_core::pipeline::{DatasetSource, Method};

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_are_separated_from_flags() {
        let (rest, ov) = extract_overrides(args(&[
            "nodedistill",
            "distill",
            "--seed=3",
            "--out=x",
            "--distill.alpha=0.5",
            "--method=glnn",
        ]));
        assert_eq!(rest, args(&["nodedistill", "distill", "--seed=3", "--out=x"]));
        assert_eq!(ov.len(), 2);
        assert_eq!(ov[0], ("distill.alpha".into(), "0.5".into()));
    }

    #[test]
    fn nested_wildcard_and_enum_overrides() {
        let ov: Vec<(String, String)> = [
            ("distill.alpha", "0.25"),
            ("method", "ekd_u"),
            ("teachers.*.max_epochs", "7"),
            ("teachers.1.hidden_dim", "16"),
            ("dataset.sbm.feature_dim", "32"),
            ("perturb.lambda", "0.5"),
            ("repeat", "2"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let cfg = load_config(None, &ov, 9).unwrap();
        assert_eq!(cfg.distill.alpha, 0.25);
        assert_eq!(cfg.method, Method::EkdU);
        assert!(cfg.teachers.iter().all(|t| t.max_epochs == 7));
        assert_eq!(cfg.teachers[1].hidden_dim, 16);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.perturb.unwrap().lambda, 0.5);
        match cfg.dataset {
            DatasetSource::Sbm(s) => assert_eq!((s.feature_dim, s.classes), (32, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partial_file_keeps_defaults_for_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"dataset": {"sbm": {"classes": 4}}, "repeat": 2}"#).unwrap();
        let ov = vec![("teachers.*.max_epochs".to_string(), "5".to_string())];
        let cfg = load_config(Some(&file), &ov, 1).unwrap();
        assert_eq!(cfg.repeat, 2);
        assert_eq!(cfg.teachers.len(), 5);
        assert!(cfg.teachers.iter().all(|t| t.max_epochs == 5));
        match cfg.dataset {
            DatasetSource::Sbm(s) => assert_eq!((s.classes, s.feature_dim), (4, 128)),
            other => panic!("{other:?}"),
        }

        std::fs::write(&file, r#"{"dataset": {"path": "data"}}"#).unwrap();
        let cfg = load_config(Some(&file), &[], 1).unwrap();
        assert!(matches!(cfg.dataset, DatasetSource::Path(_)), "{:?}", cfg.dataset);
    }

    #[test]
    fn bad_overrides_are_reported() {
        let one = |k: &str, v: &str| load_config(None, &[(k.to_string(), v.to_string())], 0);
        assert!(one("teachers.99.hidden_dim", "4").unwrap_err().contains("out of range"));
        assert!(one("repeat.x", "1").unwrap_err().contains("scalar"));
        assert!(one("repeat", "0").is_err());
        assert!(one("method", "nope").is_err());
    }
}
