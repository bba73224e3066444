use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub enum Failure {
    /// Bad invocation: exit code 2.
    Usage(String),
    /// The command ran and failed: exit code 1.
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn unknown_keys(known: &Map<String, Value>, given: &Map<String, Value>, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in given {
        match known.get(k) {
            None => out.push(format!("{prefix}{k}")),
            Some(Value::Object(inner)) => {
                if let Value::Object(g) = v {
                    unknown_keys(inner, g, &format!("{prefix}{k}."), out);
                }
            }
            Some(_) => {}
        }
    }
}

/// Defaults, overlaid by the config file, overlaid by the flags that were
/// given.
pub fn resolve<T, F>(config: Option<&Path>, flags: &F) -> Result<T, Failure>
where
    T: Default + Serialize + DeserializeOwned,
    F: Serialize,
{
    let mut merged = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(path) = config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Domain(anyhow::anyhow!("reading config {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(given) = &file else {
            return Err(Failure::Usage(format!("config {} must be a JSON object", path.display())));
        };
        let mut unknown = Vec::new();
        if let Value::Object(known) = &merged {
            unknown_keys(known, given, "", &mut unknown);
        }
        // keys whose default is null (unset paths) are still known
        unknown.retain(|k| merged.get(k).is_none());
        if !unknown.is_empty() {
            return Err(Failure::Usage(format!(
                "config {} has unknown keys: {}",
                path.display(),
                unknown.join(", ")
            )));
        }
        merge(&mut merged, file);
    }
    merge(&mut merged, serde_json::to_value(flags).expect("flags serialize"));
    serde_json::from_value(merged).map_err(|e| Failure::Usage(format!("invalid settings: {e}")))
}
