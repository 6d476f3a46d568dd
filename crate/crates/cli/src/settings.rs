//! Flat dotted-key run configuration: `{"model.kind": "dualq", "train.lr": 1e-3}`.
//!
//! Every command starts from its defaults, applies the keys of an optional
//! JSON file, then command-line overrides. Unknown keys are rejected.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::Failure;

pub type Flat = Map<String, Value>;

pub fn flatten(prefix: &str, value: &Value, out: &mut Flat) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), value.clone());
        }
    }
}

pub fn flat_section<S: Serialize>(prefix: &str, value: &S) -> Flat {
    let mut out = Flat::new();
    flatten(
        prefix,
        &serde_json::to_value(value).expect("config types serialize"),
        &mut out,
    );
    out
}

/// The keys under `prefix.` rebuilt into a nested value and deserialized.
pub fn section<D: DeserializeOwned>(flat: &Flat, prefix: &str) -> Result<D, Failure> {
    let mut root = Map::new();
    let lead = format!("{prefix}.");
    for (key, v) in flat {
        let Some(rest) = key.strip_prefix(&lead) else {
            continue;
        };
        let mut parts: Vec<&str> = rest.split('.').collect();
        let last = parts.pop().unwrap();
        let mut node = &mut root;
        for p in parts {
            node = node
                .entry(p.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .ok_or_else(|| Failure::validation(format!("key `{key}` nests under a scalar")))?;
        }
        node.insert(last.to_string(), v.clone());
    }
    serde_json::from_value(Value::Object(root))
        .map_err(|e| Failure::validation(format!("`{prefix}` settings: {e}")))
}

/// Key/value pairs from a JSON file holding one flat object.
pub fn read_file(path: &Path) -> Result<Flat, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => {
            if let Some((k, _)) = map.iter().find(|(_, v)| v.is_object()) {
                return Err(Failure::validation(format!(
                    "{}: key `{k}` holds an object; use flat dotted keys",
                    path.display()
                )));
            }
            Ok(map)
        }
        Ok(_) => Err(Failure::validation(format!(
            "{}: expected a JSON object",
            path.display()
        ))),
        Err(e) => Err(Failure::validation(format!("{}: {e}", path.display()))),
    }
}

/// Parses `key=value`; the value is JSON when it parses as JSON and a
/// string otherwise.
pub fn parse_assignment(s: &str) -> Result<(String, Value), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Keys given by the user, file first and then overrides.
#[derive(Clone, Debug, Default)]
pub struct Layers {
    pub entries: Vec<(String, Value)>,
}

impl Layers {
    pub fn new(file: Option<&Path>, sets: &[(String, Value)]) -> Result<Self, Failure> {
        let mut entries = Vec::new();
        if let Some(p) = file {
            entries.extend(read_file(p)?);
        }
        entries.extend(sets.iter().cloned());
        Ok(Self { entries })
    }

    pub fn push(&mut self, key: &str, value: Option<Value>) {
        if let Some(v) = value {
            self.entries.push((key.to_string(), v));
        }
    }

    /// The last value given for `key`.
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
    }

    pub fn has(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    /// Overwrites `defaults` in order; every key must already exist.
    pub fn apply(&self, mut defaults: Flat) -> Result<Flat, Failure> {
        for (k, v) in &self.entries {
            match defaults.get_mut(k) {
                Some(slot) => *slot = v.clone(),
                None => {
                    return Err(Failure::validation(format!(
                        "unknown configuration key `{k}`"
                    )));
                }
            }
        }
        Ok(defaults)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Inner {
        a: u32,
        b: Vec<u32>,
    }

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Outer {
        inner: Inner,
        c: Option<f64>,
    }

    #[test]
    fn flatten_round_trip() {
        let v = Outer {
            inner: Inner {
                a: 1,
                b: vec![2, 3],
            },
            c: None,
        };
        let flat = flat_section("x", &v);
        assert_eq!(
            flat.keys().collect::<Vec<_>>(),
            ["x.c", "x.inner.a", "x.inner.b"]
        );
        assert_eq!(section::<Outer>(&flat, "x").unwrap(), v);
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let flat = flat_section("x", &Inner { a: 1, b: vec![] });
        let layers = Layers {
            entries: vec![("x.a".into(), Value::from(7))],
        };
        let out = layers.apply(flat.clone()).unwrap();
        assert_eq!(out["x.a"], 7);
        let bad = Layers {
            entries: vec![("x.z".into(), Value::from(7))],
        };
        assert!(bad.apply(flat).is_err());
    }

    #[test]
    fn assignments() {
        assert_eq!(
            parse_assignment("a.b=3").unwrap(),
            ("a.b".into(), Value::from(3))
        );
        assert_eq!(parse_assignment("k=dualq").unwrap().1, Value::from("dualq"));
        assert!(parse_assignment("novalue").is_err());
    }
}
