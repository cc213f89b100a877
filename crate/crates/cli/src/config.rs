//! JSON config files merged with command-line overrides.
//!
//! A config is a flat JSON object. Command-specific keys (paths, run names)
//! are taken out first; the remainder must deserialize into the library's
//! config struct, which rejects unknown keys.

use std::path::{Path, PathBuf};

use agrimuse::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Default, Clone)]
pub struct ConfigMap(Map<String, Value>);

impl ConfigMap {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(map)) => Ok(ConfigMap(map)),
            Ok(_) => Err(Error::Config(format!("{}: config must be a JSON object", path.display()))),
            Err(e) => Err(Error::Config(format!("{}: {e}", path.display()))),
        }
    }

    /// Flag values win over file values.
    pub fn set(&mut self, key: &str, value: Option<impl Serialize>) {
        if let Some(v) = value {
            self.0.insert(key.to_string(), serde_json::to_value(v).expect("plain value"));
        }
    }

    pub fn take<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>> {
        self.0
            .remove(key)
            .map(|v| serde_json::from_value(v).map_err(|e| Error::Config(format!("key {key:?}: {e}"))))
            .transpose()
    }

    pub fn take_path(&mut self, key: &str) -> Result<Option<PathBuf>> {
        self.take::<PathBuf>(key)
    }

    /// Deserializes what is left; any key the struct does not know is an error.
    pub fn finish<T: DeserializeOwned>(self, what: &str) -> Result<T> {
        serde_json::from_value(Value::Object(self.0)).map_err(|e| Error::Config(format!("{what} config: {e}")))
    }
}

/// `value` serialized as an object with `extra` keys added in front.
pub fn resolved(value: &impl Serialize, extra: &[(&str, Value)]) -> Value {
    let mut out = Map::new();
    for (k, v) in extra {
        out.insert((*k).to_string(), v.clone());
    }
    if let Value::Object(fields) = serde_json::to_value(value).expect("serializable config") {
        out.extend(fields);
    }
    Value::Object(out)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use agrimuse::training::TrainConfig;

    fn from(v: Value) -> ConfigMap {
        match v {
            Value::Object(m) => ConfigMap(m),
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_override_file_values() {
        let mut c = from(serde_json::json!({"lr": 0.1, "batch_size": 8}));
        c.set("lr", Some(0.5));
        c.set("margin", None::<f64>);
        let t: TrainConfig = c.finish("train").unwrap();
        assert_eq!((t.lr, t.batch_size, t.margin), (0.5, 8, 0.2));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let c = from(serde_json::json!({"learning_rate": 0.1}));
        assert!(matches!(c.finish::<TrainConfig>("train"), Err(Error::Config(_))));
    }

    #[test]
    fn taken_keys_do_not_reach_the_struct() {
        let mut c = from(serde_json::json!({"data": "d", "seed": 3}));
        assert_eq!(c.take_path("data").unwrap(), Some(PathBuf::from("d")));
        assert_eq!(c.finish::<TrainConfig>("train").unwrap().seed, 3);
    }
}
