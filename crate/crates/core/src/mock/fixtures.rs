//! Fixture directory layout, one entry per endpoint id:
//!
//! * `<id>.json` holding `{"document": ...}`, `{"keyed": {key: doc}}` or
//!   `{"items": [...]}`
//! * `<id>.bin`, a single binary body
//! * `<id>/<key>`, binary bodies selected by the endpoint's key parameter

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cloud::{EndpointConfig, ResponseClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    Document(Value),
    Keyed(BTreeMap<String, Value>),
    /// Served page by page, filtered by the endpoint's window.
    Items(Vec<Value>),
    #[serde(skip)]
    Binary(Vec<u8>),
    #[serde(skip)]
    KeyedBinary(BTreeMap<String, Vec<u8>>),
}

impl Fixture {
    fn is_binary(&self) -> bool {
        matches!(self, Fixture::Binary(_) | Fixture::KeyedBinary(_))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureSet {
    pub fixtures: BTreeMap<String, Fixture>,
}

impl FixtureSet {
    pub fn insert(&mut self, id: &str, f: Fixture) {
        self.fixtures.insert(id.to_string(), f);
    }

    pub fn get(&self, id: &str) -> Option<&Fixture> {
        self.fixtures.get(id)
    }

    pub fn load(dir: &Path) -> io::Result<Self> {
        let mut set = FixtureSet::default();
        let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let path = e.path();
            let name = e.file_name().to_string_lossy().into_owned();
            if path.is_dir() {
                let mut keyed = BTreeMap::new();
                for f in fs::read_dir(&path)? {
                    let f = f?;
                    if f.path().is_file() {
                        keyed.insert(f.file_name().to_string_lossy().into_owned(), fs::read(f.path())?);
                    }
                }
                set.insert(&name, Fixture::KeyedBinary(keyed));
            } else if let Some(id) = name.strip_suffix(".json") {
                let f: Fixture = serde_json::from_slice(&fs::read(&path)?)
                    .map_err(|err| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {err}", path.display())))?;
                set.insert(id, f);
            } else if let Some(id) = name.strip_suffix(".bin") {
                set.insert(id, Fixture::Binary(fs::read(&path)?));
            }
        }
        Ok(set)
    }

    pub fn save(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (id, f) in &self.fixtures {
            match f {
                Fixture::Binary(b) => fs::write(dir.join(format!("{id}.bin")), b)?,
                Fixture::KeyedBinary(m) => {
                    let sub = dir.join(id);
                    fs::create_dir_all(&sub)?;
                    for (k, b) in m {
                        fs::write(sub.join(k), b)?;
                    }
                }
                other => fs::write(dir.join(format!("{id}.json")), serde_json::to_vec_pretty(other)?)?,
            }
        }
        Ok(())
    }

    /// Endpoint ids with no fixture of a compatible kind.
    pub fn missing(&self, config: &EndpointConfig) -> Vec<String> {
        config
            .endpoints
            .iter()
            .filter(|e| match self.get(&e.id) {
                None => true,
                Some(f) => f.is_binary() != (e.response == ResponseClass::Binary),
            })
            .map(|e| e.id.clone())
            .collect()
    }
}
