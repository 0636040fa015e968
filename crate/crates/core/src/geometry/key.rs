use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse entity key `{text}`: {reason}")]
pub struct KeyParseError {
    pub text: String,
    pub reason: &'static str,
}

/// `database_type_name_id`. The name may contain spaces and underscores; the
/// other three segments may not contain underscores.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityKey {
    pub database: String,
    pub type_name: String,
    pub name: String,
    pub id: String,
}

impl EntityKey {
    pub fn new(
        database: impl Into<String>,
        type_name: impl Into<String>,
        name: impl Into<String>,
        id: impl Into<String>,
    ) -> Result<Self, KeyParseError> {
        let key = Self {
            database: database.into(),
            type_name: type_name.into(),
            name: name.into(),
            id: id.into(),
        };
        for (field, what) in [
            (&key.database, "database"),
            (&key.type_name, "type name"),
            (&key.id, "id"),
        ] {
            if field.is_empty() || field.contains('_') {
                return Err(KeyParseError {
                    text: key.to_string(),
                    reason: match what {
                        "database" => "database must be non-empty without underscores",
                        "type name" => "type name must be non-empty without underscores",
                        _ => "id must be non-empty without underscores",
                    },
                });
            }
        }
        Ok(key)
    }

    /// Layer grouping label, `database/type`.
    pub fn layer(&self) -> String {
        format!("{}/{}", self.database, self.type_name)
    }
}

impl fmt::Display for EntityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}_{}", self.database, self.type_name, self.name, self.id)
    }
}

impl FromStr for EntityKey {
    type Err = KeyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let segments: Vec<&str> = s.split('_').collect();
        if segments.len() < 3 {
            return Err(KeyParseError {
                text: s.to_string(),
                reason: "fewer than three `_`-separated segments",
            });
        }
        let id = segments[segments.len() - 1];
        let name = segments[2..segments.len() - 1].join("_");
        EntityKey::new(segments[0], segments[1], name, id).map_err(|e| KeyParseError {
            text: s.to_string(),
            reason: e.reason,
        })
    }
}

impl Serialize for EntityKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntityKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
