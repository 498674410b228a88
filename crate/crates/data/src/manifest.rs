//! JSONL sequence manifest: one object per line,
//! `{"id":..,"action":..,"subject":..,"env":..,"payloads":{"video":"path",..}}`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetSpec;
use crate::error::{DataError, Result};
use crate::modality::ModalityKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: u64,
    pub action: usize,
    pub subject: usize,
    pub env: usize,
    /// Payload paths, relative to the manifest directory.
    #[serde(default)]
    pub payloads: BTreeMap<ModalityKind, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Canonical sequence list for `spec`: subjects in order, and within a
    /// subject sequence `k` has action `k mod C`.
    pub fn from_spec(spec: &DatasetSpec) -> Self {
        let c = spec.num_classes();
        let mut entries = Vec::with_capacity(spec.total_sequences());
        let mut id = 0u64;
        for s in &spec.subjects {
            for k in 0..s.sequences {
                entries.push(ManifestEntry {
                    id,
                    action: k % c,
                    subject: s.id,
                    env: s.env,
                    payloads: BTreeMap::new(),
                });
                id += 1;
            }
        }
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&ManifestEntry> {
        match self.entries.binary_search_by_key(&id, |e| e.id) {
            Ok(i) => Some(&self.entries[i]),
            Err(_) => self.entries.iter().find(|e| e.id == id),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries serialise"));
            out.push('\n');
        }
        out
    }

    /// Parses JSONL; blank lines are skipped, ids must be unique.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry = serde_json::from_str(line).map_err(|err| DataError::Line {
                line: i + 1,
                msg: err.to_string(),
            })?;
            if !seen.insert(e.id) {
                return Err(DataError::Line {
                    line: i + 1,
                    msg: format!("duplicate sequence id {}", e.id),
                });
            }
            entries.push(e);
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    /// Checks labels against `spec`.
    pub fn validate(&self, spec: &DatasetSpec) -> Result<()> {
        for e in &self.entries {
            if e.action >= spec.num_classes() {
                return Err(DataError::Manifest(format!(
                    "sequence {}: action {} outside {} categories",
                    e.id,
                    e.action,
                    spec.num_classes()
                )));
            }
            match spec.subject(e.subject) {
                Some(s) if s.env == e.env => {}
                Some(s) => {
                    return Err(DataError::Manifest(format!(
                        "sequence {}: subject {} belongs to environment {}, not {}",
                        e.id, e.subject, s.env, e.env
                    )))
                }
                None => {
                    return Err(DataError::Manifest(format!(
                        "sequence {}: unknown subject {}",
                        e.id, e.subject
                    )))
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset;

    #[test]
    fn jsonl_round_trip() {
        let mut m = Manifest::from_spec(&dataset::desk());
        m.entries[3]
            .payloads
            .insert(ModalityKind::Video, "payloads/3_video.bin".into());
        let text = m.to_jsonl();
        assert!(text
            .lines()
            .nth(3)
            .unwrap()
            .contains("\"video\":\"payloads/3_video.bin\""));
        assert_eq!(Manifest::from_jsonl(&text).unwrap(), m);
    }

    #[test]
    fn per_action_counts_are_uniform() {
        let spec = dataset::desk();
        let m = Manifest::from_spec(&spec);
        m.validate(&spec).unwrap();
        for a in 0..6 {
            assert_eq!(m.entries.iter().filter(|e| e.action == a).count(), 192 / 6);
        }
    }

    #[test]
    fn rejects_duplicates_and_unknown_fields() {
        let line = r#"{"id":1,"action":0,"subject":0,"env":0}"#;
        assert!(Manifest::from_jsonl(&format!("{line}\n{line}\n")).is_err());
        assert!(Manifest::from_jsonl(r#"{"id":1,"action":0,"subject":0,"env":0,"x":1}"#).is_err());
        let err = Manifest::from_jsonl("\n{").unwrap_err().to_string();
        assert!(err.starts_with("line 2"), "{err}");
    }
}
