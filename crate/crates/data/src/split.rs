//! Benchmark splits: Random (3:1 by count), CrossSub and CrossEnv.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use mmsense_tensor::rng::rng_for;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::DatasetSpec;
use crate::error::{DataError, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Random,
    CrossSub,
    CrossEnv,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::Random, Setting::CrossSub, Setting::CrossEnv];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Random => "random",
            Setting::CrossSub => "cross-sub",
            Setting::CrossEnv => "cross-env",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "random" => Ok(Setting::Random),
            "cross-sub" | "crosssub" => Ok(Setting::CrossSub),
            "cross-env" | "crossenv" => Ok(Setting::CrossEnv),
            other => Err(DataError::Config(format!(
                "unknown setting `{other}` (expected random, cross-sub or cross-env)"
            ))),
        }
    }
}

/// Held-out groups for the cross settings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldOut {
    pub subjects: Vec<usize>,
    pub envs: Vec<usize>,
}

impl HeldOut {
    pub fn from_spec(spec: &DatasetSpec) -> Self {
        Self {
            subjects: spec.held_out_subjects.clone(),
            envs: spec.held_out_envs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub setting: Setting,
    pub seed: u64,
    /// Ascending sequence ids.
    pub train: Vec<u64>,
    /// Ascending sequence ids.
    pub test: Vec<u64>,
}

impl SplitAssignment {
    /// SHA-256 over the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("split serialises");
        hex::encode(Sha256::digest(json))
    }

    /// SHA-256 of the test ids only.
    pub fn test_hash(&self) -> String {
        let mut h = Sha256::new();
        for id in &self.test {
            h.update(id.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Pure function of `(manifest, setting, held_out, seed)`.
///
/// Random keeps `ceil(3N/4)` sequences for training. The cross settings put
/// every sequence of a held-out subject (or environment) in the test set.
pub fn split(manifest: &Manifest, setting: Setting, held_out: &HeldOut, seed: u64) -> Result<SplitAssignment> {
    if manifest.is_empty() {
        return Err(DataError::Split("manifest is empty".into()));
    }
    let mut ids: Vec<u64> = manifest.entries.iter().map(|e| e.id).collect();
    ids.sort_unstable();
    let (mut train, mut test) = match setting {
        Setting::Random => {
            let n = ids.len();
            let n_train = (3 * n).div_ceil(4);
            ids.shuffle(&mut rng_for(seed, "split/random"));
            let test = ids.split_off(n_train);
            (ids, test)
        }
        Setting::CrossSub | Setting::CrossEnv => {
            let (groups, what) = if setting == Setting::CrossSub {
                (&held_out.subjects, "subject")
            } else {
                (&held_out.envs, "environment")
            };
            if groups.is_empty() {
                return Err(DataError::Split(format!("no held-out {what} configured")));
            }
            let groups: BTreeSet<usize> = groups.iter().copied().collect();
            let (test, train): (Vec<_>, Vec<_>) = manifest.entries.iter().partition(|e| {
                let key = if setting == Setting::CrossSub { e.subject } else { e.env };
                groups.contains(&key)
            });
            if test.is_empty() {
                return Err(DataError::Split(format!(
                    "held-out {what} group {groups:?} has no sequences"
                )));
            }
            if train.is_empty() {
                return Err(DataError::Split(format!(
                    "held-out {what} group {groups:?} covers every sequence"
                )));
            }
            (
                train.into_iter().map(|e| e.id).collect(),
                test.into_iter().map(|e| e.id).collect(),
            )
        }
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitAssignment {
        setting,
        seed,
        train,
        test,
    })
}

/// Seeded `fraction` hold-out of `ids` (rounded up, at least one id when
/// `ids.len() > 1`). Returns `(kept, held)`, both ascending.
pub fn holdout(ids: &[u64], fraction: f64, seed: u64, label: &str) -> (Vec<u64>, Vec<u64>) {
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    if ids.len() < 2 || fraction <= 0.0 {
        return (ids, Vec::new());
    }
    let n_held = ((ids.len() as f64 * fraction).ceil() as usize).clamp(1, ids.len() - 1);
    ids.shuffle(&mut rng_for(seed, label));
    let mut held = ids.split_off(ids.len() - n_held);
    ids.sort_unstable();
    held.sort_unstable();
    (ids, held)
}
