//! Dataset descriptions and the built-in presets.
//!
//! Presets pin per-subject sequence counts and default held-out groups so
//! that every benchmark split reproduces the published train/test sizes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::modality::{Family, ModalityKind};

/// Category names. The first entries are single words so small presets get
/// single-token answers.
pub const ACTION_NAMES: [&str; 55] = [
    "squatting",
    "waving",
    "jumping",
    "bowing",
    "kicking",
    "stretching",
    "clapping",
    "punching",
    "walking",
    "sitting",
    "standing up",
    "lying down",
    "falling",
    "picking up",
    "throwing",
    "pushing",
    "pulling",
    "turning around",
    "raising left arm",
    "raising right arm",
    "lunging left",
    "lunging right",
    "stepping forward",
    "stepping back",
    "rotating chest",
    "limb extension",
    "tapping foot",
    "shaking head",
    "nodding",
    "drinking",
    "eating",
    "phoning",
    "typing",
    "writing",
    "reading",
    "brushing hair",
    "wiping face",
    "scratching head",
    "stamping feet",
    "marching",
    "running in place",
    "hopping",
    "skipping rope",
    "boxing",
    "swinging arms",
    "hugging",
    "pointing",
    "beckoning",
    "saluting",
    "shrugging",
    "crouching",
    "crawling",
    "kneeling",
    "cheering",
    "fanning",
];

/// Payload extents per modality, scaled by the dataset's frame count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Square image side for image-like kinds.
    pub image_size: usize,
    pub lidar_points: usize,
    pub mmwave_points: usize,
    /// Temporal samples per frame for CSI and RFID traces.
    pub temporal_rate: usize,
    pub wifi_subcarriers: usize,
    pub rfid_tags: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            image_size: 16,
            lidar_points: 64,
            mmwave_points: 24,
            temporal_rate: 10,
            wifi_subcarriers: 30,
            rfid_tags: 12,
        }
    }
}

impl Geometry {
    pub fn payload_shape(&self, kind: ModalityKind, frames: usize) -> Vec<usize> {
        match kind.family() {
            Family::Image => vec![frames, self.image_size, self.image_size, kind.image_channels()],
            Family::PointSet => {
                let p = if kind == ModalityKind::Lidar {
                    self.lidar_points
                } else {
                    self.mmwave_points
                };
                vec![frames, p, 3]
            }
            Family::Temporal => {
                let s = if kind == ModalityKind::WifiCsi {
                    self.wifi_subcarriers
                } else {
                    self.rfid_tags
                };
                vec![frames * self.temporal_rate, s]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub id: usize,
    pub env: usize,
    pub sequences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub categories: Vec<String>,
    pub subjects: Vec<SubjectSpec>,
    pub environments: usize,
    pub frames: usize,
    pub modalities: Vec<ModalityKind>,
    /// Default CrossSub test subjects.
    pub held_out_subjects: Vec<usize>,
    /// Default CrossEnv test environments.
    pub held_out_envs: Vec<usize>,
    #[serde(default)]
    pub geometry: Geometry,
}

impl DatasetSpec {
    pub fn num_classes(&self) -> usize {
        self.categories.len()
    }

    pub fn total_sequences(&self) -> usize {
        self.subjects.iter().map(|s| s.sequences).sum()
    }

    pub fn subject(&self, id: usize) -> Option<&SubjectSpec> {
        self.subjects.iter().find(|s| s.id == id)
    }

    pub fn payload_shape(&self, kind: ModalityKind) -> Vec<usize> {
        self.geometry.payload_shape(kind, self.frames)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(DataError::Config(format!("dataset `{}`: {m}", self.name)));
        if self.categories.len() < 2 {
            return err("needs at least 2 categories".into());
        }
        let cats: BTreeSet<&str> = self.categories.iter().map(String::as_str).collect();
        if cats.len() != self.categories.len() || cats.contains("") {
            return err("category names must be unique and non-empty".into());
        }
        if self.frames == 0 {
            return err("frames must be at least 1".into());
        }
        if self.environments == 0 || self.subjects.is_empty() {
            return err("needs at least one subject and one environment".into());
        }
        if self.modalities.is_empty() {
            return err("modality list is empty".into());
        }
        let mut ids = BTreeSet::new();
        for s in &self.subjects {
            if !ids.insert(s.id) {
                return err(format!("duplicate subject {}", s.id));
            }
            if s.env >= self.environments {
                return err(format!(
                    "subject {} in environment {} of {}",
                    s.id, s.env, self.environments
                ));
            }
        }
        if let Some(s) = self.held_out_subjects.iter().find(|s| !ids.contains(s)) {
            return err(format!("held-out subject {s} does not exist"));
        }
        if let Some(e) = self.held_out_envs.iter().find(|&&e| e >= self.environments) {
            return err(format!("held-out environment {e} does not exist"));
        }
        let g = &self.geometry;
        if g.image_size == 0 || g.temporal_rate == 0 || g.wifi_subcarriers == 0 || g.rfid_tags == 0 {
            return err("geometry extents must be positive".into());
        }
        Ok(())
    }

    /// Looks up a built-in preset.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "mmfi" | "mmfi-like" => Ok(mmfi()),
            "xrf55" | "xrf55-like" => Ok(xrf55()),
            "desk" => Ok(desk()),
            other => Err(DataError::Config(format!(
                "unknown preset `{other}` (expected mmfi-like, xrf55-like or desk)"
            ))),
        }
    }
}

fn categories(n: usize) -> Vec<String> {
    ACTION_NAMES[..n].iter().map(|s| s.to_string()).collect()
}

/// 40 subjects over 4 environments, 27 categories, 16,448 sequences.
///
/// Subjects 7-9 of each environment form the CrossSub test group and
/// environment 3 is the CrossEnv test group.
pub fn mmfi() -> DatasetSpec {
    let mut subjects = Vec::with_capacity(40);
    let mut big = 0;
    for id in 0..40 {
        let env = id / 10;
        let slot = id % 10;
        let held = slot >= 7;
        let sequences = match (env, held) {
            (3, true) => 388,
            (3, false) => {
                if slot < 3 {
                    389
                } else {
                    388
                }
            }
            (_, true) => 403,
            (_, false) => {
                big += 1;
                if big <= 13 {
                    426
                } else {
                    425
                }
            }
        };
        subjects.push(SubjectSpec { id, env, sequences });
    }
    DatasetSpec {
        name: "mmfi-like".into(),
        categories: categories(27),
        subjects,
        environments: 4,
        frames: 5,
        modalities: vec![
            ModalityKind::Video,
            ModalityKind::Depth,
            ModalityKind::MmWave,
            ModalityKind::Lidar,
            ModalityKind::WifiCsi,
        ],
        held_out_subjects: (0..40).filter(|i| i % 10 >= 7).collect(),
        held_out_envs: vec![3],
        geometry: Geometry::default(),
    }
}

/// 19 subjects over 4 environments, 55 categories, 19,800 sequences.
///
/// Environments 0-2 hold five subjects with 1,100 sequences each;
/// environment 3 holds four subjects with 825 each.
pub fn xrf55() -> DatasetSpec {
    let subjects = (0..19)
        .map(|id| {
            let (env, sequences) = if id < 15 { (id / 5, 1100) } else { (3, 825) };
            SubjectSpec { id, env, sequences }
        })
        .collect();
    DatasetSpec {
        name: "xrf55-like".into(),
        categories: categories(55),
        subjects,
        environments: 4,
        frames: 10,
        modalities: vec![
            ModalityKind::Video,
            ModalityKind::Depth,
            ModalityKind::Infrared,
            ModalityKind::Rfid,
            ModalityKind::WifiCsi,
        ],
        held_out_subjects: vec![3, 4, 8, 9, 14],
        held_out_envs: vec![3],
        geometry: Geometry::default(),
    }
}

/// Small balanced preset: 6 categories, 8 subjects (2 per environment),
/// 4 repetitions per category, 192 sequences.
pub fn desk() -> DatasetSpec {
    DatasetSpec {
        name: "desk".into(),
        categories: categories(6),
        subjects: (0..8)
            .map(|id| SubjectSpec {
                id,
                env: id / 2,
                sequences: 24,
            })
            .collect(),
        environments: 4,
        frames: 4,
        modalities: vec![ModalityKind::Video, ModalityKind::MmWave, ModalityKind::WifiCsi],
        held_out_subjects: vec![1, 6],
        held_out_envs: vec![3],
        geometry: Geometry::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_totals() {
        let m = mmfi();
        m.validate().unwrap();
        assert_eq!(
            (m.num_classes(), m.subjects.len(), m.environments, m.frames),
            (27, 40, 4, 5)
        );
        assert_eq!(m.total_sequences(), 16_448);
        let x = xrf55();
        x.validate().unwrap();
        assert_eq!(
            (x.num_classes(), x.subjects.len(), x.environments, x.frames),
            (55, 19, 4, 10)
        );
        assert_eq!(x.total_sequences(), 19_800);
        let d = desk();
        d.validate().unwrap();
        assert_eq!(d.total_sequences(), 192);
    }

    #[test]
    fn names_unique() {
        let set: BTreeSet<_> = ACTION_NAMES.iter().collect();
        assert_eq!(set.len(), ACTION_NAMES.len());
    }

    #[test]
    fn validation_catches_bad_groups() {
        let mut d = desk();
        d.held_out_envs = vec![9];
        assert!(d.validate().is_err());
        let mut d = desk();
        d.subjects[1].id = 0;
        assert!(d.validate().is_err());
        assert!(DatasetSpec::preset("nope").is_err());
    }

    #[test]
    fn payload_shapes() {
        let d = desk();
        assert_eq!(d.payload_shape(ModalityKind::Video), vec![4, 16, 16, 3]);
        assert_eq!(d.payload_shape(ModalityKind::MmWave), vec![4, 24, 3]);
        assert_eq!(d.payload_shape(ModalityKind::WifiCsi), vec![40, 30]);
    }
}
