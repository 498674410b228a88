use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Sensing modality. Each kind belongs to exactly one [`Family`], which fixes
/// both its tokenizer and its tailored encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityKind {
    Video,
    Depth,
    Infrared,
    Lidar,
    #[serde(rename = "mmwave")]
    MmWave,
    #[serde(rename = "wifi")]
    WifiCsi,
    Rfid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Frame stacks `[T, H, W, C]`.
    Image,
    /// Point sets `[T, P, 3]`.
    PointSet,
    /// Time series `[L, S]`.
    Temporal,
}

impl ModalityKind {
    pub const ALL: [ModalityKind; 7] = [
        ModalityKind::Video,
        ModalityKind::Depth,
        ModalityKind::Infrared,
        ModalityKind::Lidar,
        ModalityKind::MmWave,
        ModalityKind::WifiCsi,
        ModalityKind::Rfid,
    ];

    pub fn family(self) -> Family {
        match self {
            ModalityKind::Video | ModalityKind::Depth | ModalityKind::Infrared => Family::Image,
            ModalityKind::Lidar | ModalityKind::MmWave => Family::PointSet,
            ModalityKind::WifiCsi | ModalityKind::Rfid => Family::Temporal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModalityKind::Video => "video",
            ModalityKind::Depth => "depth",
            ModalityKind::Infrared => "infrared",
            ModalityKind::Lidar => "lidar",
            ModalityKind::MmWave => "mmwave",
            ModalityKind::WifiCsi => "wifi",
            ModalityKind::Rfid => "rfid",
        }
    }

    /// Single-letter column label used in report tables.
    pub fn short(self) -> &'static str {
        match self {
            ModalityKind::Video => "V",
            ModalityKind::Depth => "D",
            ModalityKind::Infrared => "I",
            ModalityKind::Lidar => "L",
            ModalityKind::MmWave => "M",
            ModalityKind::WifiCsi => "W",
            ModalityKind::Rfid => "R",
        }
    }

    /// Image channels per frame; zero for non-image kinds.
    pub fn image_channels(self) -> usize {
        match self {
            ModalityKind::Video => 3,
            ModalityKind::Depth | ModalityKind::Infrared => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for ModalityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModalityKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = match s.trim().to_ascii_lowercase().as_str() {
            "video" | "v" | "rgb" => ModalityKind::Video,
            "depth" | "d" => ModalityKind::Depth,
            "infrared" | "ir" | "i" => ModalityKind::Infrared,
            "lidar" | "l" => ModalityKind::Lidar,
            "mmwave" | "m" | "radar" => ModalityKind::MmWave,
            "wifi" | "wifi-csi" | "csi" | "w" => ModalityKind::WifiCsi,
            "rfid" | "r" => ModalityKind::Rfid,
            other => return Err(DataError::Config(format!("unknown modality `{other}`"))),
        };
        Ok(k)
    }
}
