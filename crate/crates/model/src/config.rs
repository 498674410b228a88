//! Model widths, token budgets and per-family backbone sizes.

use std::collections::BTreeMap;

use mmsense_data::ModalityKind;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Universal (encoder-side) width.
    pub d_m: usize,
    /// Decoder width.
    pub d_llm: usize,
    pub heads: usize,
    pub universal_blocks: usize,
    /// Projector block count `L`.
    pub projector_blocks: usize,
    pub decoder_layers: usize,
    /// Longest decoder input, prefix included.
    pub max_len: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    /// Injection-query count per modality.
    pub queries: BTreeMap<ModalityKind, usize>,
    /// Learnable query count of the query-bank baseline.
    pub qformer_queries: usize,
    /// Square patch edge for image-like payloads.
    pub patch: usize,
    /// Voxel cells per horizontal axis for point sets.
    pub voxel: usize,
    /// Half-width of the horizontal voxel extent.
    pub voxel_extent: f64,
    /// Rows per token for temporal traces.
    pub window: usize,
    pub conv_width: usize,
    pub point_width: usize,
    pub temporal_width: usize,
    /// One final projector MLP for every modality, or one per modality.
    pub shared_final_mlp: bool,
    /// Decoder word embeddings are the projector's final MLP applied to the
    /// frozen stub word vectors, plus a learned offset.
    pub tie_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

fn queries(image: usize, lidar: usize, mmwave: usize, wifi: usize, rfid: usize) -> BTreeMap<ModalityKind, usize> {
    use ModalityKind::*;
    BTreeMap::from([
        (Video, image),
        (Depth, image),
        (Infrared, image),
        (Lidar, lidar),
        (MmWave, mmwave),
        (WifiCsi, wifi),
        (Rfid, rfid),
    ])
}

impl ModelConfig {
    /// CPU-trainable widths.
    pub fn desk() -> Self {
        Self {
            d_m: 64,
            d_llm: 128,
            heads: 4,
            universal_blocks: 2,
            projector_blocks: 2,
            decoder_layers: 2,
            max_len: 128,
            grid_h: 4,
            grid_w: 4,
            queries: queries(16, 16, 16, 8, 8),
            qformer_queries: 30,
            patch: 4,
            voxel: 4,
            voxel_extent: 1.5,
            window: 4,
            conv_width: 8,
            point_width: 32,
            temporal_width: 32,
            shared_final_mlp: true,
            tie_embeddings: true,
        }
    }

    /// Published projector shapes. `wifi_queries` is 16 for the MM-Fi layout
    /// and 256 for XRF55.
    pub fn full(wifi_queries: usize) -> Self {
        Self {
            d_m: 1024,
            d_llm: 4096,
            projector_blocks: 8,
            max_len: 512,
            queries: queries(64, 256, 64, wifi_queries, 16),
            patch: 8,
            voxel: 8,
            window: 10,
            ..Self::desk()
        }
    }

    pub fn full_mmfi() -> Self {
        Self::full(16)
    }

    pub fn full_xrf55() -> Self {
        Self::full(256)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" | "full-mmfi" => Ok(Self::full_mmfi()),
            "full-xrf55" => Ok(Self::full_xrf55()),
            other => Err(ModelError::Config(format!("unknown model preset `{other}`"))),
        }
    }

    pub fn grid_cells(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn queries_for(&self, kind: ModalityKind) -> Result<usize> {
        self.queries
            .get(&kind)
            .copied()
            .ok_or_else(|| ModelError::Config(format!("no query count configured for {kind}")))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.heads == 0 || self.d_m % self.heads != 0 || self.d_llm % self.heads != 0 {
            return err(format!(
                "{} heads must divide d_m={} and d_llm={}",
                self.heads, self.d_m, self.d_llm
            ));
        }
        if self.projector_blocks == 0 {
            return err("projector needs at least one block".into());
        }
        if self.decoder_layers == 0 || self.universal_blocks == 0 {
            return err("decoder and universal encoder need at least one block".into());
        }
        if self.grid_cells() == 0 || self.patch == 0 || self.voxel == 0 || self.window == 0 {
            return err("grid, patch, voxel and window sizes must be positive".into());
        }
        if self.queries.values().any(|&q| q == 0) || self.qformer_queries == 0 {
            return err("query counts must be positive".into());
        }
        if self.conv_width == 0 || self.point_width == 0 || self.temporal_width == 0 {
            return err("backbone widths must be positive".into());
        }
        if !(self.voxel_extent > 0.0) {
            return err("voxel extent must be positive".into());
        }
        Ok(())
    }
}
