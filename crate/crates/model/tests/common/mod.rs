#![allow(dead_code)]

use mmsense_data::vocab::RESERVED;
use mmsense_data::{ModalityKind, Payload};
use mmsense_model::{Arm, ModelConfig, Pipeline, PipelineSpec};
use mmsense_tensor::rng::seeded;
use mmsense_tensor::ParamStore;
use rand::Rng;

pub const WORDS: [&str; 8] = ["what", "is", "the", "action", "waving", "jumping", "a", "person"];

pub fn vocab() -> Vec<String> {
    RESERVED.iter().chain(WORDS.iter()).map(|s| s.to_string()).collect()
}

pub fn id(word: &str) -> u32 {
    vocab().iter().position(|w| w == word).unwrap() as u32
}

/// Widths small enough for exhaustive finite differences.
pub fn tiny_cfg() -> ModelConfig {
    let mut cfg = ModelConfig {
        d_m: 16,
        d_llm: 16,
        heads: 2,
        projector_blocks: 2,
        universal_blocks: 1,
        decoder_layers: 2,
        max_len: 32,
        grid_h: 2,
        grid_w: 2,
        qformer_queries: 3,
        window: 2,
        patch: 2,
        voxel: 2,
        conv_width: 2,
        point_width: 4,
        temporal_width: 4,
        ..ModelConfig::desk()
    };
    cfg.queries.insert(ModalityKind::WifiCsi, 2);
    cfg.queries.insert(ModalityKind::MmWave, 4);
    cfg.queries.insert(ModalityKind::Video, 4);
    cfg
}

pub fn shape_for(kind: ModalityKind) -> Vec<usize> {
    match kind {
        ModalityKind::Video => vec![2, 4, 4, 3],
        ModalityKind::MmWave => vec![2, 5, 3],
        _ => vec![8, 6],
    }
}

pub fn spec(kind: ModalityKind, arm: Arm) -> PipelineSpec {
    PipelineSpec {
        cfg: tiny_cfg(),
        kind,
        arm,
        payload_shape: shape_for(kind),
        classes: 3,
        vocab: vocab(),
        seed: 5,
    }
}

pub fn build(kind: ModalityKind, arm: Arm) -> (Pipeline, ParamStore<f64>) {
    let mut store = ParamStore::new();
    let p = Pipeline::new(&mut store, spec(kind, arm)).unwrap();
    (p, store)
}

pub fn payload(kind: ModalityKind, seed: u64) -> Payload {
    let shape = shape_for(kind);
    let n: usize = shape.iter().product();
    let mut rng = seeded(seed);
    Payload::new(shape, (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}
