#![allow(dead_code)]

pub mod oracles;
pub mod pipeline;

use gatedap::data::{generate_dataset, ClipSample, SceneSpec};
use gatedap::encoder::EncoderConfig;
use gatedap::gating::GateConfig;
use gatedap::model::{InfoType, ModelConfig};

/// 16×16 frames, 4×4 token grid, two input frames.
pub fn small_model() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            image_size: 16,
            patch_size: 4,
            in_channels: 3,
            embed_dim: 8,
            depth: 1,
            num_heads: 2,
            mlp_ratio: 2.0,
        },
        gate: GateConfig::all_open(),
        clip_len: 2,
        info_types: InfoType::ALL.to_vec(),
        gru_hidden: 32,
        gru_input: 8,
        decoder_width: 4,
        spag_kernel: 3,
        share_memog_mo: false,
    }
}

pub fn small_clips(cfg: &ModelConfig, count: usize, seed: u64) -> Vec<ClipSample> {
    let spec = SceneSpec {
        seed,
        image_size: cfg.encoder.image_size,
        clip_len: cfg.clip_len,
        sigma: 1.5,
        ..SceneSpec::default()
    };
    generate_dataset(&spec, count).unwrap()
}
