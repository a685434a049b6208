use gatedap::decoder::{decode_attention_map, num_blocks};
use gatedap::encoder::{encode_frame, tokens_to_grid};
use gatedap::gating::{gru_cell, GruParams};
use gatedap::model::ModelConfig;
use gatedap::tensor::NormMode;
use gatedap::train::PreparedClip;
use gatedap::{ParamScope, Tensor};

/// The ungated pipeline written out by hand: encode each frame, run a plain
/// GRU over the flattened grids, average the streams, decode.
pub fn hand_composed(cfg: &ModelConfig, clip: &PreparedClip, scope: &ParamScope) -> Vec<f64> {
    let enc = &cfg.encoder;
    let side = enc.grid_side();
    let c_h = cfg.hidden_channels();
    let n = cfg.info_types.len();
    let mut fused = Vec::new();
    for &t in &cfg.info_types {
        let p = format!("stream.{t}");
        let proj_w = scope.get(&format!("{p}.proj.w")).unwrap();
        let proj_b = scope.get(&format!("{p}.proj.b")).unwrap();
        let in_w = scope.get(&format!("{p}.memog.in.w")).unwrap();
        let in_b = scope.get(&format!("{p}.memog.in.b")).unwrap();
        let gru = GruParams::bind(scope, &format!("{p}.memog.gru")).unwrap();
        let mut h = Tensor::zeros(&[cfg.gru_hidden]);
        for frame in &clip.inputs.streams[&t][..cfg.clip_len] {
            let x = frame.conv2d(&proj_w, Some(&proj_b), 0).unwrap();
            let grid = tokens_to_grid(&encode_frame(&x, enc, scope).unwrap()).unwrap();
            let flat = grid.reshape(&[1, grid.numel()]).unwrap();
            let x_in = flat.linear(&in_w, Some(&in_b)).unwrap();
            h = gru_cell(&h, &x_in.reshape(&[cfg.gru_input]).unwrap(), &gru).unwrap();
        }
        let map = h.reshape(&[c_h, side, side]).unwrap();
        fused.push(map.mul(&Tensor::full(&[1, side, side], 1.0 / n as f64)).unwrap());
    }
    let stacked = Tensor::stack(&fused).unwrap().reshape(&[n * c_h, side, side]).unwrap();
    decode_attention_map(&stacked, num_blocks(enc.patch_size).unwrap(), scope, NormMode::Eval)
        .unwrap()
        .into_vec()
}
