//! The full gated attention model over one clip.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoder::{self, decode_attention_map};
use crate::encoder::{self, encode_frame, tokens_to_grid, EncoderConfig};
use crate::error::{Error, Result};
use crate::gating::{
    memog_forward, mu_infog_forward, spag_forward, GateConfig, GruParams, MemogParams, MoInfogParams, MuControl,
    MuInfogParams, SpagParams,
};
use crate::params::{ParamScope, ParamStore};
use crate::tensor::{NormMode, Tensor};

/// Input information streams, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoType {
    Rgb,
    Semantic,
    Flow,
    Drivable,
}

impl InfoType {
    pub const ALL: [InfoType; 4] = [InfoType::Rgb, InfoType::Semantic, InfoType::Flow, InfoType::Drivable];

    pub fn name(self) -> &'static str {
        match self {
            InfoType::Rgb => "rgb",
            InfoType::Semantic => "semantic",
            InfoType::Flow => "flow",
            InfoType::Drivable => "drivable",
        }
    }

    /// Channels after input normalization.
    pub fn channels(self) -> usize {
        match self {
            InfoType::Rgb => 3,
            InfoType::Semantic => 4,
            InfoType::Flow => 2,
            InfoType::Drivable => 1,
        }
    }

    /// Single-letter tag used in variant names.
    pub fn letter(self) -> char {
        match self {
            InfoType::Rgb => 'I',
            InfoType::Semantic => 'S',
            InfoType::Flow => 'F',
            InfoType::Drivable => 'D',
        }
    }
}

impl fmt::Display for InfoType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InfoType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InfoType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown information type '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub gate: GateConfig,
    /// Input frames per clip.
    pub clip_len: usize,
    pub info_types: Vec<InfoType>,
    /// GRU state size; must be a multiple of the token grid area so the final
    /// state can be laid out as a `c×h×w` map.
    pub gru_hidden: usize,
    /// GRU input size after projecting a flattened frame.
    pub gru_input: usize,
    pub decoder_width: usize,
    pub spag_kernel: usize,
    /// One MO-InfoG shared by the memory gates of every stream.
    pub share_memog_mo: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            encoder: EncoderConfig::desk(),
            gate: GateConfig::all_open(),
            clip_len: 4,
            info_types: InfoType::ALL.to_vec(),
            gru_hidden: 256,
            gru_input: 64,
            decoder_width: 32,
            spag_kernel: 7,
            share_memog_mo: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.clip_len == 0 {
            return Err(Error::Config("clip_len must be ≥ 1".into()));
        }
        if self.info_types.is_empty() {
            return Err(Error::Config("info_types must not be empty".into()));
        }
        for (i, t) in self.info_types.iter().enumerate() {
            if self.info_types[..i].contains(t) {
                return Err(Error::Config(format!("info type '{t}' listed twice")));
            }
        }
        let area = self.encoder.num_tokens();
        if self.gru_hidden == 0 || !self.gru_hidden.is_multiple_of(area) {
            return Err(Error::Config(format!(
                "gru_hidden {} is not a positive multiple of the {}-cell token grid",
                self.gru_hidden, area
            )));
        }
        if self.gru_input == 0 || self.decoder_width == 0 {
            return Err(Error::Config("gru_input and decoder_width must be positive".into()));
        }
        if self.spag_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("spag_kernel {} must be odd", self.spag_kernel)));
        }
        decoder::num_blocks(self.encoder.patch_size).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Channels of the final hidden state laid out on the token grid.
    pub fn hidden_channels(&self) -> usize {
        self.gru_hidden / self.encoder.num_tokens()
    }

    pub fn num_streams(&self) -> usize {
        self.info_types.len()
    }

    fn mo_prefix(&self, t: InfoType) -> String {
        if self.share_memog_mo {
            "memog.mo".into()
        } else {
            format!("stream.{t}.memog.mo")
        }
    }
}

/// Replace the gate switches; parameters are untouched, so this is free to
/// apply and undo on a trained model.
pub fn apply_gate_closing(cfg: &ModelConfig, gate: GateConfig) -> ModelConfig {
    ModelConfig { gate, ..cfg.clone() }
}

fn init_mo(store: &mut ParamStore, prefix: &str, c: usize) -> Result<()> {
    store.kaiming_uniform(&format!("{prefix}.wf"), &[c, c, 1, 1])?;
    store.zeros(&format!("{prefix}.bf"), &[c])?;
    store.kaiming_uniform(&format!("{prefix}.wg"), &[c, c, 1, 1])?;
    store.zeros(&format!("{prefix}.bg"), &[c])
}

/// Fresh parameters for `cfg`, seeded.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut store = ParamStore::new(seed);
    let enc = &cfg.encoder;
    let d = enc.embed_dim;
    let (d_h, d_x) = (cfg.gru_hidden, cfg.gru_input);
    let c_h = cfg.hidden_channels();
    encoder::init_params(&mut store, enc)?;
    if cfg.share_memog_mo {
        init_mo(&mut store, "memog.mo", d_h)?;
    }
    for &t in &cfg.info_types {
        let p = format!("stream.{t}");
        store.kaiming_uniform(&format!("{p}.proj.w"), &[enc.in_channels, t.channels(), 1, 1])?;
        store.zeros(&format!("{p}.proj.b"), &[enc.in_channels])?;
        store.kaiming_uniform(&format!("{p}.spag.w"), &[1, 2, cfg.spag_kernel, cfg.spag_kernel])?;
        store.zeros(&format!("{p}.spag.b"), &[1])?;
        if !cfg.share_memog_mo {
            init_mo(&mut store, &cfg.mo_prefix(t), d_h)?;
        }
        store.kaiming_uniform(&format!("{p}.memog.tu.w"), &[1, d, 1, 1])?;
        store.zeros(&format!("{p}.memog.tu.b"), &[1])?;
        store.trunc_normal(&format!("{p}.memog.in.w"), &[d * enc.num_tokens(), d_x], 0.02)?;
        store.zeros(&format!("{p}.memog.in.b"), &[d_x])?;
        for g in ["z", "r", "h"] {
            store.trunc_normal(&format!("{p}.memog.gru.w{g}"), &[d_h + d_x, d_h], 0.02)?;
            store.zeros(&format!("{p}.memog.gru.b{g}"), &[d_h])?;
        }
        store.kaiming_uniform(&format!("fusion.{t}.w"), &[1, c_h, 1, 1])?;
        store.zeros(&format!("fusion.{t}.b"), &[1])?;
    }
    decoder::init_params(&mut store, cfg.num_streams() * c_h, cfg.decoder_width, enc.patch_size)?;
    Ok(store)
}

/// Normalized model inputs: for each stream, `clip_len` frames of
/// `channels × H × W`, oldest first.
#[derive(Debug, Clone, Default)]
pub struct ClipInputs {
    pub streams: BTreeMap<InfoType, Vec<Tensor>>,
}

#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    pub norm: NormMode,
    /// Stream positions (in `info_types` order) whose fusion mask is forced
    /// to zero.
    pub suppressed: Vec<usize>,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        Self {
            norm: NormMode::Eval,
            suppressed: Vec::new(),
        }
    }
}

/// Masks recorded during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    /// `[stream][frame]`, absent when SpaG is closed.
    pub spag_masks: Vec<Vec<Option<Tensor>>>,
    /// `[stream][step]`, each the window masks at that step.
    pub tu_masks: Vec<Vec<Vec<Tensor>>>,
    /// Final hidden state per stream.
    pub hidden: Vec<Tensor>,
    /// Cross-stream fusion masks, `h×w` each.
    pub mu_masks: Vec<Tensor>,
}

pub struct ForwardOutput {
    /// `H×W`, values in (0, 1).
    pub prediction: Tensor,
    pub trace: ForwardTrace,
}

fn stream_frames<'a>(inputs: &'a ClipInputs, cfg: &ModelConfig, t: InfoType) -> Result<&'a [Tensor]> {
    let frames = inputs
        .streams
        .get(&t)
        .ok_or_else(|| Error::Input(format!("missing '{t}' stream")))?;
    if frames.len() < cfg.clip_len {
        return Err(Error::Input(format!(
            "'{t}' stream has {} frames, need {}",
            frames.len(),
            cfg.clip_len
        )));
    }
    let size = cfg.encoder.image_size;
    for f in &frames[..cfg.clip_len] {
        if f.shape() != [t.channels(), size, size] {
            return Err(Error::Input(format!(
                "'{t}' frame has shape {:?}, expected {:?}",
                f.shape(),
                [t.channels(), size, size]
            )));
        }
    }
    Ok(&frames[..cfg.clip_len])
}

/// Encode, gate and fuse every stream, then decode the next-frame map.
pub fn forward_clip(
    inputs: &ClipInputs,
    cfg: &ModelConfig,
    scope: &ParamScope,
    opts: &ForwardOptions,
) -> Result<ForwardOutput> {
    let enc = &cfg.encoder;
    let gate = &cfg.gate;
    let side = enc.grid_side();
    let mut trace = ForwardTrace::default();

    for &t in &cfg.info_types {
        let frames = stream_frames(inputs, cfg, t)?;
        let p = format!("stream.{t}");
        let proj_w = scope.get(&format!("{p}.proj.w"))?;
        let proj_b = scope.get(&format!("{p}.proj.b"))?;
        let spag = SpagParams::bind(scope, &format!("{p}.spag"))?;
        let memog = MemogParams {
            mo: MoInfogParams::bind(scope, &cfg.mo_prefix(t))?,
            tu: MuInfogParams::bind(scope, &[format!("{p}.memog.tu")])?,
            input_w: scope.get(&format!("{p}.memog.in.w"))?,
            input_b: scope.get(&format!("{p}.memog.in.b"))?,
            gru: GruParams::bind(scope, &format!("{p}.memog.gru"))?,
        };

        let mut gated = Vec::with_capacity(frames.len());
        let mut spag_masks = Vec::with_capacity(frames.len());
        for frame in frames {
            let x = frame.conv2d(&proj_w, Some(&proj_b), 0)?;
            let grid = tokens_to_grid(&encode_frame(&x, enc, scope)?)?;
            let g = spag_forward(&grid, &spag, gate.spag_open)?;
            gated.push(g.output);
            spag_masks.push(g.mask);
        }

        let mut h = Tensor::zeros(&[cfg.gru_hidden]);
        let mut tu_masks = Vec::with_capacity(frames.len());
        for tau in 1..=gated.len() {
            let step = memog_forward(&h, &gated[..tau], gate, &memog)?;
            h = step.hidden;
            tu_masks.push(step.tu_masks);
        }
        trace.spag_masks.push(spag_masks);
        trace.tu_masks.push(tu_masks);
        trace.hidden.push(h);
    }

    let c_h = cfg.hidden_channels();
    let maps = trace
        .hidden
        .iter()
        .map(|h| h.reshape(&[c_h, side, side]))
        .collect::<Result<Vec<_>>>()?;
    let fusion_names: Vec<String> = cfg.info_types.iter().map(|t| format!("fusion.{t}")).collect();
    let fusion = MuInfogParams::bind(scope, &fusion_names)?;
    let control = MuControl {
        open: gate.mu_infog_open,
        suppressed: opts.suppressed.clone(),
    };
    let mu = mu_infog_forward(&maps, &fusion, &control)?;
    trace.mu_masks = mu.masks;

    let n = cfg.num_streams();
    let stacked = Tensor::stack(&mu.outputs)?.reshape(&[n * c_h, side, side])?;
    let blocks = decoder::num_blocks(enc.patch_size)?;
    let prediction = decode_attention_map(&stacked, blocks, scope, opts.norm)?;
    Ok(ForwardOutput { prediction, trace })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn tiny() -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                image_size: 8,
                patch_size: 4,
                in_channels: 3,
                embed_dim: 4,
                depth: 1,
                num_heads: 2,
                mlp_ratio: 2.0,
            },
            gate: GateConfig::all_open(),
            clip_len: 2,
            info_types: InfoType::ALL.to_vec(),
            gru_hidden: 8,
            gru_input: 3,
            decoder_width: 3,
            spag_kernel: 3,
            share_memog_mo: false,
        }
    }

    fn inputs(cfg: &ModelConfig, salt: f64) -> ClipInputs {
        let s = cfg.encoder.image_size;
        let mut streams = BTreeMap::new();
        for &t in &cfg.info_types {
            let frames = (0..cfg.clip_len)
                .map(|f| {
                    let n = t.channels() * s * s;
                    let data = (0..n)
                        .map(|i| ((i as f64 + 1.0) * (0.37 + f as f64 + salt)).sin() * 0.5 + 0.5)
                        .collect();
                    Tensor::new(vec![t.channels(), s, s], data).unwrap()
                })
                .collect();
            streams.insert(t, frames);
        }
        ClipInputs { streams }
    }

    #[test]
    fn output_contract() {
        let cfg = tiny();
        let store = init_params(&cfg, 5).unwrap();
        let scope = ParamScope::new(&store, false);
        let out = forward_clip(&inputs(&cfg, 0.0), &cfg, &scope, &ForwardOptions::default()).unwrap();
        assert_eq!(out.prediction.shape(), &[8, 8]);
        assert!(out.prediction.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(out.trace.mu_masks.len(), 4);
        assert_eq!(out.trace.tu_masks[0].len(), 2);
    }

    #[test]
    fn missing_stream_is_an_input_error() {
        let cfg = tiny();
        let store = init_params(&cfg, 5).unwrap();
        let scope = ParamScope::new(&store, false);
        let mut x = inputs(&cfg, 0.0);
        x.streams.remove(&InfoType::Flow);
        assert!(matches!(
            forward_clip(&x, &cfg, &scope, &ForwardOptions::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn single_stream_all_closed_runs() {
        let cfg = ModelConfig {
            info_types: vec![InfoType::Rgb],
            gate: GateConfig::all_closed(false),
            ..tiny()
        };
        let store = init_params(&cfg, 1).unwrap();
        let scope = ParamScope::new(&store, false);
        let out = forward_clip(&inputs(&cfg, 0.0), &cfg, &scope, &ForwardOptions::default()).unwrap();
        assert_eq!(out.prediction.shape(), &[8, 8]);
    }

    #[test]
    fn suppressed_stream_is_ignored() {
        let cfg = tiny();
        let store = init_params(&cfg, 2).unwrap();
        let opts = ForwardOptions {
            norm: NormMode::Eval,
            suppressed: vec![1],
        };
        let a = inputs(&cfg, 0.0);
        let mut b = a.clone();
        b.streams.insert(
            InfoType::Semantic,
            inputs(&cfg, 0.9).streams[&InfoType::Semantic].clone(),
        );
        let run = |x: &ClipInputs| {
            let scope = ParamScope::new(&store, false);
            forward_clip(x, &cfg, &scope, &opts).unwrap().prediction.to_vec()
        };
        assert_eq!(run(&a), run(&b));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::desk().validate().is_ok());
        let dup = ModelConfig {
            info_types: vec![InfoType::Rgb, InfoType::Rgb],
            ..tiny()
        };
        assert!(dup.validate().is_err());
        let bad_hidden = ModelConfig {
            gru_hidden: 6,
            ..tiny()
        };
        assert!(bad_hidden.validate().is_err());
    }

    #[test]
    fn gate_closing_leaves_params_alone() {
        let cfg = tiny();
        let store = init_params(&cfg, 9).unwrap();
        let before = store.checksum();
        for g in GateConfig::ablation_grid(true) {
            let closed = apply_gate_closing(&cfg, g);
            let scope = ParamScope::new(&store, false);
            forward_clip(&inputs(&cfg, 0.1), &closed, &scope, &ForwardOptions::eval()).unwrap();
        }
        assert_eq!(store.checksum(), before);
    }
}
