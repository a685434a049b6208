//! Patch-token transformer encoder shared by all information streams.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::params::{ParamScope, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    /// Channels each stream is projected to before patching.
    pub in_channels: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    pub mlp_ratio: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl EncoderConfig {
    /// 64×64 frames, 8×8 patches, two blocks.
    pub fn desk() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            in_channels: 3,
            embed_dim: 32,
            depth: 2,
            num_heads: 2,
            mlp_ratio: 2.0,
        }
    }

    /// Full-size ViT-B/16 geometry on 224 px frames.
    pub fn vit_b16() -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            in_channels: 3,
            embed_dim: 768,
            depth: 12,
            num_heads: 12,
            mlp_ratio: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.num_heads == 0 || !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if self.in_channels == 0 || self.mlp_ratio <= 0.0 {
            return Err(Error::Config("in_channels and mlp_ratio must be positive".into()));
        }
        Ok(())
    }

    /// Tokens per side.
    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_tokens(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    pub fn mlp_hidden(&self) -> usize {
        ((self.embed_dim as f64) * self.mlp_ratio).round() as usize
    }
}

pub fn init_params(store: &mut ParamStore, cfg: &EncoderConfig) -> Result<()> {
    let d = cfg.embed_dim;
    let patch_dim = cfg.in_channels * cfg.patch_size * cfg.patch_size;
    store.trunc_normal("encoder.patch.w", &[patch_dim, d], 0.02)?;
    store.zeros("encoder.patch.b", &[d])?;
    store.trunc_normal("encoder.pos", &[cfg.num_tokens(), d], 0.02)?;
    for i in 0..cfg.depth {
        let p = format!("encoder.block{i}");
        store.ones(&format!("{p}.ln1.g"), &[d])?;
        store.zeros(&format!("{p}.ln1.b"), &[d])?;
        for w in ["q", "k", "v", "o"] {
            store.trunc_normal(&format!("{p}.attn.w{w}"), &[d, d], 0.02)?;
            store.zeros(&format!("{p}.attn.b{w}"), &[d])?;
        }
        store.ones(&format!("{p}.ln2.g"), &[d])?;
        store.zeros(&format!("{p}.ln2.b"), &[d])?;
        store.trunc_normal(&format!("{p}.mlp.w1"), &[d, cfg.mlp_hidden()], 0.02)?;
        store.zeros(&format!("{p}.mlp.b1"), &[cfg.mlp_hidden()])?;
        store.trunc_normal(&format!("{p}.mlp.w2"), &[cfg.mlp_hidden(), d], 0.02)?;
        store.zeros(&format!("{p}.mlp.b2"), &[d])?;
    }
    Ok(())
}

pub struct PatchEmbedParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub pos: Tensor,
}

/// Row-major patch order; each patch flattened as (channel, row, col).
fn patch_indices(c: usize, h: usize, w: usize, p: usize) -> Vec<usize> {
    let (gh, gw) = (h / p, w / p);
    let mut idx = Vec::with_capacity(c * h * w);
    for ty in 0..gh {
        for tx in 0..gw {
            for ch in 0..c {
                for py in 0..p {
                    for px in 0..p {
                        idx.push((ch * h + ty * p + py) * w + tx * p + px);
                    }
                }
            }
        }
    }
    idx
}

/// Non-overlapping patches, linear projection, learned positional embedding.
pub fn patch_embed(frame: &Tensor, patch_size: usize, p: &PatchEmbedParams) -> Result<Tensor> {
    let &[c, h, w] = frame.shape() else {
        return Err(shape_err!("frame must be C×H×W, got {:?}", frame.shape()));
    };
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return Err(shape_err!(
            "{}×{} frame is not divisible into {}-pixel patches",
            h,
            w,
            patch_size
        ));
    }
    let n_tok = (h / patch_size) * (w / patch_size);
    let patch_dim = c * patch_size * patch_size;
    let patches = frame.gather(&[n_tok, patch_dim], patch_indices(c, h, w, patch_size))?;
    patches.linear(&p.weight, Some(&p.bias))?.add(&p.pos)
}

pub struct BlockParams {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl BlockParams {
    pub fn bind(scope: &ParamScope, prefix: &str) -> Result<Self> {
        let g = |n: &str| scope.get(&format!("{prefix}.{n}"));
        Ok(Self {
            ln1_g: g("ln1.g")?,
            ln1_b: g("ln1.b")?,
            wq: g("attn.wq")?,
            bq: g("attn.bq")?,
            wk: g("attn.wk")?,
            bk: g("attn.bk")?,
            wv: g("attn.wv")?,
            bv: g("attn.bv")?,
            wo: g("attn.wo")?,
            bo: g("attn.bo")?,
            ln2_g: g("ln2.g")?,
            ln2_b: g("ln2.b")?,
            w1: g("mlp.w1")?,
            b1: g("mlp.b1")?,
            w2: g("mlp.w2")?,
            b2: g("mlp.b2")?,
        })
    }
}

pub struct AttentionOutput {
    /// Concatenated head outputs before the output projection, `N×d`.
    pub heads: Tensor,
    /// Row-stochastic `N×N` attention per head.
    pub probs: Vec<Tensor>,
}

/// Multi-head scaled dot-product self-attention, scale `1/√(d/heads)`.
pub fn self_attention(x: &Tensor, p: &BlockParams, num_heads: usize) -> Result<AttentionOutput> {
    let &[_, d] = x.shape() else {
        return Err(shape_err!("tokens must be N×d, got {:?}", x.shape()));
    };
    if num_heads == 0 || d % num_heads != 0 {
        return Err(shape_err!("embed dim {} not divisible by {} heads", d, num_heads));
    }
    let hd = d / num_heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let q = x.linear(&p.wq, Some(&p.bq))?;
    let k = x.linear(&p.wk, Some(&p.bk))?;
    let v = x.linear(&p.wv, Some(&p.bv))?;
    let mut outs = Vec::with_capacity(num_heads);
    let mut probs = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let qh = q.slice(1, h * hd, hd)?;
        let kh = k.slice(1, h * hd, hd)?;
        let vh = v.slice(1, h * hd, hd)?;
        let a = qh.matmul(&kh.transpose()?)?.scale(scale).softmax(1)?;
        outs.push(a.matmul(&vh)?);
        probs.push(a);
    }
    Ok(AttentionOutput {
        heads: Tensor::concat(&outs, 1)?,
        probs,
    })
}

/// Pre-norm transformer block: `x + MHSA(LN(x))`, then `+ MLP(LN(·))`.
pub fn vit_block(tokens: &Tensor, p: &BlockParams, num_heads: usize) -> Result<Tensor> {
    let attn = self_attention(&tokens.layernorm(&p.ln1_g, &p.ln1_b)?, p, num_heads)?;
    let x = tokens.add(&attn.heads.linear(&p.wo, Some(&p.bo))?)?;
    let hidden = x.layernorm(&p.ln2_g, &p.ln2_b)?.linear(&p.w1, Some(&p.b1))?.gelu();
    x.add(&hidden.linear(&p.w2, Some(&p.b2))?)
}

/// Shared-weight encoder: patch embedding followed by `depth` blocks.
pub fn encode_frame(frame: &Tensor, cfg: &EncoderConfig, scope: &ParamScope) -> Result<Tensor> {
    let embed = PatchEmbedParams {
        weight: scope.get("encoder.patch.w")?,
        bias: scope.get("encoder.patch.b")?,
        pos: scope.get("encoder.pos")?,
    };
    let mut x = patch_embed(frame, cfg.patch_size, &embed)?;
    for i in 0..cfg.depth {
        x = vit_block(
            &x,
            &BlockParams::bind(scope, &format!("encoder.block{i}"))?,
            cfg.num_heads,
        )?;
    }
    Ok(x)
}

/// `N×d` tokens to a `d×h×w` map; token `i` lands at `(i / w, i % w)`.
pub fn tokens_to_grid(tokens: &Tensor) -> Result<Tensor> {
    let &[n, d] = tokens.shape() else {
        return Err(shape_err!("tokens must be N×d, got {:?}", tokens.shape()));
    };
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(shape_err!("{} tokens do not form a square grid", n));
    }
    tokens.transpose()?.reshape(&[d, side, side])
}

pub fn grid_to_tokens(grid: &Tensor) -> Result<Tensor> {
    let &[d, h, w] = grid.shape() else {
        return Err(shape_err!("grid must be d×h×w, got {:?}", grid.shape()));
    };
    grid.reshape(&[d, h * w])?.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_embed(c: usize, p: usize, n: usize, d: usize) -> PatchEmbedParams {
        PatchEmbedParams {
            weight: Tensor::zeros(&[c * p * p, d]),
            bias: Tensor::zeros(&[d]),
            pos: Tensor::zeros(&[n, d]),
        }
    }

    fn zero_block(d: usize, hidden: usize) -> BlockParams {
        let m = |r, c| Tensor::zeros(&[r, c]);
        let v = |n| Tensor::zeros(&[n]);
        BlockParams {
            ln1_g: Tensor::full(&[d], 1.0),
            ln1_b: v(d),
            wq: m(d, d),
            bq: v(d),
            wk: m(d, d),
            bk: v(d),
            wv: m(d, d),
            bv: v(d),
            wo: m(d, d),
            bo: v(d),
            ln2_g: Tensor::full(&[d], 1.0),
            ln2_b: v(d),
            w1: m(d, hidden),
            b1: v(hidden),
            w2: m(hidden, d),
            b2: v(d),
        }
    }

    #[test]
    fn token_counts() {
        let f = Tensor::zeros(&[1, 8, 8]);
        assert_eq!(patch_embed(&f, 8, &zero_embed(1, 8, 1, 4)).unwrap().shape(), &[1, 4]);
        let f = Tensor::full(&[3, 16, 16], 0.3);
        let out = patch_embed(&f, 8, &zero_embed(3, 8, 4, 5)).unwrap();
        assert_eq!(out.shape(), &[4, 5]);
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(patch_embed(&Tensor::zeros(&[1, 12, 8]), 8, &zero_embed(1, 8, 1, 4)).is_err());
    }

    #[test]
    fn patch_order_is_row_major() {
        // identity projection on a 1×4×4 frame with 2×2 patches
        let f = Tensor::new(vec![1, 4, 4], (0..16).map(f64::from).collect()).unwrap();
        let mut eye = vec![0.0; 16];
        (0..4).for_each(|i| eye[i * 4 + i] = 1.0);
        let p = PatchEmbedParams {
            weight: Tensor::new(vec![4, 4], eye).unwrap(),
            bias: Tensor::zeros(&[4]),
            pos: Tensor::zeros(&[4, 4]),
        };
        let t = patch_embed(&f, 2, &p).unwrap();
        assert_eq!(&t.data()[..4], &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(&t.data()[4..8], &[2.0, 3.0, 6.0, 7.0]);
        assert_eq!(&t.data()[8..12], &[8.0, 9.0, 12.0, 13.0]);
    }

    #[test]
    fn zero_block_is_identity() {
        let x = Tensor::new(vec![3, 4], (0..12).map(|v| (v as f64).sin()).collect()).unwrap();
        let y = vit_block(&x, &zero_block(4, 8), 2).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_qk_gives_uniform_attention() {
        let x = Tensor::new(vec![3, 4], (0..12).map(|v| (v as f64 * 0.7).cos()).collect()).unwrap();
        let mut p = zero_block(4, 8);
        let mut wv = vec![0.0; 16];
        (0..4).for_each(|i| wv[i * 4 + i] = 1.0);
        p.wv = Tensor::new(vec![4, 4], wv).unwrap();
        let out = self_attention(&x, &p, 2).unwrap();
        for a in &out.probs {
            assert!(a.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
        for j in 0..4 {
            let mean = (0..3).map(|r| x.data()[r * 4 + j]).sum::<f64>() / 3.0;
            for r in 0..3 {
                assert!((out.heads.data()[r * 4 + j] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_layout() {
        let t = Tensor::new(vec![4, 2], (0..8).map(f64::from).collect()).unwrap();
        let g = tokens_to_grid(&t).unwrap();
        assert_eq!(g.shape(), &[2, 2, 2]);
        for i in 0..4 {
            for c in 0..2 {
                assert_eq!(g.data()[(c * 2 + i / 2) * 2 + i % 2], t.data()[i * 2 + c]);
            }
        }
        assert_eq!(grid_to_tokens(&g).unwrap().data(), t.data());
        assert!(tokens_to_grid(&Tensor::zeros(&[3, 2])).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::desk().validate().is_ok());
        assert!(EncoderConfig::vit_b16().validate().is_ok());
        let bad = EncoderConfig {
            num_heads: 3,
            ..EncoderConfig::desk()
        };
        assert!(bad.validate().is_err());
        let bad = EncoderConfig {
            image_size: 60,
            ..EncoderConfig::desk()
        };
        assert!(bad.validate().is_err());
    }
}
