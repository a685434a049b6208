//! Convolutional upsampling decoder: feature grid to attention map.

use crate::error::{shape_err, Result};
use crate::params::{ParamScope, ParamStore};
use crate::tensor::{NormMode, Tensor};

pub const BN_MOMENTUM: f64 = 0.1;

/// Upsampling blocks needed to return from the token grid to pixels.
pub fn num_blocks(patch_size: usize) -> Result<usize> {
    if !patch_size.is_power_of_two() {
        return Err(shape_err!("patch size {} is not a power of two", patch_size));
    }
    Ok(patch_size.trailing_zeros() as usize)
}

pub fn init_params(store: &mut ParamStore, in_channels: usize, width: usize, patch_size: usize) -> Result<()> {
    let mut cin = in_channels;
    for i in 0..num_blocks(patch_size)? {
        let p = format!("decoder.block{i}");
        store.kaiming_uniform(&format!("{p}.conv.w"), &[width, cin, 3, 3])?;
        store.zeros(&format!("{p}.conv.b"), &[width])?;
        store.ones(&format!("{p}.bn.g"), &[width])?;
        store.zeros(&format!("{p}.bn.b"), &[width])?;
        store.buffer(&format!("{p}.bn.mean"), &[width], 0.0)?;
        store.buffer(&format!("{p}.bn.var"), &[width], 1.0)?;
        cin = width;
    }
    store.kaiming_uniform("decoder.out.w", &[1, cin, 3, 3])?;
    store.zeros("decoder.out.b", &[1])?;
    Ok(())
}

/// `blocks × [conv3×3 → BN → ReLU → 2× upsample]`, then conv3×3 to one
/// channel and a sigmoid. Returns an `H×W` map. In train mode the updated
/// running statistics are staged on the scope.
pub fn decode_attention_map(features: &Tensor, blocks: usize, scope: &ParamScope, mode: NormMode) -> Result<Tensor> {
    if features.rank() != 3 {
        return Err(shape_err!("decoder input must be C×h×w, got {:?}", features.shape()));
    }
    let mut x = features.clone();
    for i in 0..blocks {
        let p = format!("decoder.block{i}");
        let conv = x.conv2d(
            &scope.get(&format!("{p}.conv.w"))?,
            Some(&scope.get(&format!("{p}.conv.b"))?),
            1,
        )?;
        let (mean_name, var_name) = (format!("{p}.bn.mean"), format!("{p}.bn.var"));
        let bn = conv.batchnorm2d(
            &scope.get(&format!("{p}.bn.g"))?,
            &scope.get(&format!("{p}.bn.b"))?,
            &scope.buffer(&mean_name)?,
            &scope.buffer(&var_name)?,
            mode,
            BN_MOMENTUM,
        )?;
        if let Some((m, v)) = bn.running {
            scope.stage_buffer(&mean_name, m);
            scope.stage_buffer(&var_name, v);
        }
        x = bn.output.relu().upsample_nearest_2x()?;
    }
    let out = x
        .conv2d(&scope.get("decoder.out.w")?, Some(&scope.get("decoder.out.b")?), 1)?
        .sigmoid();
    let (h, w) = (out.shape()[1], out.shape()[2]);
    out.reshape(&[h, w])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(cin: usize, width: usize, patch: usize) -> ParamStore {
        let mut s = ParamStore::new(3);
        init_params(&mut s, cin, width, patch).unwrap();
        s
    }

    #[test]
    fn output_matches_frame_size() {
        for patch in [2, 4, 8, 16] {
            let s = store(3, 4, patch);
            let scope = ParamScope::new(&s, false);
            let x = Tensor::full(&[3, 2, 2], 0.3);
            let y = decode_attention_map(&x, num_blocks(patch).unwrap(), &scope, NormMode::Train).unwrap();
            assert_eq!(y.shape(), &[2 * patch, 2 * patch]);
            assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert!(num_blocks(6).is_err());
    }

    #[test]
    fn zero_final_conv_gives_half() {
        let mut s = store(2, 4, 4);
        let n = s.get("decoder.out.w").unwrap().data.len();
        s.set("decoder.out.w", vec![0.0; n]).unwrap();
        let scope = ParamScope::new(&s, false);
        let x = Tensor::new(vec![2, 3, 3], (0..18).map(|v| (v as f64).sin()).collect()).unwrap();
        let y = decode_attention_map(&x, 2, &scope, NormMode::Eval).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn train_mode_stages_running_stats() {
        let s = store(2, 4, 2);
        let scope = ParamScope::new(&s, false);
        let x = Tensor::new(vec![2, 2, 2], (0..8).map(|v| v as f64 * 0.25).collect()).unwrap();
        decode_attention_map(&x, 1, &scope, NormMode::Train).unwrap();
        let update = scope.finish();
        assert_eq!(update.buffers.len(), 2);
        assert!(update.buffers.contains_key("decoder.block0.bn.mean"));

        let scope = ParamScope::new(&s, false);
        decode_attention_map(&x, 1, &scope, NormMode::Eval).unwrap();
        assert!(scope.finish().buffers.is_empty());
    }
}
