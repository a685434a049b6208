use std::collections::BTreeMap;

use super::{ClipSample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::model::{ClipInputs, InfoType};
use crate::tensor::Tensor;

/// Model inputs for the first `clip_len` frames of `sample`: rgb as is,
/// flow divided by the clip's `max_speed` and clamped to [−1, 1], semantic
/// labels one-hot, drivable as one {0, 1} channel. Projection to the
/// encoder's channel count happens inside the model.
pub fn normalize_inputs(sample: &ClipSample, types: &[InfoType]) -> Result<ClipInputs> {
    let (h, w) = (sample.height, sample.width);
    let hw = h * w;
    let k = sample.clip_len();
    if k == 0 {
        return Err(Error::Input(format!("clip {} has no input frames", sample.clip_id)));
    }
    let mut streams = BTreeMap::new();
    for &t in types {
        let mut frames = Vec::with_capacity(k);
        for (fi, f) in sample.frames[..k].iter().enumerate() {
            let data = match t {
                InfoType::Rgb => f.rgb.clone(),
                InfoType::Flow => {
                    let s = sample.max_speed;
                    if !(s > 0.0) {
                        return Err(Error::Input(format!("clip {} has max_speed {s}", sample.clip_id)));
                    }
                    f.flow.iter().map(|v| (v / s).clamp(-1.0, 1.0)).collect()
                }
                InfoType::Semantic => {
                    let mut one_hot = vec![0.0; NUM_CLASSES * hw];
                    for (i, &l) in f.semantic.iter().enumerate() {
                        if l as usize >= NUM_CLASSES {
                            return Err(Error::Input(format!(
                                "clip {} frame {fi}: unknown semantic label {l}",
                                sample.clip_id
                            )));
                        }
                        one_hot[l as usize * hw + i] = 1.0;
                    }
                    one_hot
                }
                InfoType::Drivable => f.drivable.iter().map(|&v| f64::from(u8::from(v != 0))).collect(),
            };
            frames.push(Tensor::new(vec![t.channels(), h, w], data)?);
        }
        streams.insert(t, frames);
    }
    Ok(ClipInputs { streams })
}
