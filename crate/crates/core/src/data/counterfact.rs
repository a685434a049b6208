use serde::{Deserialize, Serialize};

use super::{ClipSample, BACKGROUND, PEDESTRIAN, VEHICLE};
use crate::error::{Error, Result};
use crate::model::InfoType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Vehicle,
    Pedestrian,
}

impl ObjectClass {
    pub fn label(self) -> u8 {
        match self {
            ObjectClass::Vehicle => VEHICLE,
            ObjectClass::Pedestrian => PEDESTRIAN,
        }
    }
}

/// One counterfactual input edit applied to a single stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactSpec {
    pub remove: Vec<ObjectClass>,
    pub stream: InfoType,
    pub drivable_mask_removal: bool,
}

impl CounterfactSpec {
    pub fn classes(stream: InfoType, remove: &[ObjectClass]) -> Self {
        Self {
            remove: remove.to_vec(),
            stream,
            drivable_mask_removal: false,
        }
    }

    pub fn drivable_mask() -> Self {
        Self {
            remove: Vec::new(),
            stream: InfoType::Drivable,
            drivable_mask_removal: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.drivable_mask_removal {
            if self.stream != InfoType::Drivable || !self.remove.is_empty() {
                return Err(Error::Usage("mask removal applies to the drivable stream alone".into()));
            }
        } else if self.stream == InfoType::Drivable {
            return Err(Error::Usage("the drivable stream carries no object classes".into()));
        } else if self.remove.is_empty() {
            return Err(Error::Usage("no classes to remove".into()));
        }
        Ok(())
    }

    /// Variant label such as `Gate-DAP-S w/o V-P`.
    pub fn name(&self) -> String {
        let what = if self.drivable_mask_removal {
            "Mask".to_string()
        } else {
            let mut tags: Vec<&str> = Vec::new();
            if self.remove.contains(&ObjectClass::Vehicle) {
                tags.push("V");
            }
            if self.remove.contains(&ObjectClass::Pedestrian) {
                tags.push("P");
            }
            tags.join("-")
        };
        format!("Gate-DAP-{} w/o {}", self.stream.letter(), what)
    }
}

/// The ten variants: pedestrians, vehicles, both, for each of rgb, flow and
/// semantic; then the drivable mask.
pub fn counterfactual_variants() -> Vec<CounterfactSpec> {
    use ObjectClass::{Pedestrian, Vehicle};
    let mut v = Vec::with_capacity(10);
    for stream in [InfoType::Rgb, InfoType::Flow, InfoType::Semantic] {
        for remove in [&[Pedestrian][..], &[Vehicle][..], &[Vehicle, Pedestrian][..]] {
            v.push(CounterfactSpec::classes(stream, remove));
        }
    }
    v.push(CounterfactSpec::drivable_mask());
    v
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Erase object classes from one stream of every frame. Object footprints
/// come from the semantic labels. RGB footprints take the frame's median
/// non-object color, flow footprints become zero, semantic labels become
/// background.
pub fn counterfact_remove_classes(sample: &ClipSample, spec: &CounterfactSpec) -> Result<ClipSample> {
    spec.validate()?;
    if spec.drivable_mask_removal {
        return Err(Error::Usage("mask removal is not a class removal".into()));
    }
    let labels: Vec<u8> = spec.remove.iter().map(|c| c.label()).collect();
    let hw = sample.pixels();
    let mut out = sample.clone();
    for frame in &mut out.frames {
        let hit: Vec<usize> = (0..hw).filter(|&i| labels.contains(&frame.semantic[i])).collect();
        if hit.is_empty() {
            continue;
        }
        match spec.stream {
            InfoType::Semantic => hit.iter().for_each(|&i| frame.semantic[i] = BACKGROUND),
            InfoType::Flow => hit.iter().for_each(|&i| {
                frame.flow[i] = 0.0;
                frame.flow[hw + i] = 0.0;
            }),
            InfoType::Rgb => {
                let bg: Vec<usize> = (0..hw).filter(|&i| frame.semantic[i] < VEHICLE).collect();
                if bg.is_empty() {
                    continue;
                }
                for c in 0..3 {
                    let fill = median(bg.iter().map(|&i| frame.rgb[c * hw + i]).collect());
                    hit.iter().for_each(|&i| frame.rgb[c * hw + i] = fill);
                }
            }
            InfoType::Drivable => unreachable!("rejected by validate"),
        }
    }
    Ok(out)
}

/// Clear the drivable mask of every frame.
pub fn counterfact_remove_drivable(sample: &ClipSample) -> ClipSample {
    let mut out = sample.clone();
    out.frames
        .iter_mut()
        .for_each(|f| f.drivable.iter_mut().for_each(|v| *v = 0));
    out
}

pub fn apply_counterfact(sample: &ClipSample, spec: &CounterfactSpec) -> Result<ClipSample> {
    spec.validate()?;
    if spec.drivable_mask_removal {
        Ok(counterfact_remove_drivable(sample))
    } else {
        counterfact_remove_classes(sample, spec)
    }
}
