//! Clip directory layout:
//!
//! ```text
//! clip_<id>/manifest.json
//! clip_<id>/saliency.gdap
//! clip_<id>/fixations.pgm
//! clip_<id>/frame_<t>/{rgb.gdap, flow.gdap, semantic.pgm, drivable.pgm}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClipSample, Frame, PALETTE};
use crate::error::{Error, Result};
use crate::format::{read_gdap, read_pgm, write_gdap, write_pgm, GdapTensor, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipManifest {
    pub clip_id: u32,
    /// Input frames; the directory holds one more (the target).
    pub k: usize,
    pub height: usize,
    pub width: usize,
    pub palette: Vec<String>,
    pub max_speed: f64,
}

pub fn clip_dir(root: &Path, clip_id: u32) -> PathBuf {
    root.join(format!("clip_{clip_id:04}"))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn check_len(path: &Path, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("holds {got} values, expected {want}"),
        });
    }
    Ok(())
}

/// Write `sample` under `root`, returning its directory.
pub fn save_clip(root: &Path, sample: &ClipSample) -> Result<PathBuf> {
    let dir = clip_dir(root, sample.clip_id);
    mkdir(&dir)?;
    let (h, w) = (sample.height, sample.width);
    let manifest = ClipManifest {
        clip_id: sample.clip_id,
        k: sample.clip_len(),
        height: h,
        width: w,
        palette: PALETTE.iter().map(|s| s.to_string()).collect(),
        max_speed: sample.max_speed,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mpath = dir.join("manifest.json");
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    write_gdap(
        &dir.join("saliency.gdap"),
        &GdapTensor::f64(vec![h, w], sample.saliency.clone()),
    )?;
    write_pgm(
        &dir.join("fixations.pgm"),
        &GrayImage::from_unit(w, h, &sample.fixations),
    )?;
    for (t, f) in sample.frames.iter().enumerate() {
        let fd = dir.join(format!("frame_{t}"));
        mkdir(&fd)?;
        write_gdap(&fd.join("rgb.gdap"), &GdapTensor::f64(vec![3, h, w], f.rgb.clone()))?;
        write_gdap(&fd.join("flow.gdap"), &GdapTensor::f64(vec![2, h, w], f.flow.clone()))?;
        write_pgm(
            &fd.join("semantic.pgm"),
            &GrayImage {
                width: w,
                height: h,
                pixels: f.semantic.clone(),
            },
        )?;
        write_pgm(
            &fd.join("drivable.pgm"),
            &GrayImage {
                width: w,
                height: h,
                pixels: f.drivable.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect(),
            },
        )?;
    }
    Ok(dir)
}

fn read_map(path: &Path, h: usize, w: usize) -> Result<GrayImage> {
    let img = read_pgm(path)?;
    if img.width != w || img.height != h {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("image is {}×{}, expected {}×{}", img.width, img.height, w, h),
        });
    }
    Ok(img)
}

fn read_tensor(path: &Path, shape: &[usize]) -> Result<Vec<f64>> {
    let t = read_gdap(path)?;
    if t.shape != shape {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("shape {:?}, expected {:?}", t.shape, shape),
        });
    }
    check_len(path, t.data.len(), shape.iter().product())?;
    Ok(t.data)
}

/// Read one clip directory.
pub fn load_clip(dir: &Path) -> Result<ClipSample> {
    let mpath = dir.join("manifest.json");
    let text = match fs::read_to_string(&mpath) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(mpath)),
        Err(e) => return Err(Error::io(&mpath, e)),
    };
    let m: ClipManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: mpath.clone(),
        reason: e.to_string(),
    })?;
    let (h, w) = (m.height, m.width);
    let saliency = read_tensor(&dir.join("saliency.gdap"), &[h, w])?;
    let fixations = read_map(&dir.join("fixations.pgm"), h, w)?
        .pixels
        .iter()
        .map(|&p| f64::from(u8::from(p >= 128)))
        .collect();
    let frames = (0..=m.k)
        .map(|t| {
            let fd = dir.join(format!("frame_{t}"));
            Ok(Frame {
                rgb: read_tensor(&fd.join("rgb.gdap"), &[3, h, w])?,
                flow: read_tensor(&fd.join("flow.gdap"), &[2, h, w])?,
                semantic: read_map(&fd.join("semantic.pgm"), h, w)?.pixels,
                drivable: read_map(&fd.join("drivable.pgm"), h, w)?
                    .pixels
                    .iter()
                    .map(|&p| u8::from(p >= 128))
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClipSample {
        clip_id: m.clip_id,
        height: h,
        width: w,
        frames,
        saliency,
        fixations,
        max_speed: m.max_speed,
    })
}

/// Clip directories under `root`, sorted by name.
pub fn list_clips(root: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(root).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(root.to_path_buf()),
        _ => Error::io(root, e),
    })?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        let is_clip = path.is_dir()
            && path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("clip_"));
        if is_clip {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn load_dataset(root: &Path) -> Result<Vec<ClipSample>> {
    let dirs = list_clips(root)?;
    if dirs.is_empty() {
        return Err(Error::Input(format!("no clip_* directories under {}", root.display())));
    }
    dirs.iter().map(|d| load_clip(d)).collect()
}
