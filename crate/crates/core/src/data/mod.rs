//! Synthetic driving clips, their on-disk layout and input preparation.

mod counterfact;
mod io;
mod normalize;
mod synth;

pub use counterfact::{
    apply_counterfact, counterfact_remove_classes, counterfact_remove_drivable, counterfactual_variants,
    CounterfactSpec, ObjectClass,
};
pub use io::{list_clips, load_clip, load_dataset, save_clip, ClipManifest};
pub use normalize::normalize_inputs;
pub use synth::{generate_dataset, generate_synthetic_clip, SceneSpec};

/// Semantic classes of the label maps.
pub const BACKGROUND: u8 = 0;
pub const ROAD: u8 = 1;
pub const VEHICLE: u8 = 2;
pub const PEDESTRIAN: u8 = 3;
pub const NUM_CLASSES: usize = 4;
pub const PALETTE: [&str; NUM_CLASSES] = ["background", "road", "vehicle", "pedestrian"];

/// One time step of all four streams.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// `3×H×W` in [0, 1].
    pub rgb: Vec<f64>,
    /// `2×H×W`, (dx, dy) in pixels per frame.
    pub flow: Vec<f64>,
    /// `H×W` class labels.
    pub semantic: Vec<u8>,
    /// `H×W`, 0 or 1.
    pub drivable: Vec<u8>,
}

/// `clip_len` input frames plus the target frame, with ground truth for
/// the target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSample {
    pub clip_id: u32,
    pub height: usize,
    pub width: usize,
    pub frames: Vec<Frame>,
    /// `H×W`, sums to 1.
    pub saliency: Vec<f64>,
    /// `H×W`, 0 or 1.
    pub fixations: Vec<f64>,
    /// Flow magnitude that normalizes to 1.
    pub max_speed: f64,
}

impl ClipSample {
    /// Number of input frames (the last stored frame is the target).
    pub fn clip_len(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}
