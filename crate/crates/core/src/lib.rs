pub mod checkpoint;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod evaluate;
pub mod experiments;
pub mod format;
pub mod gating;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod report;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use params::{ParamScope, ParamStore};
pub use tensor::Tensor;
