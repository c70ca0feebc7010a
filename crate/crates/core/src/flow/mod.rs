//! Conditional masked autoregressive flow density estimator.

pub mod adam;
pub mod batch_norm;
pub mod made;
pub mod maf;
pub mod masks;
pub mod train;

pub use made::{layer_forward, MadeLayer, MadeParams};
pub use maf::{ConditionalMaf, FlowConfig, FlowGrads, Mode};
pub use masks::{build_masks, MaskSet};
pub use train::{train, train_arrays, TrainConfig, TrainReport, ValidationScore};
