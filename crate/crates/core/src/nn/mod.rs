//! Minimal differentiable network stack: convolution, residual blocks, the
//! fused model, losses, Adam, and the training loop.

pub mod adam;
pub mod conv;
pub mod loss;
pub mod model;
pub mod ops;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use conv::Conv2d;
pub use loss::{box_loss, focal_loss};
pub use model::{
    range_image_to_input, FusedModel, NetworkConfig, ParamRef, PerPointPrediction, BOX_PARAMS,
    NUM_CLASSES,
};
pub use train::{prepare_frame, train, PreparedFrame, StepLosses, TrainConfig, TrainMode, Trainer};
