//! Range-view LiDAR / camera sensor fusion at desk scale.
//!
//! The pipeline: a synthetic 64-beam LiDAR and a pinhole camera observe a
//! labeled box world ([`synth`]); sweeps become five-channel range images
//! ([`rangeimage`]); LiDAR cells are projected into the camera frame and
//! camera CNN features are warped into the range view with an exact adjoint
//! ([`fusion`]); a small convolutional network consumes the fused channels
//! and predicts per-point classes and boxes ([`nn`]); detections and point
//! labels are scored with rotated-box AP and segmentation metrics ([`eval`]);
//! frames, checkpoints and reports round-trip through [`io`].
//!
//! All hot loops run data-parallel under the `parallel` feature (default) and
//! fall back to sequential code without it; both paths produce bit-identical
//! results.

pub mod config;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod nn;
pub(crate) mod parallel;
pub mod rangeimage;
pub mod synth;
pub mod tensor;
pub mod viz;

pub use error::CoreError;
