//! Core algorithms for dynamic-to-static LiDAR scan translation: range-image
//! geometry, a synthetic box-world simulator, the translation GAN with manual
//! gradients, segmentation by subtraction, and the evaluation metric suite.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all file IO lives in
//! the companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod geom;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod model;
pub mod odom;
pub mod segment;
pub mod sensor;
pub mod train;
pub mod world;

pub use geom::{Pose, Trajectory, Vec3};
pub use model::{Model, ModelConfig};
pub use sensor::{PointCloud, RangeImage, SensorConfig};
pub use train::{TrainConfig, TrainMode};
