//! Tools for optical flow on equirectangular 360-degree video.
//!
//! - [`sphere`]: raster, angular, sphere and catadioptric coordinates; rotations.
//! - [`warp`]: rotational warping of frames and flow fields.
//! - [`distortion`]: cube-map distortion density and density binning.
//! - [`metrics`]: EPE / AE and distortion-weighted, speed- and density-binned variants.
//! - [`viz`]: color-wheel and sphere-motion renderings of flow.
//! - [`stats`]: luminance, spectrum, derivative and flow statistics of a corpus.
//! - [`siamese`]: augmentation sampling, two-stream losses and a toy encoder.
//! - [`io`]: `.flo`, PFM, PNG and density files; dataset indexing.
//! - [`synth`]: synthetic dead-leaves 360-degree videos with exact flow.
//! - [`array`]: the same kernels over borrowed contiguous `f32` buffers.

pub mod array;
pub mod distortion;
pub mod error;
pub mod io;
pub mod metrics;
pub mod raster;
pub mod siamese;
pub mod sphere;
pub mod stats;
pub mod synth;
pub mod viz;
pub mod warp;

pub use error::{Error, Result};
pub use raster::{FlowField, Image, Interpolation};
pub use sphere::{EquirectShape, EulerAngles, Rotation3, UnitVector3};
