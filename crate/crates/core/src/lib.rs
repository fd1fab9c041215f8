//! Seismic time-series super-resolution: tri-channel ground-motion records
//! are packed into RGB tiles, 17×17 decimated tiles are upscaled 8× per side
//! by an SRGAN, and reconstructions are scored against linear interpolation.

pub mod analysis;
pub mod codec;
pub mod gm_io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod training;
