//! Hint-driven colour editing for short video clips.
//!
//! A user paints colours onto a 16×16 grid over one frame. The frame is
//! recoloured inside instance masks derived from those hints, and the edit is
//! then carried across the clip by DDIM inversion of the source video and
//! resampling with spatio-temporal feature injection. Evaluation metrics
//! (PSNR, SSIM, colourfulness, CDC, Fréchet distance) live in [`metrics`].
//!
//! Every model-backed stage sits behind an adapter trait. The crate ships
//! deterministic test doubles for all of them, so the whole pipeline runs on
//! a CPU without weights.

pub mod diffusion;
pub mod edit;
pub mod error;
pub mod hints;
pub mod inject;
pub mod io;
pub mod masks;
pub mod metrics;
pub mod prompts;
pub mod propagate;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
