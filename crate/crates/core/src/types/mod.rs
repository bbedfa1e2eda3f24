//! Shared data model: frames, clips, hint grids, instance masks and the
//! colour-space conversions used by the hint pipeline.

pub mod colour;
mod frame;
mod grid;
mod instance;

pub use colour::{lab_to_rgb, luminance, rgb_to_lab};
pub use frame::{Fps, Frame, GreyImage, Pixel, Rgb, VideoClip};
pub use frame::max_abs_diff;
pub use grid::{GridCell, Hint, HintGrid, HintSource, GRID_CELLS, GRID_SIZE};
pub use instance::{InstanceMask, MaskPrompts};
