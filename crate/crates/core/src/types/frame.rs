use std::fmt;

use ndarray::{Array2, Array3, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Linear-light-agnostic sRGB triple with channels in `[0, 1]`.
pub type Rgb = [f32; 3];

/// Single-channel image, one value per pixel.
pub type GreyImage = Array2<f32>;

/// A pixel coordinate, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }
}

/// One RGB frame of a clip. Pixel values are stored as `f32` in `[0, 1]`,
/// laid out `(height, width, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pixels: Array3<f32>,
    index: usize,
}

impl Frame {
    pub const MIN_SIDE: usize = 16;

    pub fn new(pixels: Array3<f32>, index: usize) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if c != 3 {
            return Err(invalid!("frame must have 3 channels, got {c}"));
        }
        if h < Self::MIN_SIDE || w < Self::MIN_SIDE {
            return Err(invalid!(
                "frame is {h}x{w}, minimum is {}x{}",
                Self::MIN_SIDE,
                Self::MIN_SIDE
            ));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid!("pixel value {v} outside [0, 1]"));
        }
        Ok(Self { pixels, index })
    }

    /// Builds a frame clamping every channel into `[0, 1]`. Non-finite
    /// values are rejected.
    pub fn from_clamped(mut pixels: Array3<f32>, index: usize) -> Result<Self> {
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("frame pixels".into()));
        }
        pixels.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Self::new(pixels, index)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        index: usize,
        mut f: impl FnMut(usize, usize) -> Rgb,
    ) -> Result<Self> {
        let mut pixels = Array3::<f32>::zeros((height, width, 3));
        for r in 0..height {
            for c in 0..width {
                let rgb = f(r, c);
                for (k, v) in rgb.into_iter().enumerate() {
                    pixels[[r, c, k]] = v;
                }
            }
        }
        Self::new(pixels, index)
    }

    pub fn filled(height: usize, width: usize, rgb: Rgb) -> Result<Self> {
        Self::from_fn(height, width, 0, |_, _| rgb)
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn pixels(&self) -> &Array3<f32> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array3<f32> {
        self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        [
            self.pixels[[row, col, 0]],
            self.pixels[[row, col, 1]],
            self.pixels[[row, col, 2]],
        ]
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.row < self.height() && p.col < self.width()
    }

    /// Iterates `(row, col, rgb)` in row-major order.
    pub fn iter_pixels(&self) -> impl Iterator<Item = (usize, usize, ArrayView1<'_, f32>)> {
        let w = self.width();
        self.pixels
            .lanes(Axis(2))
            .into_iter()
            .enumerate()
            .map(move |(i, lane)| (i / w, i % w, lane))
    }
}

/// Frames-per-second as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Fps {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(invalid!("fps must be positive, got {num}/{den}"));
        }
        Ok(Self { num, den })
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Parses `24` or `30000/1001`.
impl std::str::FromStr for Fps {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid!("fps must look like `24` or `30000/1001`, got `{s}`");
        let (num, den) = s.trim().split_once('/').unwrap_or((s.trim(), "1"));
        Fps::new(num.trim().parse().map_err(|_| bad())?, den.trim().parse().map_err(|_| bad())?)
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Default for Fps {
    fn default() -> Self {
        Self { num: 8, den: 1 }
    }
}

/// An ordered clip of at least two equally sized frames. Frame indices are
/// rewritten to `0..N` on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: Vec<Frame>,
    fps: Fps,
}

impl VideoClip {
    pub fn new(frames: Vec<Frame>, fps: Fps) -> Result<Self> {
        if frames.len() < 2 {
            return Err(invalid!("a clip needs at least 2 frames, got {}", frames.len()));
        }
        let dims = frames[0].dims();
        if let Some(f) = frames.iter().find(|f| f.dims() != dims) {
            return Err(Error::ShapeMismatch(format!(
                "frame {} is {:?}, clip is {:?}",
                f.index(),
                f.dims(),
                dims
            )));
        }
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| f.with_index(i))
            .collect();
        Ok(Self { frames, fps })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn fps(&self) -> Fps {
        self.fps
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> Option<&Frame> {
        self.frames.get(i)
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    /// Largest per-channel absolute difference between two clips.
    pub fn max_abs_diff(&self, other: &VideoClip) -> Result<f32> {
        max_abs_diff(&self.frames, &other.frames)
    }
}

/// Largest per-channel absolute difference between two frame sequences.
pub fn max_abs_diff(a: &[Frame], b: &[Frame]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} frames vs {} frames",
            a.len(),
            b.len()
        )));
    }
    let mut worst = 0.0f32;
    for (fa, fb) in a.iter().zip(b) {
        if fa.dims() != fb.dims() {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", fa.dims(), fb.dims())));
        }
        for (x, y) in fa.pixels().iter().zip(fb.pixels()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fps_parsing() {
        assert_eq!("24".parse::<Fps>().unwrap(), Fps::new(24, 1).unwrap());
        let ntsc: Fps = " 30000/1001 ".parse().unwrap();
        assert_eq!(ntsc.to_string(), "30000/1001");
        for bad in ["", "0", "3/0", "x/2", "-4"] {
            assert!(bad.parse::<Fps>().is_err(), "{bad}");
        }
    }

    #[test]
    fn rejects_small_and_out_of_range() {
        assert!(Frame::filled(15, 32, [0.0; 3]).is_err());
        assert!(Frame::filled(16, 16, [1.5, 0.0, 0.0]).is_err());
        assert!(Frame::filled(16, 16, [0.5; 3]).is_ok());
    }

    #[test]
    fn clamps_at_the_boundary() {
        let px = Array3::from_elem((16, 16, 3), 1.2f32);
        let f = Frame::from_clamped(px, 0).unwrap();
        assert_eq!(f.pixel(3, 3), [1.0; 3]);
        let nan = Array3::from_elem((16, 16, 3), f32::NAN);
        assert!(matches!(Frame::from_clamped(nan, 0), Err(Error::Numeric(_))));
    }

    #[test]
    fn clip_reindexes_and_checks_shape() {
        let a = Frame::filled(16, 16, [0.1; 3]).unwrap().with_index(7);
        let b = Frame::filled(16, 16, [0.2; 3]).unwrap().with_index(3);
        let clip = VideoClip::new(vec![a.clone(), b], Fps::default()).unwrap();
        assert_eq!(clip.frames()[0].index(), 0);
        assert_eq!(clip.frames()[1].index(), 1);
        assert!(VideoClip::new(vec![a.clone()], Fps::default()).is_err());
        let c = Frame::filled(16, 20, [0.1; 3]).unwrap();
        assert!(VideoClip::new(vec![a, c], Fps::default()).is_err());
    }
}
