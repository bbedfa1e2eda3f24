//! Synthetic scenes and clips: flat-coloured discs and rectangles on a flat
//! background, plus helpers for picking colours of equal lightness.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::types::colour::{lab_to_srgb, srgb_to_lab};
use crate::types::{Fps, Frame, Rgb, VideoClip};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disc { cy: f64, cx: f64, radius: f64 },
    Rect { top: usize, left: usize, height: usize, width: usize },
}

impl Shape {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        match *self {
            Shape::Disc { cy, cx, radius } => {
                (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2) <= radius * radius
            }
            Shape::Rect { top, left, height, width } => {
                r >= top && r < top + height && c >= left && c < left + width
            }
        }
    }

    /// A pixel well inside the shape.
    pub fn centre(&self) -> (usize, usize) {
        match *self {
            Shape::Disc { cy, cx, .. } => (cy as usize, cx as usize),
            Shape::Rect { top, left, height, width } => (top + height / 2, left + width / 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub background: Rgb,
    /// Painted in order; later shapes cover earlier ones.
    pub shapes: Vec<(Shape, Rgb)>,
}

impl Scene {
    pub fn render(&self, index: usize) -> Result<Frame> {
        Frame::from_fn(self.height, self.width, index, |r, c| {
            self.shapes
                .iter()
                .rev()
                .find(|(s, _)| s.contains(r, c))
                .map(|(_, rgb)| *rgb)
                .unwrap_or(self.background)
        })
    }
}

/// Colour with the lightness of `reference`, Lab chroma `chroma` and hue
/// angle `hue` (radians), or an error when it falls outside the sRGB gamut.
pub fn colour_at_lightness(reference: Rgb, chroma: f64, hue: f64) -> Result<Rgb> {
    let l = srgb_to_lab(reference)[0];
    let lab = [l, chroma * hue.cos(), chroma * hue.sin()];
    let rgb = lab_to_srgb(lab);
    let back = srgb_to_lab(rgb);
    let err = (0..3).map(|k| (back[k] - lab[k]).abs()).fold(0.0, f64::max);
    if err > 0.5 {
        return Err(invalid!("Lab {lab:?} is out of gamut"));
    }
    Ok(rgb)
}

/// Mid-lightness colour with moderate chroma at a random hue, guaranteed in
/// gamut.
pub fn random_colour<R: Rng>(rng: &mut R, lightness_ref: Rgb) -> Rgb {
    loop {
        let hue = rng.random_range(0.0..std::f64::consts::TAU);
        let chroma = rng.random_range(15.0..30.0);
        if let Ok(rgb) = colour_at_lightness(lightness_ref, chroma, hue) {
            return rgb;
        }
    }
}

/// Single-shape scene: a disc or rectangle big enough to keep grid cells
/// more than 20 px from its edge, on a lighter grey background.
pub fn random_scene<R: Rng>(rng: &mut R) -> Scene {
    let height = rng.random_range(128..=192usize);
    let width = rng.random_range(128..=192usize);
    let background = {
        let g = rng.random_range(0.75..0.85f32);
        [g, g, g]
    };
    let object = random_colour(rng, [0.45, 0.45, 0.45]);
    let shape = if rng.random_bool(0.5) {
        let radius = rng.random_range(40.0..(height.min(width) as f64 / 2.0 - 8.0));
        let cy = rng.random_range(radius + 4.0..height as f64 - radius - 4.0);
        let cx = rng.random_range(radius + 4.0..width as f64 - radius - 4.0);
        Shape::Disc { cy, cx, radius }
    } else {
        let h = rng.random_range(80..=height - 16);
        let w = rng.random_range(80..=width - 16);
        Shape::Rect {
            top: rng.random_range(4..=height - h - 4),
            left: rng.random_range(4..=width - w - 4),
            height: h,
            width: w,
        }
    };
    Scene {
        height,
        width,
        background,
        shapes: vec![(shape, object)],
    }
}

/// `n` frames of a disc drifting `step` pixels per frame to the right over
/// a horizontal gradient.
pub fn moving_disc_clip(n: usize, height: usize, width: usize, step: f64) -> Result<VideoClip> {
    let frames = (0..n)
        .map(|i| {
            Frame::from_fn(height, width, i, |r, c| {
                let cx = width as f64 * 0.3 + step * i as f64;
                let d = ((r as f64 - height as f64 / 2.0).powi(2) + (c as f64 - cx).powi(2)).sqrt();
                if d <= height as f64 / 4.0 {
                    [0.7, 0.25, 0.2]
                } else {
                    let g = 0.3 + 0.4 * c as f32 / width as f32;
                    [g, g, 0.5]
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(frames, Fps::default())
}
