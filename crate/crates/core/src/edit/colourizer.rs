use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::hints::cell_center;
use crate::types::colour::{lab_to_srgb, srgb_to_lab};
use crate::types::{Frame, GreyImage, HintGrid, Pixel};

/// Hint-conditioned colourization of a greyscale frame.
pub trait ColourizerAdapter: Send + Sync {
    fn id(&self) -> &str;

    /// `luminance` holds Lab lightness scaled to `[0, 1]`.
    fn colourize(&self, luminance: &GreyImage, hints: &HintGrid) -> Result<Frame>;
}

/// Keeps each pixel's lightness and borrows the Lab chroma of the nearest
/// hint whose cell centre lies in the same luminance-connected component.
/// Pixels of components without hints fall back to the globally nearest
/// hint; with no hints at all the output is grey.
#[derive(Debug, Clone)]
pub struct StubColourizer {
    /// Largest lightness step (on the `[0, 1]` scale) between 4-neighbours
    /// of one component.
    pub tolerance: f32,
}

impl Default for StubColourizer {
    fn default() -> Self {
        Self { tolerance: 0.01 }
    }
}

fn luminance_components(lum: &GreyImage, tolerance: f32) -> Array2<u32> {
    let (h, w) = lum.dim();
    let mut labels = Array2::from_elem((h, w), u32::MAX);
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        let s = (start / w, start % w);
        if labels[s] != u32::MAX {
            continue;
        }
        labels[s] = next;
        queue.push_back(s);
        while let Some((r, c)) = queue.pop_front() {
            let v = lum[[r, c]];
            let candidates = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            for n in candidates {
                if n.0 < h && n.1 < w && labels[n] == u32::MAX && (lum[n] - v).abs() <= tolerance {
                    labels[n] = next;
                    queue.push_back(n);
                }
            }
        }
        next += 1;
    }
    labels
}

struct Anchor {
    at: Pixel,
    component: u32,
    chroma: [f64; 2],
}

impl ColourizerAdapter for StubColourizer {
    fn id(&self) -> &str {
        "stub"
    }

    fn colourize(&self, luminance: &GreyImage, hints: &HintGrid) -> Result<Frame> {
        let (h, w) = luminance.dim();
        if luminance.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid!("luminance outside [0, 1]"));
        }
        let labels = luminance_components(luminance, self.tolerance);
        let anchors: Vec<Anchor> = hints
            .occupied()
            .map(|(cell, hint)| {
                let at = cell_center(cell, h, w);
                let lab = srgb_to_lab(hint.rgb);
                Anchor {
                    at,
                    component: labels[[at.row, at.col]],
                    chroma: [lab[1], lab[2]],
                }
            })
            .collect();

        Frame::from_fn(h, w, 0, |r, c| {
            let here = Pixel::new(r, c);
            let comp = labels[[r, c]];
            let nearest = |same: bool| {
                anchors
                    .iter()
                    .filter(|a| !same || a.component == comp)
                    .map(|a| (a, a.at.distance(&here)))
                    .fold(None::<(&Anchor, f64)>, |best, cur| match best {
                        Some(b) if b.1 <= cur.1 => Some(b),
                        _ => Some(cur),
                    })
                    .map(|(a, _)| a.chroma)
            };
            let chroma = nearest(true).or_else(|| nearest(false)).unwrap_or([0.0, 0.0]);
            lab_to_srgb([luminance[[r, c]] as f64 * 100.0, chroma[0], chroma[1]])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{luminance, GridCell, HintSource};

    #[test]
    fn no_hints_gives_grey() {
        let f = Frame::filled(32, 32, [0.7, 0.2, 0.1]).unwrap();
        let out = StubColourizer::default()
            .colourize(&luminance(&f), &HintGrid::empty(HintSource::Refined))
            .unwrap();
        let px = out.pixel(5, 5);
        assert!((px[0] - px[1]).abs() < 2e-3 && (px[1] - px[2]).abs() < 2e-3);
    }

    #[test]
    fn hint_colour_of_same_lightness_is_reproduced() {
        let colour = [0.3, 0.6, 0.4];
        let f = Frame::filled(32, 32, colour).unwrap();
        let mut g = HintGrid::empty(HintSource::Refined);
        g.set(GridCell::new(4, 4).unwrap(), colour).unwrap();
        let out = StubColourizer::default().colourize(&luminance(&f), &g).unwrap();
        for (a, b) in out.pixels().iter().zip(f.pixels()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }
}
