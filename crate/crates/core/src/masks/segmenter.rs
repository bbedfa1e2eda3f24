use std::collections::{BTreeSet, VecDeque};

use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::types::{Frame, Pixel};

/// Point-prompted instance segmentation.
pub trait SegmenterAdapter: Send + Sync {
    fn id(&self) -> &str;

    /// Binary mask of the object indicated by `positive` and excluding the
    /// objects under `negative`. Must be deterministic.
    fn segment(&self, frame: &Frame, positive: &[Pixel], negative: &[Pixel]) -> Result<Array2<bool>>;
}

/// Flood-fill segmenter: the union of colour-connected components hit by a
/// positive point, minus any component hit by a negative point.
#[derive(Debug, Clone)]
pub struct StubSegmenter {
    /// Largest per-channel step between 4-neighbours inside one component.
    pub tolerance: f32,
}

impl Default for StubSegmenter {
    fn default() -> Self {
        Self { tolerance: 0.02 }
    }
}

/// 4-connected components of pixels whose channels differ from a neighbour
/// by at most `tolerance`. Labels are assigned in raster order.
pub fn colour_components(frame: &Frame, tolerance: f32) -> Array2<u32> {
    let (h, w) = frame.dims();
    let px = frame.pixels();
    let close = |a: (usize, usize), b: (usize, usize)| {
        (0..3).all(|k| (px[[a.0, a.1, k]] - px[[b.0, b.1, k]]).abs() <= tolerance)
    };
    let mut labels = Array2::from_elem((h, w), u32::MAX);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        let s = (start / w, start % w);
        if labels[s] != u32::MAX {
            continue;
        }
        labels[s] = next;
        queue.push_back(s);
        while let Some((r, c)) = queue.pop_front() {
            let mut neighbours = [(usize::MAX, usize::MAX); 4];
            if r > 0 {
                neighbours[0] = (r - 1, c);
            }
            if r + 1 < h {
                neighbours[1] = (r + 1, c);
            }
            if c > 0 {
                neighbours[2] = (r, c - 1);
            }
            if c + 1 < w {
                neighbours[3] = (r, c + 1);
            }
            for n in neighbours {
                if n.0 != usize::MAX && labels[n] == u32::MAX && close((r, c), n) {
                    labels[n] = next;
                    queue.push_back(n);
                }
            }
        }
        next += 1;
    }
    labels
}

impl SegmenterAdapter for StubSegmenter {
    fn id(&self) -> &str {
        "stub"
    }

    fn segment(&self, frame: &Frame, positive: &[Pixel], negative: &[Pixel]) -> Result<Array2<bool>> {
        for p in positive.iter().chain(negative) {
            if !frame.contains(*p) {
                return Err(invalid!("prompt point ({}, {}) outside the frame", p.row, p.col));
            }
        }
        let labels = colour_components(frame, self.tolerance);
        let pick = |pts: &[Pixel]| -> BTreeSet<u32> {
            pts.iter().map(|p| labels[[p.row, p.col]]).collect()
        };
        let keep = pick(positive);
        let drop = pick(negative);
        Ok(labels.mapv(|l| keep.contains(&l) && !drop.contains(&l)))
    }
}
