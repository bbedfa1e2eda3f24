//! Simple Linear Iterative Clustering over CIE Lab.
//!
//! Cluster centres start on a regular `rows × cols` lattice whose aspect
//! follows the frame, are nudged to the lowest-gradient pixel of their 3×3
//! neighbourhood, then refined with localized k-means using the joint
//! distance `D² = d_lab² + (d_xy / S)² · m²`. A final pass makes every
//! segment 4-connected, folding fragments smaller than a quarter of the
//! nominal segment area into the adjacent segment of closest colour.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::types::{colour::srgb_to_lab, Frame, Pixel, Rgb};

pub const DEFAULT_SEGMENTS: usize = 256;
pub const DEFAULT_COMPACTNESS: f64 = 10.0;
const MAX_ITERATIONS: usize = 10;

/// Label image plus per-segment mean colours.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    labels: Array2<u32>,
    segment_count: usize,
    mean_colours: Vec<Rgb>,
}

impl SuperpixelMap {
    pub fn labels(&self) -> &Array2<u32> {
        &self.labels
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn mean_colours(&self) -> &[Rgb] {
        &self.mean_colours
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dim()
    }

    pub fn label_at(&self, p: Pixel) -> u32 {
        self.labels[[p.row, p.col]]
    }

    pub fn colour_at(&self, p: Pixel) -> Rgb {
        self.mean_colours[self.label_at(p) as usize]
    }
}

/// Per-segment mean RGB of `frame` under `labels`.
pub fn segment_means(frame: &Frame, labels: &Array2<u32>, segment_count: usize) -> Vec<Rgb> {
    let mut sums = vec![[0.0f64; 4]; segment_count];
    for ((r, c), &l) in labels.indexed_iter() {
        let px = frame.pixel(r, c);
        let s = &mut sums[l as usize];
        for k in 0..3 {
            s[k] += px[k] as f64;
        }
        s[3] += 1.0;
    }
    sums.iter()
        .map(|s| {
            let n = s[3].max(1.0);
            [(s[0] / n) as f32, (s[1] / n) as f32, (s[2] / n) as f32]
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Centre {
    lab: [f64; 3],
    y: f64,
    x: f64,
}

fn lab_dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

pub fn compute_superpixels(
    frame: &Frame,
    n_segments: usize,
    compactness: f64,
) -> Result<SuperpixelMap> {
    if n_segments < 1 {
        return Err(invalid!("n_segments must be at least 1"));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(invalid!("compactness must be positive, got {compactness}"));
    }
    let (h, w) = frame.dims();
    if h < Frame::MIN_SIDE || w < Frame::MIN_SIDE {
        return Err(invalid!("frame {h}x{w} is smaller than 16x16"));
    }
    let n = h * w;
    let lab: Vec<[f64; 3]> = (0..n)
        .map(|i| srgb_to_lab(frame.pixel(i / w, i % w)))
        .collect();

    let k = n_segments.min(n);
    let cols = ((k as f64 * w as f64 / h as f64).sqrt().round() as usize).clamp(1, w);
    let rows = ((k as f64 / cols as f64).round() as usize).clamp(1, h);
    let step_y = h as f64 / rows as f64;
    let step_x = w as f64 / cols as f64;
    let spacing = (step_y * step_x).sqrt();
    let spatial_weight = (compactness / spacing).powi(2);
    let reach_y = step_y.ceil() as isize;
    let reach_x = step_x.ceil() as isize;

    let gradient = |y: usize, x: usize| -> f64 {
        let at = |yy: usize, xx: usize| &lab[yy * w + xx];
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
        lab_dist2(at(y, x1), at(y, x0)) + lab_dist2(at(y1, x), at(y0, x))
    };

    let mut centres: Vec<Centre> = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut cy = ((i as f64 + 0.5) * step_y) as usize;
            let mut cx = ((j as f64 + 0.5) * step_x) as usize;
            let mut best = gradient(cy, cx);
            let (oy, ox) = (cy, cx);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (yy, xx) = (oy as isize + dy, ox as isize + dx);
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    let g = gradient(yy as usize, xx as usize);
                    if g < best {
                        best = g;
                        cy = yy as usize;
                        cx = xx as usize;
                    }
                }
            }
            centres.push(Centre {
                lab: lab[cy * w + cx],
                y: cy as f64,
                x: cx as f64,
            });
        }
    }

    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..MAX_ITERATIONS {
        labels.fill(u32::MAX);
        dist.fill(f64::INFINITY);
        for (ci, c) in centres.iter().enumerate() {
            let (cy, cx) = (c.y.round() as isize, c.x.round() as isize);
            let ys = (cy - reach_y).max(0) as usize..((cy + reach_y + 1).min(h as isize)) as usize;
            for y in ys {
                let xs = (cx - reach_x).max(0) as usize..((cx + reach_x + 1).min(w as isize)) as usize;
                for x in xs {
                    let i = y * w + x;
                    let ds = (y as f64 - c.y).powi(2) + (x as f64 - c.x).powi(2);
                    let d = lab_dist2(&lab[i], &c.lab) + ds * spatial_weight;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = ci as u32;
                    }
                }
            }
        }
        // Pixels no window reached fall back to the globally nearest centre.
        for i in 0..n {
            if labels[i] != u32::MAX {
                continue;
            }
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            let (best, _) = centres
                .iter()
                .enumerate()
                .map(|(ci, c)| {
                    let ds = (y - c.y).powi(2) + (x - c.x).powi(2);
                    (ci, lab_dist2(&lab[i], &c.lab) + ds * spatial_weight)
                })
                .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
            labels[i] = best as u32;
        }

        let mut sums = vec![[0.0f64; 6]; centres.len()];
        for i in 0..n {
            let s = &mut sums[labels[i] as usize];
            s[0] += lab[i][0];
            s[1] += lab[i][1];
            s[2] += lab[i][2];
            s[3] += (i / w) as f64;
            s[4] += (i % w) as f64;
            s[5] += 1.0;
        }
        for (c, s) in centres.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                c.lab = [s[0] / s[5], s[1] / s[5], s[2] / s[5]];
                c.y = s[3] / s[5];
                c.x = s[4] / s[5];
            }
        }
    }

    let min_size = ((n / k) / 4).max(1);
    let (labels, segment_count) = enforce_connectivity(&labels, &lab, h, w, min_size);
    let labels = Array2::from_shape_vec((h, w), labels).expect("label buffer has h*w entries");
    let mean_colours = segment_means(frame, &labels, segment_count);
    Ok(SuperpixelMap {
        labels,
        segment_count,
        mean_colours,
    })
}

/// Relabels `labels` into 4-connected segments `0..count`. Components below
/// `min_size` join the already-finalized neighbour with the closest mean Lab.
fn enforce_connectivity(
    labels: &[u32],
    lab: &[[f64; 3]],
    h: usize,
    w: usize,
    min_size: usize,
) -> (Vec<u32>, usize) {
    let n = h * w;
    let mut out = vec![u32::MAX; n];
    // running (L, a, b, count) per final label
    let mut stats: Vec<[f64; 4]> = Vec::new();
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    let mut neighbours = Vec::new();

    for start in 0..n {
        if out[start] != u32::MAX {
            continue;
        }
        let original = labels[start];
        members.clear();
        neighbours.clear();
        queue.push_back(start);
        // mark in-progress pixels with a sentinel distinct from any final label
        out[start] = u32::MAX - 1;
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (y, x) = (i / w, i % w);
            let mut visit = |j: usize| {
                if out[j] == u32::MAX {
                    if labels[j] == original {
                        out[j] = u32::MAX - 1;
                        queue.push_back(j);
                    }
                } else if out[j] != u32::MAX - 1 {
                    neighbours.push(out[j]);
                }
            };
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
        }

        let mut mean = [0.0; 3];
        for &i in &members {
            for k in 0..3 {
                mean[k] += lab[i][k];
            }
        }
        mean.iter_mut().for_each(|v| *v /= members.len() as f64);

        let target = if members.len() < min_size && !neighbours.is_empty() {
            neighbours.sort_unstable();
            neighbours.dedup();
            let closest = neighbours
                .iter()
                .map(|&l| {
                    let s = &stats[l as usize];
                    let m = [s[0] / s[3], s[1] / s[3], s[2] / s[3]];
                    (l, lab_dist2(&m, &mean))
                })
                .fold((neighbours[0], f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
            closest.0
        } else {
            stats.push([0.0; 4]);
            (stats.len() - 1) as u32
        };
        let s = &mut stats[target as usize];
        for &i in &members {
            out[i] = target;
            s[0] += lab[i][0];
            s[1] += lab[i][1];
            s[2] += lab[i][2];
            s[3] += 1.0;
        }
    }
    (out, stats.len())
}
