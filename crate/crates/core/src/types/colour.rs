//! sRGB ⇄ CIE Lab (D65) conversions.
//!
//! The reference white is the image of sRGB white under the forward matrix,
//! so `(1, 1, 1)` lands on `L = 100, a = b = 0` without residual chroma.

use std::sync::LazyLock;

use ndarray::{Array2, Array3};

use super::frame::{Frame, GreyImage, Rgb};
use crate::error::Result;

const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

static XYZ_TO_RGB: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| invert3(&RGB_TO_XYZ));

static WHITE: LazyLock<[f64; 3]> = LazyLock::new(|| {
    let m = &RGB_TO_XYZ;
    [
        m[0].iter().sum(),
        m[1].iter().sum(),
        m[2].iter().sum(),
    ]
});

const DELTA: f64 = 6.0 / 29.0;

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            *v = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    inv
}

fn srgb_decode(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_encode(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA.powi(3) {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    if f > DELTA {
        f.powi(3)
    } else {
        3.0 * DELTA * DELTA * (f - 4.0 / 29.0)
    }
}

/// Converts one sRGB colour to Lab `[L, a, b]`.
pub fn srgb_to_lab(rgb: Rgb) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_decode(c as f64));
    let white = &*WHITE;
    let mut f = [0.0; 3];
    for k in 0..3 {
        let m = &RGB_TO_XYZ[k];
        let xyz = m[0] * lin[0] + m[1] * lin[1] + m[2] * lin[2];
        f[k] = lab_f(xyz / white[k]);
    }
    [
        116.0 * f[1] - 16.0,
        500.0 * (f[0] - f[1]),
        200.0 * (f[1] - f[2]),
    ]
}

/// Converts Lab back to sRGB, clamping out-of-gamut results into `[0, 1]`.
pub fn lab_to_srgb(lab: [f64; 3]) -> Rgb {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let white = &*WHITE;
    let xyz = [
        lab_f_inv(fx) * white[0],
        lab_f_inv(fy) * white[1],
        lab_f_inv(fz) * white[2],
    ];
    let m = &*XYZ_TO_RGB;
    let mut out = [0.0f32; 3];
    for k in 0..3 {
        let lin = m[k][0] * xyz[0] + m[k][1] * xyz[1] + m[k][2] * xyz[2];
        out[k] = srgb_encode(lin.clamp(0.0, 1.0)).clamp(0.0, 1.0) as f32;
    }
    out
}

/// Lab `(a, b)` chroma of a colour.
pub fn chroma(rgb: Rgb) -> [f64; 2] {
    let lab = srgb_to_lab(rgb);
    [lab[1], lab[2]]
}

/// Per-pixel Lab conversion, `(H, W, 3)` with `L ∈ [0, 100]`.
pub fn rgb_to_lab(frame: &Frame) -> Array3<f32> {
    let (h, w) = frame.dims();
    let mut out = Array3::<f32>::zeros((h, w, 3));
    for r in 0..h {
        for c in 0..w {
            let lab = srgb_to_lab(frame.pixel(r, c));
            for k in 0..3 {
                out[[r, c, k]] = lab[k] as f32;
            }
        }
    }
    out
}

/// Lab lightness rescaled to `[0, 1]`.
pub fn luminance(frame: &Frame) -> GreyImage {
    let (h, w) = frame.dims();
    Array2::from_shape_fn((h, w), |(r, c)| {
        (srgb_to_lab(frame.pixel(r, c))[0] / 100.0).clamp(0.0, 1.0) as f32
    })
}

/// Inverse of [`rgb_to_lab`]; the resulting frame has index 0.
pub fn lab_to_rgb(lab: &Array3<f32>) -> Result<Frame> {
    let (h, w, _) = lab.dim();
    Frame::from_fn(h, w, 0, |r, c| {
        lab_to_srgb([
            lab[[r, c, 0]] as f64,
            lab[[r, c, 1]] as f64,
            lab[[r, c, 2]] as f64,
        ])
    })
}
