use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::Frame;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn same_shape(a: &Frame, b: &Frame) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB for pixels in `[0, 1]`; identical frames
/// give `f64::INFINITY`.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.pixels().len() as f64;
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum::<f64>()
        / n;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}

/// BT.601 luma.
pub fn luma(frame: &Frame) -> Array2<f64> {
    let (h, w) = frame.dims();
    Array2::from_shape_fn((h, w), |(r, c)| {
        let [red, g, b] = frame.pixel(r, c);
        0.299 * red as f64 + 0.587 * g as f64 + 0.114 * b as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: SSIM_WINDOW,
            sigma: SSIM_SIGMA,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

/// Mean SSIM of the luma planes over every position where the Gaussian
/// window fits entirely inside the frame.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    same_shape(a, b)?;
    ssim_planes(&luma(a), &luma(b), &SsimParams::default())
}

pub fn ssim_planes(x: &Array2<f64>, y: &Array2<f64>, p: &SsimParams) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", x.dim(), y.dim())));
    }
    let (h, w) = x.dim();
    let k = p.window;
    if k == 0 || k.is_multiple_of(2) || h < k || w < k {
        return Err(Error::Metric(format!("SSIM window {k} does not fit a {h}x{w} plane")));
    }
    let r = (k / 2) as f64;
    let g: Vec<f64> = (0..k).map(|i| (-0.5 * ((i as f64 - r) / p.sigma).powi(2)).exp()).collect();
    let total: f64 = g.iter().sum();
    let g: Vec<f64> = g.into_iter().map(|v| v / total).collect();

    let blur = |plane: &Array2<f64>| -> Array2<f64> {
        let rows: Array2<f64> = Array2::from_shape_fn((h - k + 1, w), |(i, j)| (0..k).map(|t| g[t] * plane[[i + t, j]]).sum());
        Array2::from_shape_fn((h - k + 1, w - k + 1), |(i, j)| (0..k).map(|t| g[t] * rows[[i, j + t]]).sum::<f64>())
    };
    let mx = blur(x);
    let my = blur(y);
    let sxx = blur(&(x * x)) - &mx * &mx;
    let syy = blur(&(y * y)) - &my * &my;
    let sxy = blur(&(x * y)) - &mx * &my;
    let c1 = p.k1.powi(2);
    let c2 = p.k2.powi(2);
    let map = ((2.0 * &mx * &my + c1) * (2.0 * &sxy + c2)) / ((&mx * &mx + &my * &my + c1) * (sxx + syy + c2));
    Ok(map.mean().expect("non-empty map"))
}

/// Colourfulness on 8-bit-scaled RGB: `σ_rgyb + 0.3 μ_rgyb`.
pub fn colorfulness(frame: &Frame) -> f64 {
    let n = (frame.height() * frame.width()) as f64;
    let (mut srg, mut syb, mut srg2, mut syb2) = (0.0, 0.0, 0.0, 0.0);
    for lane in frame.pixels().rows() {
        let (r, g, b) = (lane[0] as f64 * 255.0, lane[1] as f64 * 255.0, lane[2] as f64 * 255.0);
        let rg = r - g;
        let yb = 0.5 * (r + g) - b;
        srg += rg;
        syb += yb;
        srg2 += rg * rg;
        syb2 += yb * yb;
    }
    let (mrg, myb) = (srg / n, syb / n);
    let var_rg = (srg2 / n - mrg * mrg).max(0.0);
    let var_yb = (syb2 / n - myb * myb).max(0.0);
    (var_rg + var_yb).sqrt() + 0.3 * (mrg * mrg + myb * myb).sqrt()
}
