use crate::error::{Error, Result};
use crate::types::Frame;

pub const DEFAULT_STRIDES: [usize; 3] = [1, 2, 4];
pub const BINS: usize = 256;

/// Normalized 256-bin histogram per RGB channel.
pub fn channel_histograms(frame: &Frame) -> [Vec<f64>; 3] {
    let mut h: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; BINS]);
    for lane in frame.pixels().rows() {
        for (ch, v) in lane.iter().enumerate() {
            let bin = (*v as f64 * 255.0).round().clamp(0.0, 255.0) as usize;
            h[ch][bin] += 1.0;
        }
    }
    let n = (frame.height() * frame.width()) as f64;
    for ch in &mut h {
        ch.iter_mut().for_each(|v| *v /= n);
    }
    h
}

/// Jensen–Shannon divergence with natural logarithms; in `[0, ln 2]`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            d += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            d += 0.5 * b * (b / m).ln();
        }
    }
    d.clamp(0.0, std::f64::consts::LN_2)
}

/// Colour distribution consistency: mean over strides of the mean JS
/// divergence between frame pairs `(i, i + stride)`. Strides not shorter
/// than the clip are skipped.
pub fn cdc(frames: &[Frame], strides: &[usize]) -> Result<f64> {
    let n = frames.len();
    if n < 2 {
        return Err(Error::Metric(format!("CDC needs at least 2 frames, got {n}")));
    }
    let hists: Vec<_> = frames.iter().map(channel_histograms).collect();
    let mut per_stride = Vec::new();
    for &s in strides {
        if s == 0 || s >= n {
            log::warn!("CDC stride {s} skipped for a clip of {n} frames");
            continue;
        }
        let total: f64 = (0..n - s)
            .map(|i| (0..3).map(|ch| js_divergence(&hists[i][ch], &hists[i + s][ch])).sum::<f64>() / 3.0)
            .sum();
        per_stride.push(total / (n - s) as f64);
    }
    if per_stride.is_empty() {
        return Err(Error::Metric(format!("no CDC stride in {strides:?} fits {n} frames")));
    }
    Ok(per_stride.iter().sum::<f64>() / per_stride.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(n: usize) -> Vec<Frame> {
        (0..n)
            .map(|f| {
                Frame::from_fn(16, 16, f, |y, x| {
                    let v = |c: usize| ((37 * f + 11 * y * y + 5 * x + 83 * c + 7 * x * y) % 256) as f32 / 255.0;
                    [v(0), v(1), v(2)]
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn reference_value() {
        let got = cdc(&pattern(4), &DEFAULT_STRIDES).unwrap();
        assert!((got - 0.33046572517260875).abs() < 1e-12, "{got}");
    }

    #[test]
    fn extremes() {
        let black = Frame::filled(16, 16, [0.0; 3]).unwrap();
        let white = Frame::filled(16, 16, [1.0; 3]).unwrap();
        assert_eq!(cdc(&[black.clone(), black.clone(), black.clone()], &DEFAULT_STRIDES).unwrap(), 0.0);
        let alt = vec![black.clone(), white.clone(), black, white];
        assert!((cdc(&alt, &[1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(cdc(&alt[..1], &[1]).is_err());
        assert!(cdc(&alt[..2], &[2, 4]).is_err());
    }
}
