//! Closed-form stand-in for a video diffusion model.
//!
//! The noise estimate is a sum of terms that are each simple enough to
//! reason about exactly:
//!
//! * a per-timestep Gaussian tensor that ignores the latent, which makes
//!   DDIM inversion followed by sampling an exact round trip;
//! * an image term `ψ_t · λ · E(cond)` with `E` the encoder applied to the
//!   conditioning frame. `ψ_t` is chosen so that every sampling step shifts
//!   the clean estimate by `λ / T` of the difference between the sampling and
//!   inversion conditions; a colour edit of the reference frame therefore
//!   reaches every frame in proportion to the number of resampled steps;
//! * an optional prompt term keyed on a hash of the text;
//! * an optional coupling `μ · r(features)` to the exposed features, which is
//!   the only place injected features can change the output.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Duration;

use ndarray::{Array2, Array3, ArrayD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::backend::{DiffusionBackend, Feature, FeatureHooks, HookPoint};
use super::ddim::VideoLatent;
use super::schedule::NoiseSchedule;
use crate::error::{invalid, Error, Result};
use crate::inject::FeatureKind;
use crate::types::Frame;

pub const LATENT_CHANNELS: usize = 4;
pub const DEFAULT_FRAMES: usize = 16;
const DECODER_BLOCKS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubConfig {
    pub frames: usize,
    pub seed: u64,
    /// Pixel block size averaged into one latent cell.
    pub downscale: usize,
    /// `λ`: fraction of the conditioning-frame difference carried into the
    /// output by a full-length resampling.
    pub image_strength: f64,
    /// Weight of the prompt-dependent term; zero makes the stub ignore text.
    pub text_strength: f64,
    /// `μ`: weight of the feature response in the noise estimate.
    pub feature_coupling: f64,
    /// Artificial latency per noise prediction.
    pub delay_ms: u64,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            frames: DEFAULT_FRAMES,
            seed: 0,
            downscale: 1,
            image_strength: 1.0,
            text_strength: 0.0,
            feature_coupling: 0.0,
            delay_ms: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalyticStub {
    config: StubConfig,
    psi: Vec<f64>,
    steps: usize,
}

impl AnalyticStub {
    /// The stub's image term is calibrated against `schedule`; sample with
    /// the same schedule.
    pub fn new(config: StubConfig, schedule: &NoiseSchedule) -> Result<Self> {
        if config.frames < 1 {
            return Err(invalid!("stub needs at least one frame"));
        }
        if config.downscale < 1 {
            return Err(invalid!("downscale must be at least 1"));
        }
        for (name, v) in [
            ("image_strength", config.image_strength),
            ("text_strength", config.text_strength),
            ("feature_coupling", config.feature_coupling),
        ] {
            if !v.is_finite() {
                return Err(invalid!("{name} must be finite"));
            }
        }
        let steps = schedule.steps();
        let sigma = |t: usize| {
            let a = schedule.alpha_bar(t);
            ((1.0 - a) / a).sqrt()
        };
        let mut psi = vec![0.0; steps + 1];
        for (t, p) in psi.iter_mut().enumerate().skip(1) {
            *p = -1.0 / (steps as f64 * (sigma(t) - sigma(t - 1)));
        }
        Ok(Self { config, psi, steps })
    }

    pub fn config(&self) -> &StubConfig {
        &self.config
    }

    fn latent_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.config.downscale;
        if !h.is_multiple_of(k) || !w.is_multiple_of(k) {
            return Err(invalid!("frame {h}x{w} is not divisible by downscale {k}"));
        }
        Ok((h / k, w / k))
    }

    /// `(C, H', W')` encoding of one frame.
    fn encode_frame(&self, frame: &Frame) -> Result<Array3<f64>> {
        let (h, w) = frame.dims();
        let (lh, lw) = self.latent_dims(h, w)?;
        let k = self.config.downscale;
        let px = frame.pixels();
        let norm = 1.0 / (k * k) as f64;
        let mut out = Array3::zeros((LATENT_CHANNELS, lh, lw));
        for y in 0..lh {
            for x in 0..lw {
                let mut rgb = [0.0f64; 3];
                for dy in 0..k {
                    for dx in 0..k {
                        for (c, v) in rgb.iter_mut().enumerate() {
                            *v += px[[y * k + dy, x * k + dx, c]] as f64;
                        }
                    }
                }
                let rgb = rgb.map(|v| v * norm);
                for c in 0..3 {
                    out[[c, y, x]] = 2.0 * rgb[c] - 1.0;
                }
                let luma = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
                out[[3, y, x]] = 2.0 * luma - 1.0;
            }
        }
        Ok(out)
    }

    fn base_noise(&self, t: usize, dim: (usize, usize, usize, usize)) -> VideoLatent {
        let seed = self
            .config
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VideoLatent::from_shape_simple_fn(dim, || StandardNormal.sample(&mut rng))
    }

    fn text_noise(&self, text: &str, dim: (usize, usize, usize)) -> Option<Array3<f64>> {
        if text.is_empty() || self.config.text_strength == 0.0 {
            return None;
        }
        let mut hasher = DefaultHasher::new();
        text.hash(&mut hasher);
        self.config.seed.hash(&mut hasher);
        let mut rng = ChaCha8Rng::seed_from_u64(hasher.finish());
        Some(Array3::from_shape_simple_fn(dim, || StandardNormal.sample(&mut rng)))
    }

    /// Visits every hook point and returns the summed `(F, C)` response.
    fn features(&self, latent: &VideoLatent, t: usize, hooks: &mut dyn FeatureHooks) -> Result<Array2<f64>> {
        let (f, c, _, _) = latent.dim();
        let mean = latent
            .mean_axis(Axis(3))
            .and_then(|a| a.mean_axis(Axis(2)))
            .expect("latent has non-empty spatial axes");
        let sq = latent
            .mapv(|v| v * v)
            .mean_axis(Axis(3))
            .and_then(|a| a.mean_axis(Axis(2)))
            .expect("latent has non-empty spatial axes");
        let centred = &mean - &mean.mean_axis(Axis(0)).expect("at least one frame");
        let mut rolled = mean.clone();
        for i in 0..f {
            rolled.row_mut((i + 1) % f).assign(&mean.row(i));
        }
        let dynamic = |a: &Array2<f64>| a.clone().into_dyn();

        let mut response = Array2::<f64>::zeros((f, c));
        let mut add = |feature: &Feature| -> Result<()> {
            let as2 = |a: &ArrayD<f64>| {
                a.view()
                    .into_dimensionality::<ndarray::Ix2>()
                    .ok()
                    .filter(|v| v.dim() == (f, c))
                    .map(|v| v.to_owned())
            };
            let r = match feature {
                Feature::Conv(x) => as2(x),
                Feature::QueryKey { query, key } => as2(query).zip(as2(key)).map(|(q, k)| q * k),
            };
            let r = r.ok_or_else(|| Error::Backend {
                step: t,
                message: "hook replaced a feature with a tensor of the wrong shape".into(),
            })?;
            response += &r;
            Ok(())
        };

        for block in 0..DECODER_BLOCKS {
            let scale = 1.0 + 0.5 * block as f64;
            let conv_name = format!("decoder.{block}.conv");
            let attn_name = format!("decoder.{block}.attn");

            let mut conv = Feature::Conv(dynamic(&(&mean * scale)));
            hooks.visit(t, &conv_name, FeatureKind::Conv, &mut conv)?;
            add(&conv)?;

            let mut spatial = Feature::QueryKey {
                query: dynamic(&(&mean * (1.0 + 0.25 * block as f64))),
                key: dynamic(&sq),
            };
            hooks.visit(t, &attn_name, FeatureKind::SpatialQk, &mut spatial)?;
            add(&spatial)?;

            let mut temporal = Feature::QueryKey {
                query: dynamic(&centred),
                key: dynamic(&rolled),
            };
            hooks.visit(t, &attn_name, FeatureKind::TemporalQk, &mut temporal)?;
            add(&temporal)?;
        }
        Ok(response)
    }
}

impl DiffusionBackend for AnalyticStub {
    fn id(&self) -> &str {
        "stub"
    }

    fn frame_count(&self) -> usize {
        self.config.frames
    }

    fn settings(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).unwrap_or_default()
    }

    fn encode(&self, frames: &[Frame]) -> Result<VideoLatent> {
        if frames.len() != self.config.frames {
            return Err(invalid!(
                "backend expects {} frames, got {}",
                self.config.frames,
                frames.len()
            ));
        }
        let (h, w) = frames[0].dims();
        if frames.iter().any(|f| f.dims() != (h, w)) {
            return Err(Error::ShapeMismatch("frames differ in size".into()));
        }
        let (lh, lw) = self.latent_dims(h, w)?;
        let mut out = VideoLatent::zeros((frames.len(), LATENT_CHANNELS, lh, lw));
        for (i, f) in frames.iter().enumerate() {
            out.index_axis_mut(Axis(0), i).assign(&self.encode_frame(f)?);
        }
        Ok(out)
    }

    fn decode(&self, latent: &VideoLatent) -> Result<Vec<Frame>> {
        let (f, c, lh, lw) = latent.dim();
        if c != LATENT_CHANNELS {
            return Err(Error::ShapeMismatch(format!("expected {LATENT_CHANNELS} channels, got {c}")));
        }
        if latent.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("decode input".into()));
        }
        let k = self.config.downscale;
        (0..f)
            .map(|i| {
                Frame::from_fn(lh * k, lw * k, i, |r, col| {
                    let (y, x) = (r / k, col / k);
                    let v = |ch: usize| (((latent[[i, ch, y, x]] + 1.0) / 2.0).clamp(0.0, 1.0)) as f32;
                    [v(0), v(1), v(2)]
                })
            })
            .collect()
    }

    fn hook_points(&self) -> Vec<HookPoint> {
        (0..DECODER_BLOCKS)
            .flat_map(|b| {
                [
                    (format!("decoder.{b}.conv"), FeatureKind::Conv),
                    (format!("decoder.{b}.attn"), FeatureKind::SpatialQk),
                    (format!("decoder.{b}.attn"), FeatureKind::TemporalQk),
                ]
            })
            .map(|(layer, kind)| HookPoint { layer, kind })
            .collect()
    }

    fn predict_noise(
        &self,
        latent: &VideoLatent,
        t: usize,
        image_cond: &Frame,
        text: &str,
        hooks: &mut dyn FeatureHooks,
    ) -> Result<VideoLatent> {
        let (f, c, lh, lw) = latent.dim();
        if f != self.config.frames || c != LATENT_CHANNELS {
            return Err(Error::Backend {
                step: t,
                message: format!("latent shape {:?} does not match the backend", latent.dim()),
            });
        }
        if t > self.steps {
            return Err(Error::Backend {
                step: t,
                message: format!("timestep beyond the {}-step schedule", self.steps),
            });
        }
        let cond = self.encode_frame(image_cond)?;
        if cond.dim() != (c, lh, lw) {
            return Err(Error::Backend {
                step: t,
                message: format!("conditioning frame {:?} does not match latent", image_cond.dims()),
            });
        }
        if self.config.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.config.delay_ms));
        }

        let response = self.features(latent, t, hooks)?;
        let psi = self.psi[t];
        let mut shift = cond * (psi * self.config.image_strength);
        if let Some(h) = self.text_noise(text, (c, lh, lw)) {
            shift.scaled_add(psi * self.config.text_strength, &h);
        }
        let mut eps = self.base_noise(t, latent.dim());
        for mut frame in eps.outer_iter_mut() {
            frame += &shift;
        }
        if self.config.feature_coupling != 0.0 {
            let mu = self.config.feature_coupling;
            for ((fi, ci), r) in response.indexed_iter() {
                eps.index_axis_mut(Axis(0), fi)
                    .index_axis_mut(Axis(0), ci)
                    .mapv_inplace(|v| v + mu * r);
            }
        }
        Ok(eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::backend::NoHooks;
    use crate::diffusion::schedule::{make_schedule, ScheduleKind};

    fn frames(n: usize) -> Vec<Frame> {
        (0..n)
            .map(|i| Frame::from_fn(16, 16, i, |r, c| [r as f32 / 15.0, c as f32 / 15.0, i as f32 / 8.0]).unwrap())
            .collect()
    }

    #[test]
    fn decode_inverts_encode() {
        let s = make_schedule(10, ScheduleKind::Linear).unwrap();
        let stub = AnalyticStub::new(StubConfig { frames: 4, ..Default::default() }, &s).unwrap();
        let fs = frames(4);
        let back = stub.decode(&stub.encode(&fs).unwrap()).unwrap();
        for (a, b) in fs.iter().zip(&back) {
            for (x, y) in a.pixels().iter().zip(b.pixels()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        assert!(stub.encode(&fs[..3]).is_err());
    }

    #[test]
    fn noise_is_deterministic_and_text_sensitive() {
        let s = make_schedule(10, ScheduleKind::Linear).unwrap();
        let cfg = StubConfig { frames: 2, text_strength: 0.1, ..Default::default() };
        let stub = AnalyticStub::new(cfg, &s).unwrap();
        let fs = frames(2);
        let z = stub.encode(&fs).unwrap();
        let a = stub.predict_noise(&z, 5, &fs[0], "red", &mut NoHooks).unwrap();
        let b = stub.predict_noise(&z, 5, &fs[0], "red", &mut NoHooks).unwrap();
        let c = stub.predict_noise(&z, 5, &fs[0], "blue", &mut NoHooks).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(stub.predict_noise(&z, 11, &fs[0], "", &mut NoHooks).is_err());
    }

    #[test]
    fn hook_points_cover_every_visit() {
        struct Seen(Vec<HookPoint>);
        impl FeatureHooks for Seen {
            fn visit(&mut self, _: usize, layer: &str, kind: FeatureKind, _: &mut Feature) -> Result<()> {
                self.0.push(HookPoint { layer: layer.into(), kind });
                Ok(())
            }
        }
        let s = make_schedule(10, ScheduleKind::Linear).unwrap();
        let stub = AnalyticStub::new(StubConfig { frames: 2, ..Default::default() }, &s).unwrap();
        let fs = frames(2);
        let z = stub.encode(&fs).unwrap();
        let mut seen = Seen(Vec::new());
        stub.predict_noise(&z, 1, &fs[0], "", &mut seen).unwrap();
        assert_eq!(seen.0, stub.hook_points());
    }
}
