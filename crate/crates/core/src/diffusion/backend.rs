use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::ddim::VideoLatent;
use crate::error::Result;
use crate::inject::FeatureKind;
use crate::types::Frame;

/// An intermediate activation exposed to hooks during noise prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum Feature {
    /// Convolutional block output.
    Conv(ArrayD<f64>),
    /// Attention queries and keys; values are never exposed.
    QueryKey { query: ArrayD<f64>, key: ArrayD<f64> },
}

impl Feature {
    pub fn kind_matches(&self, kind: FeatureKind) -> bool {
        matches!(
            (self, kind),
            (Feature::Conv(_), FeatureKind::Conv)
                | (Feature::QueryKey { .. }, FeatureKind::SpatialQk | FeatureKind::TemporalQk)
        )
    }

    pub fn same_shape(&self, other: &Feature) -> bool {
        match (self, other) {
            (Feature::Conv(a), Feature::Conv(b)) => a.shape() == b.shape(),
            (Feature::QueryKey { query: q1, key: k1 }, Feature::QueryKey { query: q2, key: k2 }) => {
                q1.shape() == q2.shape() && k1.shape() == k2.shape()
            }
            _ => false,
        }
    }
}

/// A named layer and the feature kind it exposes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HookPoint {
    pub layer: String,
    pub kind: FeatureKind,
}

/// Receives every exposed feature during a noise prediction and may
/// overwrite it before the backend continues.
pub trait FeatureHooks {
    fn visit(&mut self, timestep: usize, layer: &str, kind: FeatureKind, feature: &mut Feature) -> Result<()>;
}

/// Hooks that leave every feature untouched.
pub struct NoHooks;

impl FeatureHooks for NoHooks {
    fn visit(&mut self, _: usize, _: &str, _: FeatureKind, _: &mut Feature) -> Result<()> {
        Ok(())
    }
}

/// Image-to-video diffusion model reached through a fixed-length latent
/// clip of `frame_count()` frames.
pub trait DiffusionBackend: Send + Sync {
    fn id(&self) -> &str;

    fn frame_count(&self) -> usize;

    /// Settings recorded in job provenance, including seeds.
    fn settings(&self) -> serde_json::Value {
        serde_json::Value::Null
    }

    fn encode(&self, frames: &[Frame]) -> Result<VideoLatent>;

    fn decode(&self, latent: &VideoLatent) -> Result<Vec<Frame>>;

    /// Every (layer, kind) pair the backend reports to hooks, in call order.
    fn hook_points(&self) -> Vec<HookPoint>;

    /// Noise estimate for `latent` at timestep `t`. An empty `text` is the
    /// null prompt.
    fn predict_noise(
        &self,
        latent: &VideoLatent,
        t: usize,
        image_cond: &Frame,
        text: &str,
        hooks: &mut dyn FeatureHooks,
    ) -> Result<VideoLatent>;
}
