//! Adapter selection from `DC_*` environment variables. This build ships
//! only the stub implementations.

use std::sync::Arc;

use vidtint::diffusion::{AnalyticStub, DiffusionBackend, NoiseSchedule, StubConfig};
use vidtint::edit::{ColourizerAdapter, StubColourizer};
use vidtint::masks::{SegmenterAdapter, StubSegmenter};
use vidtint::metrics::{FeatureExtractorAdapter, LpipsAdapter, StubExtractor, StubLpips};
use vidtint::prompts::{CaptionerAdapter, StubCaptioner};
use vidtint::{Error, Result};

pub const ENV_BACKEND: &str = "DC_BACKEND";
pub const ENV_SEGMENTER: &str = "DC_SEGMENTER";
pub const ENV_COLOURIZER: &str = "DC_COLOURIZER";
pub const ENV_CAPTIONER: &str = "DC_CAPTIONER";
pub const ENV_STUB_FRAMES: &str = "DC_STUB_FRAMES";
pub const ENV_STUB_DELAY_MS: &str = "DC_STUB_DELAY_MS";

/// Prompt weight of the service's stub backend. Nonzero so that prompt
/// ablations change the output.
pub const STUB_TEXT_STRENGTH: f64 = 0.005;

#[derive(Clone)]
pub struct Adapters {
    pub segmenter: Arc<dyn SegmenterAdapter>,
    pub colourizer: Arc<dyn ColourizerAdapter>,
    pub captioner: Arc<dyn CaptionerAdapter>,
    pub extractor: Arc<dyn FeatureExtractorAdapter>,
    pub lpips: Arc<dyn LpipsAdapter>,
    pub stub: StubConfig,
}

fn choose(var: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<()> {
    match lookup(var).as_deref().map(str::trim) {
        None | Some("") | Some("stub") => Ok(()),
        Some(other) => Err(Error::AdapterUnavailable(format!("{var}={other}"))),
    }
}

fn number<T: std::str::FromStr>(var: &str, lookup: &dyn Fn(&str) -> Option<String>, default: T) -> Result<T> {
    match lookup(var) {
        None => Ok(default),
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{var} must be a number, got `{v}`"))),
    }
}

impl Adapters {
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(&|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self> {
        for var in [ENV_BACKEND, ENV_SEGMENTER, ENV_COLOURIZER, ENV_CAPTIONER] {
            choose(var, lookup)?;
        }
        let stub = StubConfig {
            frames: number(ENV_STUB_FRAMES, lookup, StubConfig::default().frames)?,
            delay_ms: number(ENV_STUB_DELAY_MS, lookup, 0)?,
            text_strength: STUB_TEXT_STRENGTH,
            ..Default::default()
        };
        Ok(Self {
            segmenter: Arc::new(StubSegmenter::default()),
            colourizer: Arc::new(StubColourizer::default()),
            captioner: Arc::new(StubCaptioner::default()),
            extractor: Arc::new(StubExtractor),
            lpips: Arc::new(StubLpips),
            stub,
        })
    }

    /// Backends are calibrated against the schedule they sample with.
    pub fn backend(&self, schedule: &NoiseSchedule) -> Result<Box<dyn DiffusionBackend>> {
        Ok(Box::new(AnalyticStub::new(self.stub.clone(), schedule)?))
    }

    pub fn identities(&self) -> [(&'static str, String); 4] {
        [
            ("segmenter", self.segmenter.id().to_owned()),
            ("colourizer", self.colourizer.id().to_owned()),
            ("captioner", self.captioner.id().to_owned()),
            ("extractor", self.extractor.id().to_owned()),
        ]
    }
}
