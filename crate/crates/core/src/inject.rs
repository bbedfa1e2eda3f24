//! Scheduling of source-feature injection into the editing pass.
//!
//! Sampling steps are counted from the start of the editing run: step 0 is
//! the noisiest. A slot `(step, layer, kind)` is injected while `step` is
//! below the threshold for its kind, and its source is the feature the
//! source-video inversion recorded at the same timestep.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::diffusion::{Feature, FeatureHooks, HookPoint, LatentTrajectory, VideoLatent};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureKind {
    Conv,
    SpatialQk,
    TemporalQk,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Conv, FeatureKind::SpatialQk, FeatureKind::TemporalQk];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionConfig {
    /// Total sampling steps `T`.
    pub steps: usize,
    pub tau_conv: usize,
    pub tau_sa: usize,
    pub tau_ta: usize,
    /// Sampling starts from the inverted latent at `T - tau_idx`.
    pub tau_idx: usize,
    pub conv_layers: Vec<String>,
    /// Layers whose spatial and temporal attention queries/keys are injected.
    pub attn_layers: Vec<String>,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            tau_conv: 10,
            tau_sa: 10,
            tau_ta: 25,
            tau_idx: 3,
            conv_layers: vec!["decoder.1.conv".into()],
            attn_layers: (0..3).map(|i| format!("decoder.{i}.attn")).collect(),
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(invalid!("steps must be at least 1"));
        }
        for (name, v) in [
            ("tau_conv", self.tau_conv),
            ("tau_sa", self.tau_sa),
            ("tau_ta", self.tau_ta),
            ("tau_idx", self.tau_idx),
        ] {
            if v > self.steps {
                return Err(invalid!("{name} = {v} exceeds steps = {}", self.steps));
            }
        }
        Ok(())
    }

    pub fn tau(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::Conv => self.tau_conv,
            FeatureKind::SpatialQk => self.tau_sa,
            FeatureKind::TemporalQk => self.tau_ta,
        }
    }

    pub fn layers(&self, kind: FeatureKind) -> &[String] {
        match kind {
            FeatureKind::Conv => &self.conv_layers,
            FeatureKind::SpatialQk | FeatureKind::TemporalQk => &self.attn_layers,
        }
    }

    /// Timestep sampling starts from.
    pub fn start_step(&self) -> usize {
        self.steps.saturating_sub(self.tau_idx)
    }
}

/// Whether `kind` features are injected at sampling step `step`.
pub fn should_inject(step: usize, kind: FeatureKind, config: &InjectionConfig) -> bool {
    step < config.tau(kind)
}

type SlotKey = (usize, String, FeatureKind);

/// Source features bound to every flagged `(step, layer, kind)` slot.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionPlan {
    start_step: usize,
    slots: BTreeMap<SlotKey, Feature>,
}

impl InjectionPlan {
    /// A plan that injects nothing.
    pub fn empty(start_step: usize) -> Self {
        Self {
            start_step,
            slots: BTreeMap::new(),
        }
    }

    pub fn start_step(&self) -> usize {
        self.start_step
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn source(&self, step: usize, layer: &str, kind: FeatureKind) -> Option<&Feature> {
        self.slots.get(&(step, layer.to_owned(), kind))
    }

    pub fn is_flagged(&self, step: usize, layer: &str, kind: FeatureKind) -> bool {
        self.source(step, layer, kind).is_some()
    }

    pub fn slots(&self) -> impl Iterator<Item = (usize, &str, FeatureKind)> {
        self.slots.keys().map(|(s, l, k)| (*s, l.as_str(), *k))
    }

    /// Fails when the plan targets a layer the backend never reports.
    pub fn check_hooks(&self, points: &[HookPoint]) -> Result<()> {
        let known: BTreeSet<(&str, FeatureKind)> = points.iter().map(|p| (p.layer.as_str(), p.kind)).collect();
        for (_, layer, kind) in self.slots.keys() {
            if !known.contains(&(layer.as_str(), *kind)) {
                return Err(Error::Plan(format!("backend exposes no {kind:?} hook at `{layer}`")));
            }
        }
        Ok(())
    }
}

/// Binds every slot flagged by `config` to the trajectory's feature at the
/// matching timestep.
pub fn build_plan(source: &LatentTrajectory, config: &InjectionConfig) -> Result<InjectionPlan> {
    config.validate()?;
    if source.steps() != config.steps {
        return Err(Error::Plan(format!(
            "trajectory has {} steps, config expects {}",
            source.steps(),
            config.steps
        )));
    }
    let start = config.start_step();
    let mut slots = BTreeMap::new();
    for kind in FeatureKind::ALL {
        for layer in config.layers(kind) {
            for step in (0..start).filter(|s| should_inject(*s, kind, config)) {
                let feature = source.feature(start - step, layer, kind).ok_or_else(|| Error::MissingFeature {
                    step,
                    layer: layer.clone(),
                    kind,
                })?;
                slots.insert((step, layer.clone(), kind), feature.clone());
            }
        }
    }
    Ok(InjectionPlan { start_step: start, slots })
}

/// Replaces `feature` with the plan's source for this slot, if flagged.
/// Attention slots swap queries and keys only; the backend keeps its own
/// values.
pub fn apply_plan(
    plan: &InjectionPlan,
    step: usize,
    layer: &str,
    kind: FeatureKind,
    feature: &mut Feature,
) -> Result<bool> {
    let Some(source) = plan.source(step, layer, kind) else {
        return Ok(false);
    };
    if !feature.kind_matches(kind) || !source.same_shape(feature) {
        return Err(Error::Plan(format!(
            "source feature for step {step}, `{layer}` {kind:?} does not fit the editing branch"
        )));
    }
    *feature = source.clone();
    Ok(true)
}

/// `(z_{T - tau_idx}, T - tau_idx)` from the source trajectory.
pub fn select_start_latent(source: &LatentTrajectory, tau_idx: usize) -> Result<(VideoLatent, usize)> {
    let t = source
        .steps()
        .checked_sub(tau_idx)
        .ok_or_else(|| invalid!("tau_idx {tau_idx} exceeds trajectory length {}", source.steps()))?;
    let z = source.latent(t).expect("index within trajectory").clone();
    Ok((z, t))
}

/// Hook stack used while sampling: plan injection first, then an optional
/// observer that sees the features the backend will actually use.
pub(crate) struct InjectingHooks<'a, 'b> {
    pub plan: Option<&'a InjectionPlan>,
    pub start_step: usize,
    pub observer: Option<&'a mut (dyn FeatureHooks + 'b)>,
}

impl FeatureHooks for InjectingHooks<'_, '_> {
    fn visit(&mut self, timestep: usize, layer: &str, kind: FeatureKind, feature: &mut Feature) -> Result<()> {
        if let Some(plan) = self.plan {
            let step = self.start_step.checked_sub(timestep).ok_or_else(|| {
                Error::Plan(format!("timestep {timestep} lies before the start step {}", self.start_step))
            })?;
            apply_plan(plan, step, layer, kind, feature)?;
        }
        if let Some(observer) = self.observer.as_deref_mut() {
            observer.visit(timestep, layer, kind, feature)?;
        }
        Ok(())
    }
}
