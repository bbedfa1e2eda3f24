use std::collections::BTreeMap;

use ndarray::Zip;

use super::backend::{DiffusionBackend, FeatureHooks, NoHooks};
use super::ddim::{ddim_invert_step, ddim_step, VideoLatent};
use super::schedule::NoiseSchedule;
use super::trajectory::{CaptureHooks, LatentTrajectory};
use crate::error::{invalid, Error, Result};
use crate::inject::{InjectingHooks, InjectionPlan};
use crate::types::Frame;

pub const DEFAULT_GUIDANCE: f64 = 9.0;

/// Text conditioning for sampling with classifier-free guidance:
/// `ε = ε(negative) + scale · (ε(positive) − ε(negative))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guidance<'a> {
    pub positive: &'a str,
    pub negative: &'a str,
    pub scale: f64,
}

impl Guidance<'_> {
    /// Null text, no guidance.
    pub const NULL: Guidance<'static> = Guidance {
        positive: "",
        negative: "",
        scale: 1.0,
    };
}

fn backend_error(step: usize, e: Error) -> Error {
    match e {
        Error::Backend { .. } | Error::Plan(_) | Error::MissingFeature { .. } => e,
        other => Error::Backend {
            step,
            message: other.to_string(),
        },
    }
}

/// Encodes `frames` and inverts them step by step under the null prompt and
/// `cond` as image condition. With `capture`, every feature the backend
/// exposes is recorded under the timestep it was queried at.
pub fn ddim_invert_video(
    frames: &[Frame],
    cond: &Frame,
    backend: &dyn DiffusionBackend,
    sched: &NoiseSchedule,
    capture: bool,
) -> Result<LatentTrajectory> {
    if frames.len() != backend.frame_count() {
        return Err(invalid!(
            "clip has {} frames, backend expects {}",
            frames.len(),
            backend.frame_count()
        ));
    }
    let steps = sched.steps();
    let mut latents = Vec::with_capacity(steps + 1);
    latents.push(backend.encode(frames)?);
    let mut capture_hooks = CaptureHooks::default();
    for t in 0..steps {
        let z = &latents[t];
        let hooks: &mut dyn FeatureHooks = if capture { &mut capture_hooks } else { &mut NoHooks };
        let eps = backend
            .predict_noise(z, t + 1, cond, "", hooks)
            .map_err(|e| backend_error(t, e))?;
        let next = ddim_invert_step(z, t, &eps, sched).map_err(|e| backend_error(t, e))?;
        latents.push(next);
    }
    let features = if capture { capture_hooks.features } else { BTreeMap::new() };
    Ok(LatentTrajectory::new(latents, cond.clone(), String::new(), features))
}

/// Denoises `start` from timestep `start_step` to 0 and decodes the result.
/// When a plan is given, its features replace the backend's at the flagged
/// slots; `observer` sees the features after injection.
#[allow(clippy::too_many_arguments)]
pub fn ddim_sample_video(
    start: &VideoLatent,
    start_step: usize,
    backend: &dyn DiffusionBackend,
    sched: &NoiseSchedule,
    cond: &Frame,
    guidance: &Guidance,
    plan: Option<&InjectionPlan>,
    mut observer: Option<&mut dyn FeatureHooks>,
) -> Result<Vec<Frame>> {
    if start_step > sched.steps() {
        return Err(invalid!("start step {start_step} beyond {} steps", sched.steps()));
    }
    if !guidance.scale.is_finite() {
        return Err(invalid!("guidance scale must be finite"));
    }
    if let Some(plan) = plan {
        if plan.start_step() != start_step {
            return Err(Error::Plan(format!(
                "plan starts at {}, sampling at {start_step}",
                plan.start_step()
            )));
        }
        plan.check_hooks(&backend.hook_points())?;
    }
    let mut z = start.clone();
    for step in 0..start_step {
        let t = start_step - step;
        let mut hooks = InjectingHooks {
            plan,
            start_step,
            observer: observer.as_deref_mut(),
        };
        let eps = if guidance.scale == 1.0 {
            backend.predict_noise(&z, t, cond, guidance.positive, &mut hooks)
        } else {
            guided(backend, &z, t, cond, guidance, &mut hooks)
        }
        .map_err(|e| backend_error(step, e))?;
        z = ddim_step(&z, t, &eps, sched).map_err(|e| backend_error(step, e))?;
    }
    backend.decode(&z)
}

fn guided(
    backend: &dyn DiffusionBackend,
    z: &VideoLatent,
    t: usize,
    cond: &Frame,
    guidance: &Guidance,
    hooks: &mut dyn FeatureHooks,
) -> Result<VideoLatent> {
    let mut eps = backend.predict_noise(z, t, cond, guidance.negative, hooks)?;
    let pos = backend.predict_noise(z, t, cond, guidance.positive, hooks)?;
    let s = guidance.scale;
    Zip::from(&mut eps).and(&pos).for_each(|n, &p| *n += s * (p - *n));
    Ok(eps)
}
