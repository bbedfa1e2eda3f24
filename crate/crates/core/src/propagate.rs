//! Propagation of an edited frame through a clip: first-frame,
//! intermediate-frame (bidirectional) and two-frame blending.
//!
//! Every backend call works on exactly `F = backend.frame_count()` frames.
//! Shorter sub-clips are padded by repeating their last frame and the
//! padding is dropped afterwards. Longer clips run in windows of `F` frames
//! overlapping by one; each window after the first uses the previous
//! window's output for its first frame as the reference.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::thread;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    ddim_invert_video, ddim_sample_video, DiffusionBackend, Guidance, NoiseSchedule, DEFAULT_GUIDANCE,
};
use crate::error::{invalid, Error, Result};
use crate::inject::{build_plan, select_start_latent, InjectionConfig};
use crate::prompts::{PromptSet, BLEND_PROMPT};
use crate::types::{Frame, VideoClip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PropagationMode {
    First,
    Intermediate,
    Multi,
}

impl fmt::Display for PropagationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PropagationMode::First => "first",
            PropagationMode::Intermediate => "intermediate",
            PropagationMode::Multi => "multi",
        })
    }
}

impl FromStr for PropagationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "first" => Ok(PropagationMode::First),
            "intermediate" => Ok(PropagationMode::Intermediate),
            "multi" => Ok(PropagationMode::Multi),
            _ => Err(invalid!("unknown propagation mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    #[serde(flatten)]
    pub injection: InjectionConfig,
    pub guidance_scale: f64,
    /// Replace the linear blend with a hard switch at the midpoint.
    pub ablate_weighted_sum: bool,
    /// Resample the blended clip without the blend prompt.
    pub ablate_blend_prompt: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            injection: InjectionConfig::default(),
            guidance_scale: DEFAULT_GUIDANCE,
            ablate_weighted_sum: false,
            ablate_blend_prompt: false,
        }
    }
}

/// A clip with its edited frames. Edits are `(frame index, edited frame)`.
#[derive(Debug, Clone)]
pub struct PropagationJob {
    pub clip: VideoClip,
    pub edits: Vec<(usize, Frame)>,
    pub mode: PropagationMode,
    pub config: PropagationConfig,
    pub prompts: PromptSet,
}

impl PropagationJob {
    pub fn validate(&self) -> Result<()> {
        let n = self.clip.len();
        let dims = self.clip.dims();
        for (i, f) in &self.edits {
            if *i >= n {
                return Err(invalid!("edit at frame {i} outside clip of {n} frames"));
            }
            if f.dims() != dims {
                return Err(Error::ShapeMismatch(format!(
                    "edited frame {i} is {:?}, clip is {dims:?}",
                    f.dims()
                )));
            }
        }
        let indices: Vec<usize> = self.edits.iter().map(|(i, _)| *i).collect();
        match (self.mode, indices.as_slice()) {
            (PropagationMode::First, [0]) => Ok(()),
            (PropagationMode::First, _) => Err(invalid!("FIRST needs exactly one edit at frame 0")),
            (PropagationMode::Intermediate, [_]) => Ok(()),
            (PropagationMode::Intermediate, _) => Err(invalid!("INTERMEDIATE needs exactly one edit")),
            (PropagationMode::Multi, [a, b]) if a < b => Ok(()),
            (PropagationMode::Multi, _) => Err(invalid!("MULTI needs two edits at frames a < b")),
        }
    }
}

/// Frames `m..N` in order (forward) or `m..=0` in reverse (backward), with
/// the source index of every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsequence {
    pub frames: Vec<Frame>,
    pub source_indices: Vec<usize>,
}

impl Subsequence {
    fn take(frames: &[Frame], indices: Vec<usize>) -> Self {
        Self {
            frames: indices.iter().map(|&i| frames[i].clone()).collect(),
            source_indices: indices,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn split_for_intermediate(frames: &[Frame], m: usize) -> Result<(Subsequence, Subsequence)> {
    let n = frames.len();
    if m >= n {
        return Err(invalid!("split index {m} outside clip of {n} frames"));
    }
    let forward = Subsequence::take(frames, (m..n).collect());
    let backward = Subsequence::take(frames, (0..=m).rev().collect());
    Ok((forward, backward))
}

/// Per-frame `(w_a, w_b)` for blending two propagated clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendWeights {
    pub a: usize,
    pub b: usize,
    pub weights: Vec<(f64, f64)>,
}

impl BlendWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<(f64, f64)> {
        self.weights.get(i).copied()
    }
}

pub fn compute_blend_weights(n: usize, a: usize, b: usize) -> Result<BlendWeights> {
    if a >= b {
        return Err(invalid!("blend anchors must satisfy a < b, got a={a}, b={b}"));
    }
    if b >= n {
        return Err(invalid!("blend anchor {b} outside clip of {n} frames"));
    }
    let span = (b - a) as f64;
    let weights = (0..n)
        .map(|i| {
            if i <= a {
                (1.0, 0.0)
            } else if i >= b {
                (0.0, 1.0)
            } else {
                ((b - i) as f64 / span, (i - a) as f64 / span)
            }
        })
        .collect();
    Ok(BlendWeights { a, b, weights })
}

/// One backend-sized run of the two pathways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub label: String,
    /// Source frame indices covered, in processing order.
    pub frames: Vec<usize>,
    pub padding: usize,
    pub start_step: usize,
    pub injected_slots: usize,
    pub positive: String,
    pub negative: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub format: String,
    pub mode: PropagationMode,
    pub frames: usize,
    pub edit_indices: Vec<usize>,
    pub config: PropagationConfig,
    pub prompts: PromptSet,
    /// Adapter identities by role.
    pub adapters: BTreeMap<String, String>,
    pub backend_settings: serde_json::Value,
    pub windows: Vec<WindowRecord>,
}

pub const PROVENANCE_FORMAT: &str = "propagation-provenance/1";

/// Intermediate results of a MULTI job.
#[derive(Debug, Clone)]
pub struct MultiStages {
    pub result_a: Vec<Frame>,
    pub result_b: Vec<Frame>,
    pub blended: Vec<Frame>,
    pub weights: BlendWeights,
}

#[derive(Debug, Clone)]
pub struct PropagationOutput {
    pub clip: VideoClip,
    pub provenance: Provenance,
    pub stages: Option<MultiStages>,
}

type Run = (Vec<Frame>, Vec<WindowRecord>);

/// Binds a backend, its noise schedule and a configuration.
pub struct Propagator<'a> {
    backend: &'a dyn DiffusionBackend,
    schedule: &'a NoiseSchedule,
    config: PropagationConfig,
}

impl<'a> Propagator<'a> {
    pub fn new(backend: &'a dyn DiffusionBackend, schedule: &'a NoiseSchedule, config: PropagationConfig) -> Result<Self> {
        config.injection.validate()?;
        if schedule.steps() != config.injection.steps {
            return Err(invalid!(
                "schedule has {} steps, config expects {}",
                schedule.steps(),
                config.injection.steps
            ));
        }
        if !config.guidance_scale.is_finite() {
            return Err(invalid!("guidance scale must be finite"));
        }
        if backend.frame_count() < 2 {
            return Err(invalid!("backend must process at least 2 frames"));
        }
        Ok(Self {
            backend,
            schedule,
            config,
        })
    }

    pub fn config(&self) -> &PropagationConfig {
        &self.config
    }

    fn window(&self, frames: &[Frame], sources: &[usize], reference: &Frame, text: (&str, &str), label: &str) -> Result<Run> {
        let f = self.backend.frame_count();
        let n = frames.len();
        debug_assert!(n >= 1 && n <= f);
        let mut padded = frames.to_vec();
        padded.resize(f, frames[n - 1].clone());

        let primary = ddim_invert_video(&padded, &frames[0], self.backend, self.schedule, true)
            .map_err(|e| e.tagged("primary pathway"))?;
        let secondary = |e: Error| e.tagged("secondary pathway");
        let plan = build_plan(&primary, &self.config.injection).map_err(secondary)?;
        let (start, start_step) = select_start_latent(&primary, self.config.injection.tau_idx).map_err(secondary)?;
        let guidance = Guidance {
            positive: text.0,
            negative: text.1,
            scale: self.config.guidance_scale,
        };
        let mut out = ddim_sample_video(
            &start,
            start_step,
            self.backend,
            self.schedule,
            reference,
            &guidance,
            Some(&plan),
            None,
        )
        .map_err(secondary)?;
        out.truncate(n);
        let out = out.into_iter().zip(sources).map(|(f, &i)| f.with_index(i)).collect();
        let record = WindowRecord {
            label: label.to_owned(),
            frames: sources.to_vec(),
            padding: f - n,
            start_step,
            injected_slots: plan.len(),
            positive: text.0.to_owned(),
            negative: text.1.to_owned(),
        };
        Ok((out, vec![record]))
    }

    fn first_frame(&self, seq: &Subsequence, edited: &Frame, text: (&str, &str), label: &str) -> Result<Run> {
        let n = seq.len();
        if n == 0 {
            return Err(invalid!("cannot propagate an empty clip"));
        }
        if edited.dims() != seq.frames[0].dims() {
            return Err(Error::ShapeMismatch(format!(
                "edited frame is {:?}, clip is {:?}",
                edited.dims(),
                seq.frames[0].dims()
            )));
        }
        let f = self.backend.frame_count();
        let mut out: Vec<Frame> = Vec::with_capacity(n);
        let mut records = Vec::new();
        let mut start = 0;
        loop {
            let end = (start + f).min(n);
            let reference = if start == 0 { edited.clone() } else { out[start].clone() };
            let (frames, mut rec) = self.window(
                &seq.frames[start..end],
                &seq.source_indices[start..end],
                &reference,
                text,
                label,
            )?;
            let skip = usize::from(start > 0);
            out.extend(frames.into_iter().skip(skip));
            records.append(&mut rec);
            if end == n {
                break;
            }
            start = end - 1;
        }
        Ok((out, records))
    }

    fn intermediate(&self, frames: &[Frame], m: usize, edited: &Frame, text: (&str, &str), label: &str) -> Result<Run> {
        let (forward, backward) = split_for_intermediate(frames, m)?;
        let fwd_label = format!("{label}forward");
        let tag = |dir: &str| {
            let prefix = label.to_owned();
            let dir = dir.to_owned();
            move |e: Error| e.tagged(format!("{prefix}{dir} direction"))
        };
        if m == 0 {
            return self.first_frame(&forward, edited, text, &fwd_label).map_err(tag("forward"));
        }
        let bwd_label = format!("{label}backward");
        let (fwd, bwd) = thread::scope(|s| {
            let handle = s.spawn(|| self.first_frame(&backward, edited, text, &bwd_label));
            let fwd = self.first_frame(&forward, edited, text, &fwd_label);
            (fwd, handle.join().expect("backward propagation panicked"))
        });
        let (fwd, mut fwd_rec) = fwd.map_err(tag("forward"))?;
        let (bwd, mut records) = bwd.map_err(tag("backward"))?;
        let mut out: Vec<Frame> = bwd.into_iter().rev().take(m).collect();
        out.extend(fwd);
        records.append(&mut fwd_rec);
        Ok((out, records))
    }

    /// Edits the first frame's colours into the whole clip.
    pub fn propagate_first_frame(&self, clip: &VideoClip, edited: &Frame, prompts: &PromptSet) -> Result<PropagationOutput> {
        let seq = Subsequence::take(clip.frames(), (0..clip.len()).collect());
        let (frames, windows) = self.first_frame(&seq, edited, (&prompts.positive, &prompts.negative), "")?;
        self.finish(clip, frames, PropagationMode::First, vec![0], prompts, windows, None)
    }

    /// Propagates an edit of frame `m` forwards and backwards in time.
    pub fn propagate_intermediate_frame(
        &self,
        clip: &VideoClip,
        m: usize,
        edited: &Frame,
        prompts: &PromptSet,
    ) -> Result<PropagationOutput> {
        let (frames, windows) = self.intermediate(clip.frames(), m, edited, (&prompts.positive, &prompts.negative), "")?;
        self.finish(clip, frames, PropagationMode::Intermediate, vec![m], prompts, windows, None)
    }

    /// Propagates edits of frames `a < b` separately, blends the results
    /// with per-frame weights and resamples the blend.
    pub fn blend_multi_frame(
        &self,
        clip: &VideoClip,
        (a, edit_a): (usize, &Frame),
        (b, edit_b): (usize, &Frame),
        prompts: &PromptSet,
    ) -> Result<PropagationOutput> {
        let weights = compute_blend_weights(clip.len(), a, b)?;
        let text = (prompts.positive.as_str(), prompts.negative.as_str());
        let (ra, rb) = thread::scope(|s| {
            let hb = s.spawn(|| self.intermediate(clip.frames(), b, edit_b, text, "b/"));
            let ra = self.intermediate(clip.frames(), a, edit_a, text, "a/");
            (ra, hb.join().expect("branch b panicked"))
        });
        let (result_a, mut windows) = ra.map_err(|e| e.tagged("branch a"))?;
        let (result_b, mut wb) = rb.map_err(|e| e.tagged("branch b"))?;
        windows.append(&mut wb);

        let blended = result_a
            .iter()
            .zip(&result_b)
            .zip(&weights.weights)
            .map(|((fa, fb), &(wa, wb))| {
                if self.config.ablate_weighted_sum {
                    return Ok(if wa >= 0.5 { fa.clone() } else { fb.clone() });
                }
                let mut px = fa.pixels().clone();
                Zip::from(&mut px)
                    .and(fb.pixels())
                    .for_each(|x, &y| *x = (wa as f32) * *x + (wb as f32) * y);
                Frame::from_clamped(px, fa.index())
            })
            .collect::<Result<Vec<_>>>()?;

        let positive = if self.config.ablate_blend_prompt {
            prompts.positive.clone()
        } else {
            let mut p = prompts.clone();
            p.blend.get_or_insert_with(|| BLEND_PROMPT.to_owned());
            p.positive_with_blend()
        };
        let seq = Subsequence {
            frames: blended.clone(),
            source_indices: (0..clip.len()).collect(),
        };
        let (frames, mut wf) = self
            .first_frame(&seq, &blended[0], (&positive, &prompts.negative), "blend")
            .map_err(|e| e.tagged("blend resampling"))?;
        windows.append(&mut wf);
        let stages = MultiStages {
            result_a,
            result_b,
            blended,
            weights,
        };
        self.finish(clip, frames, PropagationMode::Multi, vec![a, b], prompts, windows, Some(stages))
    }

    pub fn run(&self, job: &PropagationJob) -> Result<PropagationOutput> {
        job.validate()?;
        let p = &job.prompts;
        match job.mode {
            PropagationMode::First => self.propagate_first_frame(&job.clip, &job.edits[0].1, p),
            PropagationMode::Intermediate => {
                let (m, ref f) = job.edits[0];
                self.propagate_intermediate_frame(&job.clip, m, f, p)
            }
            PropagationMode::Multi => {
                let (a, ref fa) = job.edits[0];
                let (b, ref fb) = job.edits[1];
                self.blend_multi_frame(&job.clip, (a, fa), (b, fb), p)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        clip: &VideoClip,
        frames: Vec<Frame>,
        mode: PropagationMode,
        edit_indices: Vec<usize>,
        prompts: &PromptSet,
        windows: Vec<WindowRecord>,
        stages: Option<MultiStages>,
    ) -> Result<PropagationOutput> {
        if frames.len() != clip.len() {
            return Err(Error::ShapeMismatch(format!(
                "propagation produced {} frames for a clip of {}",
                frames.len(),
                clip.len()
            )));
        }
        let provenance = Provenance {
            format: PROVENANCE_FORMAT.into(),
            mode,
            frames: clip.len(),
            edit_indices,
            config: self.config.clone(),
            prompts: prompts.clone(),
            adapters: BTreeMap::from([("backend".to_owned(), self.backend.id().to_owned())]),
            backend_settings: self.backend.settings(),
            windows,
        };
        Ok(PropagationOutput {
            clip: VideoClip::new(frames, clip.fps())?,
            provenance,
            stages,
        })
    }
}
