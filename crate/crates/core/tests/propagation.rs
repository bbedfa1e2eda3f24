use vidtint::diffusion::{
    make_schedule, AnalyticStub, DiffusionBackend, FeatureHooks, HookPoint, NoiseSchedule, ScheduleKind,
    StubConfig, VideoLatent,
};
use vidtint::inject::InjectionConfig;
use vidtint::prompts::{assemble_prompts, PromptSet, BLEND_PROMPT};
use vidtint::propagate::{PropagationConfig, PropagationJob, PropagationMode, Propagator};
use vidtint::synth::moving_disc_clip;
use vidtint::types::{max_abs_diff, Frame, VideoClip};
use vidtint::{Error, Result};

const STEPS: usize = 20;

fn setup(frames: usize, text_strength: f64) -> (AnalyticStub, NoiseSchedule, PropagationConfig) {
    let sched = make_schedule(STEPS, ScheduleKind::Linear).unwrap();
    let stub = AnalyticStub::new(
        StubConfig {
            frames,
            text_strength,
            ..Default::default()
        },
        &sched,
    )
    .unwrap();
    let config = PropagationConfig {
        injection: InjectionConfig {
            steps: STEPS,
            tau_conv: 4,
            tau_sa: 4,
            tau_ta: 10,
            tau_idx: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    (stub, sched, config)
}

fn clip(n: usize) -> VideoClip {
    moving_disc_clip(n, 16, 24, 0.5).unwrap()
}

fn recolour(frame: &Frame) -> Frame {
    Frame::from_fn(frame.height(), frame.width(), frame.index(), |r, c| {
        let [red, g, b] = frame.pixel(r, c);
        if red > g + 0.2 {
            [0.2, 0.3, 0.75]
        } else {
            [red, g, b]
        }
    })
    .unwrap()
}

fn prompts(mode: PropagationMode) -> PromptSet {
    assemble_prompts("a blue disc", "a gradient wall", mode).unwrap()
}

#[test]
fn identity_edit_reproduces_source_in_every_mode() {
    let (stub, sched, config) = setup(8, 0.0);
    let p = Propagator::new(&stub, &sched, config).unwrap();
    for n in [8, 5, 13] {
        let c = clip(n);
        let f = c.frames();
        let first = p.propagate_first_frame(&c, &f[0], &prompts(PropagationMode::First)).unwrap();
        assert!(first.clip.max_abs_diff(&c).unwrap() < 1e-5, "first n={n}");
        let m = n / 2;
        let mid = p
            .propagate_intermediate_frame(&c, m, &f[m], &prompts(PropagationMode::Intermediate))
            .unwrap();
        assert!(mid.clip.max_abs_diff(&c).unwrap() < 1e-5, "intermediate n={n}");
        let multi = p
            .blend_multi_frame(&c, (1, &f[1]), (n - 2, &f[n - 2]), &prompts(PropagationMode::Multi))
            .unwrap();
        assert!(multi.clip.max_abs_diff(&c).unwrap() < 1e-5, "multi n={n}");
        assert_eq!(multi.clip.len(), n);
    }
}

#[test]
fn intermediate_at_zero_equals_first_bitwise() {
    let (stub, sched, config) = setup(8, 0.02);
    let p = Propagator::new(&stub, &sched, config).unwrap();
    let c = clip(11);
    let edited = recolour(&c.frames()[0]);
    let pr = prompts(PropagationMode::First);
    let a = p.propagate_first_frame(&c, &edited, &pr).unwrap();
    let b = p.propagate_intermediate_frame(&c, 0, &edited, &pr).unwrap();
    assert_eq!(a.clip, b.clip);
}

#[test]
fn edit_spreads_and_keeps_length() {
    let (stub, sched, config) = setup(8, 0.0);
    let p = Propagator::new(&stub, &sched, config).unwrap();
    let c = clip(8);
    let m = 4;
    let edited = recolour(&c.frames()[m]);
    let out = p.propagate_intermediate_frame(&c, m, &edited, &prompts(PropagationMode::Intermediate)).unwrap();
    assert_eq!(out.clip.len(), 8);
    for i in [0, 7] {
        let src = &c.frames()[i];
        let got = &out.clip.frames()[i];
        let blueness = |f: &Frame| f.pixels().outer_iter().flat_map(|row| row.outer_iter().map(|p| p[2] - p[0]).collect::<Vec<_>>()).sum::<f32>();
        assert!(blueness(got) > blueness(src) + 1.0, "frame {i} did not take the edit");
    }
    let labels: Vec<_> = out.provenance.windows.iter().map(|w| w.label.as_str()).collect();
    assert_eq!(labels, ["backward", "forward"]);
    assert_eq!(out.provenance.windows[0].frames, vec![4, 3, 2, 1, 0]);
    assert_eq!(out.provenance.windows[0].padding, 3);
}

#[test]
fn long_clips_run_in_overlapping_windows() {
    let (stub, sched, config) = setup(6, 0.0);
    let p = Propagator::new(&stub, &sched, config).unwrap();
    let c = clip(14);
    let out = p.propagate_first_frame(&c, &recolour(&c.frames()[0]), &prompts(PropagationMode::First)).unwrap();
    assert_eq!(out.clip.len(), 14);
    let spans: Vec<_> = out.provenance.windows.iter().map(|w| (w.frames[0], w.frames.len(), w.padding)).collect();
    assert_eq!(spans, [(0, 6, 0), (5, 6, 0), (10, 4, 2)]);
}

#[test]
fn multi_stages_respect_weights() {
    let (stub, sched, config) = setup(8, 0.0);
    let p = Propagator::new(&stub, &sched, config).unwrap();
    let c = clip(8);
    let (ea, eb) = (recolour(&c.frames()[1]), c.frames()[6].clone());
    let out = p.blend_multi_frame(&c, (1, &ea), (6, &eb), &prompts(PropagationMode::Multi)).unwrap();
    let st = out.stages.unwrap();
    assert_eq!(st.blended[1], st.result_a[1]);
    assert_eq!(st.blended[6], st.result_b[6]);
    assert_eq!(st.weights.get(3), Some((0.6, 0.4)));
    let blend_window = out.provenance.windows.last().unwrap();
    assert_eq!(blend_window.label, "blend");
    assert!(blend_window.positive.ends_with(BLEND_PROMPT));
}

fn run(config: PropagationConfig, prompts: PromptSet) -> (VideoClip, serde_json::Value) {
    let (stub, sched, _) = setup(8, 0.02);
    let p = Propagator::new(&stub, &sched, config).unwrap();
    let c = clip(8);
    let job = PropagationJob {
        edits: vec![(1, recolour(&c.frames()[1])), (6, c.frames()[6].clone())],
        clip: c,
        mode: PropagationMode::Multi,
        config: p.config().clone(),
        prompts,
    };
    let out = p.run(&job).unwrap();
    (out.clip, serde_json::to_value(&out.provenance).unwrap())
}

#[test]
fn ablations_give_distinct_labelled_outputs() {
    let (_, _, base) = setup(8, 0.0);
    let full = prompts(PropagationMode::Multi);
    let variants = [
        ("full", base.clone(), full.clone()),
        ("no weighted sum", PropagationConfig { ablate_weighted_sum: true, ..base.clone() }, full.clone()),
        ("no blend prompt", PropagationConfig { ablate_blend_prompt: true, ..base.clone() }, full.clone()),
        ("colour only", base.clone(), assemble_prompts("a blue disc", "", PropagationMode::Multi).unwrap()),
    ];
    let outs: Vec<_> = variants.iter().map(|(_, c, p)| run(c.clone(), p.clone())).collect();
    for i in 0..outs.len() {
        for j in i + 1..outs.len() {
            assert_ne!(outs[i].0, outs[j].0, "{} vs {}", variants[i].0, variants[j].0);
            assert_ne!(outs[i].1, outs[j].1, "{} vs {}", variants[i].0, variants[j].0);
        }
    }
    assert_eq!(outs[1].1["config"]["ablate_weighted_sum"], true);
    assert_eq!(outs[2].1["config"]["ablate_blend_prompt"], true);
    assert_eq!(outs[0].1["backend_settings"]["seed"], 0);
    assert_eq!(outs[0].1["adapters"]["backend"], "stub");
}

#[test]
fn job_validation() {
    let (stub, sched, config) = setup(8, 0.0);
    let p = Propagator::new(&stub, &sched, config.clone()).unwrap();
    let c = clip(8);
    let f = |i: usize| c.frames()[i].clone();
    let job = |mode, edits: Vec<(usize, Frame)>| PropagationJob {
        clip: c.clone(),
        edits,
        mode,
        config: config.clone(),
        prompts: PromptSet::default(),
    };
    assert!(p.run(&job(PropagationMode::First, vec![(2, f(2))])).is_err());
    assert!(p.run(&job(PropagationMode::Intermediate, vec![])).is_err());
    assert!(p.run(&job(PropagationMode::Multi, vec![(5, f(5)), (2, f(2))])).is_err());
    assert!(p.run(&job(PropagationMode::Multi, vec![(2, f(2)), (9, f(2))])).is_err());
    let small = Frame::filled(16, 16, [0.5; 3]).unwrap();
    assert!(matches!(
        p.run(&job(PropagationMode::First, vec![(0, small)])),
        Err(Error::ShapeMismatch(_))
    ));
    let other = make_schedule(10, ScheduleKind::Linear).unwrap();
    assert!(Propagator::new(&stub, &other, config).is_err());
}

struct Failing {
    inner: AnalyticStub,
    fail_text: &'static str,
}

impl DiffusionBackend for Failing {
    fn id(&self) -> &str {
        "failing"
    }
    fn frame_count(&self) -> usize {
        self.inner.frame_count()
    }
    fn encode(&self, frames: &[Frame]) -> Result<VideoLatent> {
        self.inner.encode(frames)
    }
    fn decode(&self, latent: &VideoLatent) -> Result<Vec<Frame>> {
        self.inner.decode(latent)
    }
    fn hook_points(&self) -> Vec<HookPoint> {
        self.inner.hook_points()
    }
    fn predict_noise(
        &self,
        latent: &VideoLatent,
        t: usize,
        cond: &Frame,
        text: &str,
        hooks: &mut dyn FeatureHooks,
    ) -> Result<VideoLatent> {
        if text == self.fail_text {
            return Err(Error::Numeric("injected failure".into()));
        }
        self.inner.predict_noise(latent, t, cond, text, hooks)
    }
}

#[test]
fn errors_name_their_pathway() {
    let (stub, sched, config) = setup(8, 0.0);
    let c = clip(8);
    let f = c.frames();

    let bad_primary = Failing { inner: stub.clone(), fail_text: "" };
    let p = Propagator::new(&bad_primary, &sched, config.clone()).unwrap();
    let e = p.propagate_first_frame(&c, &f[0], &PromptSet::default()).unwrap_err().to_string();
    assert!(e.starts_with("primary pathway: backend error at step 0"), "{e}");

    let bad_secondary = Failing { inner: stub, fail_text: "boom" };
    let p = Propagator::new(&bad_secondary, &sched, config).unwrap();
    let boom = PromptSet {
        positive: "boom".into(),
        ..Default::default()
    };
    let e = p.propagate_intermediate_frame(&c, 3, &f[3], &boom).unwrap_err().to_string();
    assert!(e.starts_with("forward direction: secondary pathway: backend error"), "{e}");
    let e = p.blend_multi_frame(&c, (2, &f[2]), (5, &f[5]), &boom).unwrap_err().to_string();
    assert!(e.starts_with("branch a: a/forward direction: secondary pathway"), "{e}");
}

#[test]
fn frames_keep_clip_indices() {
    let (stub, sched, config) = setup(8, 0.0);
    let p = Propagator::new(&stub, &sched, config).unwrap();
    let c = clip(9);
    let out = p.propagate_intermediate_frame(&c, 4, &c.frames()[4], &PromptSet::default()).unwrap();
    for (i, f) in out.clip.frames().iter().enumerate() {
        assert_eq!(f.index(), i);
    }
    assert!(max_abs_diff(out.clip.frames(), c.frames()).unwrap() < 1e-5);
}
