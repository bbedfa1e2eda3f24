use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use vidtint::diffusion::{
    ddim_invert_step, ddim_invert_video, ddim_sample_video, ddim_step, make_schedule, AnalyticStub,
    DiffusionBackend, Feature, FeatureHooks, Guidance, LatentTrajectory, NoHooks, ScheduleKind,
    StubConfig,
};
use vidtint::inject::{
    build_plan, select_start_latent, FeatureKind, InjectionConfig, InjectionPlan,
};
use vidtint::synth::moving_disc_clip;
use vidtint::types::Frame;
use vidtint::Error;

fn stub(steps: usize, cfg: StubConfig) -> (AnalyticStub, vidtint::diffusion::NoiseSchedule) {
    let sched = make_schedule(steps, ScheduleKind::Linear).unwrap();
    (AnalyticStub::new(cfg, &sched).unwrap(), sched)
}

fn clip(n: usize) -> Vec<Frame> {
    moving_disc_clip(n, 32, 32, 1.0).unwrap().into_frames()
}

fn max_diff(a: &[Frame], b: &[Frame]) -> f32 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.pixels().iter().zip(y.pixels()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f32::max)
}

#[test]
fn latent_round_trip_through_stub_noise() {
    let sched = make_schedule(50, ScheduleKind::Linear).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z0 = Array4::from_shape_simple_fn((16, 4, 8, 8), || StandardNormal.sample(&mut rng));
    let cond = Frame::filled(16, 16, [0.5; 3]).unwrap();
    let small = AnalyticStub::new(StubConfig { downscale: 2, ..Default::default() }, &sched).unwrap();

    let start = Instant::now();
    let mut z = z0.clone();
    for t in 0..50 {
        let eps = small.predict_noise(&z, t + 1, &cond, "", &mut NoHooks).unwrap();
        let up = ddim_invert_step(&z, t, &eps, &sched).unwrap();
        let back = ddim_step(&up, t + 1, &eps, &sched).unwrap();
        let step_err = z.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(step_err < 1e-10, "t={t}: {step_err}");
        z = up;
    }
    for t in (1..=50).rev() {
        let eps = small.predict_noise(&z, t, &cond, "", &mut NoHooks).unwrap();
        z = ddim_step(&z, t, &eps, &sched).unwrap();
    }
    let err = z.iter().zip(&z0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
    assert!(start.elapsed().as_secs() < 10);
}

#[test]
fn video_inversion_contract() {
    let (backend, sched) = stub(20, StubConfig { frames: 4, ..Default::default() });
    let frames = clip(4);
    let traj = ddim_invert_video(&frames, &frames[0], &backend, &sched, false).unwrap();
    assert_eq!(traj.latents().len(), 21);
    assert_eq!(traj.latent(0).unwrap(), &backend.encode(&frames).unwrap());
    assert_eq!(traj.feature_count(), 0);

    let out = ddim_sample_video(
        traj.latent(20).unwrap(),
        20,
        &backend,
        &sched,
        &frames[0],
        &Guidance { positive: "a", negative: "b", scale: 9.0 },
        None,
        None,
    )
    .unwrap();
    assert!(max_diff(&out, &frames) < 1e-6);

    let zero = ddim_sample_video(traj.latent(7).unwrap(), 0, &backend, &sched, &frames[0], &Guidance::NULL, None, None)
        .unwrap();
    assert_eq!(zero, backend.decode(traj.latent(7).unwrap()).unwrap());
    assert!(ddim_invert_video(&frames[..3], &frames[0], &backend, &sched, false).is_err());
}

#[derive(Default)]
struct Recorder {
    seen: Vec<(usize, String, FeatureKind, Feature)>,
}

impl FeatureHooks for Recorder {
    fn visit(&mut self, t: usize, layer: &str, kind: FeatureKind, f: &mut Feature) -> vidtint::Result<()> {
        self.seen.push((t, layer.to_owned(), kind, f.clone()));
        Ok(())
    }
}

fn traj_for(cfg: &InjectionConfig, backend: &AnalyticStub, frames: &[Frame]) -> LatentTrajectory {
    let sched = make_schedule(cfg.steps, ScheduleKind::Linear).unwrap();
    ddim_invert_video(frames, &frames[0], backend, &sched, true).unwrap()
}

#[test]
fn injection_hits_exactly_the_configured_steps() {
    let cfg = InjectionConfig { tau_idx: 0, ..Default::default() };
    let (backend, sched) = stub(50, StubConfig { frames: 4, ..Default::default() });
    let frames = clip(4);
    let traj = traj_for(&cfg, &backend, &frames);
    let plan = build_plan(&traj, &cfg).unwrap();
    let count = 10 * cfg.conv_layers.len() + (10 + 25) * cfg.attn_layers.len();
    assert_eq!(plan.len(), count);

    let (start, start_step) = select_start_latent(&traj, cfg.tau_idx).unwrap();
    let mut rec = Recorder::default();
    ddim_sample_video(&start, start_step, &backend, &sched, &frames[0], &Guidance::NULL, Some(&plan), Some(&mut rec))
        .unwrap();
    let mut injected: [BTreeSet<usize>; 3] = Default::default();
    for (t, layer, kind, f) in &rec.seen {
        let step = start_step - t;
        if let Some(src) = plan.source(step, layer, *kind) {
            assert_eq!(f, src, "hook must see the bound source tensor");
            assert!(*t > cfg.steps - cfg.tau(*kind));
            injected[*kind as usize].insert(step);
        }
    }
    assert_eq!(injected[0], (0..10).collect());
    assert_eq!(injected[1], (0..10).collect());
    assert_eq!(injected[2], (0..25).collect());
}

#[test]
fn empty_plan_is_bitwise_noop() {
    let cfg = InjectionConfig { tau_conv: 0, tau_sa: 0, tau_ta: 0, ..Default::default() };
    let (backend, sched) = stub(50, StubConfig { frames: 4, feature_coupling: 0.1, text_strength: 0.01, ..Default::default() });
    let frames = clip(4);
    let traj = traj_for(&cfg, &backend, &frames);
    let plan = build_plan(&traj, &cfg).unwrap();
    assert!(plan.is_empty());
    let (start, s) = select_start_latent(&traj, cfg.tau_idx).unwrap();
    let g = Guidance { positive: "red", negative: "grey", scale: 9.0 };
    let with = ddim_sample_video(&start, s, &backend, &sched, &frames[1], &g, Some(&plan), None).unwrap();
    let without = ddim_sample_video(&start, s, &backend, &sched, &frames[1], &g, None, None).unwrap();
    assert_eq!(with, without);
    let noop = InjectionPlan::empty(s);
    let again = ddim_sample_video(&start, s, &backend, &sched, &frames[1], &g, Some(&noop), None).unwrap();
    assert_eq!(again, without);
}

#[test]
fn full_plan_flags_every_captured_slot() {
    let all_layers = InjectionConfig {
        tau_conv: 50,
        tau_sa: 50,
        tau_ta: 50,
        tau_idx: 0,
        conv_layers: (0..3).map(|i| format!("decoder.{i}.conv")).collect(),
        ..Default::default()
    };
    let (backend, _) = stub(50, StubConfig { frames: 4, ..Default::default() });
    let frames = clip(4);
    let traj = traj_for(&all_layers, &backend, &frames);
    let plan = build_plan(&traj, &all_layers).unwrap();
    assert_eq!(plan.len(), traj.feature_count());
}

#[test]
fn missing_feature_is_named() {
    let cfg = InjectionConfig::default();
    let (backend, sched) = stub(50, StubConfig { frames: 4, ..Default::default() });
    let frames = clip(4);
    let bare = ddim_invert_video(&frames, &frames[0], &backend, &sched, false).unwrap();
    match build_plan(&bare, &cfg) {
        Err(Error::MissingFeature { step, layer, kind }) => {
            assert_eq!((step, kind), (0, FeatureKind::Conv));
            assert_eq!(layer, "decoder.1.conv");
        }
        other => panic!("{other:?}"),
    }
    let bogus = InjectionConfig { conv_layers: vec!["encoder.9".into()], ..cfg };
    let traj = traj_for(&bogus, &backend, &frames);
    assert!(matches!(build_plan(&traj, &bogus), Err(Error::MissingFeature { .. })));
}

#[test]
fn start_latent_indexing() {
    let (backend, sched) = stub(50, StubConfig { frames: 4, ..Default::default() });
    let frames = clip(4);
    let traj = ddim_invert_video(&frames, &frames[0], &backend, &sched, false).unwrap();
    let (z, s) = select_start_latent(&traj, 0).unwrap();
    assert_eq!((&z, s), (traj.latent(50).unwrap(), 50));
    let (z, s) = select_start_latent(&traj, 9).unwrap();
    assert_eq!((&z, s), (traj.latent(41).unwrap(), 41));
    let (z, s) = select_start_latent(&traj, 50).unwrap();
    assert_eq!((&z, s), (traj.latent(0).unwrap(), 0));
    assert!(select_start_latent(&traj, 51).is_err());
}

// With the feature coupling on, the noise estimate depends on the latent and
// inversion is no longer exact; injecting every source feature restores it.
#[test]
fn full_injection_preserves_source_under_coupling() {
    let cfg = InjectionConfig {
        steps: 30,
        tau_conv: 30,
        tau_sa: 30,
        tau_ta: 30,
        tau_idx: 0,
        conv_layers: (0..3).map(|i| format!("decoder.{i}.conv")).collect(),
        ..Default::default()
    };
    let (backend, sched) = stub(30, StubConfig { frames: 4, feature_coupling: 0.02, ..Default::default() });
    let frames = clip(4);
    let traj = traj_for(&cfg, &backend, &frames);
    let plan = build_plan(&traj, &cfg).unwrap();
    let (start, s) = select_start_latent(&traj, 0).unwrap();
    let injected = ddim_sample_video(&start, s, &backend, &sched, &frames[0], &Guidance::NULL, Some(&plan), None).unwrap();
    let plain = ddim_sample_video(&start, s, &backend, &sched, &frames[0], &Guidance::NULL, None, None).unwrap();
    assert!(max_diff(&injected, &frames) < 1e-6);
    assert!(max_diff(&plain, &frames) > 1e-3);
}

#[test]
fn prompts_change_output_when_stub_reads_text() {
    let (backend, sched) = stub(20, StubConfig { frames: 4, text_strength: 0.05, ..Default::default() });
    let frames = clip(4);
    let traj = ddim_invert_video(&frames, &frames[0], &backend, &sched, false).unwrap();
    let run = |p: &str| {
        let g = Guidance { positive: p, negative: "greyish", scale: 9.0 };
        ddim_sample_video(traj.latent(20).unwrap(), 20, &backend, &sched, &frames[0], &g, None, None).unwrap()
    };
    assert_ne!(run("red car"), run("blue car"));
}

#[test]
fn trajectory_persists() {
    let cfg = InjectionConfig { steps: 5, tau_conv: 2, tau_sa: 2, tau_ta: 3, tau_idx: 1, ..Default::default() };
    let (backend, _) = stub(5, StubConfig { frames: 2, ..Default::default() });
    let frames = clip(2);
    let traj = traj_for(&cfg, &backend, &frames);
    let dir = tempfile::tempdir().unwrap();
    traj.save(dir.path()).unwrap();
    let back = LatentTrajectory::load(dir.path()).unwrap();
    assert_eq!(back.steps(), 5);
    assert_eq!(back.feature_count(), traj.feature_count());
    for (a, b) in traj.latents().iter().zip(back.latents()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
        }
    }
    assert_eq!(build_plan(&back, &cfg).unwrap().len(), build_plan(&traj, &cfg).unwrap().len());
}
