//! Video diffusion interface, DDIM inversion and sampling, and the analytic
//! stub backend.

mod backend;
mod ddim;
mod sampler;
mod schedule;
mod stub;
mod trajectory;

pub use backend::{DiffusionBackend, Feature, FeatureHooks, HookPoint, NoHooks};
pub use ddim::{ddim_invert_step, ddim_step, VideoLatent};
pub use sampler::{ddim_invert_video, ddim_sample_video, Guidance, DEFAULT_GUIDANCE};
pub use schedule::{make_schedule, NoiseSchedule, ScheduleKind, TRAIN_STEPS};
pub use stub::{AnalyticStub, StubConfig, DEFAULT_FRAMES, LATENT_CHANNELS};
pub use trajectory::{read_tensor, write_tensor, LatentTrajectory};
