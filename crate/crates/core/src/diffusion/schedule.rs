use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Length of the training noise grid that sampling schedules subsample.
pub const TRAIN_STEPS: usize = 1000;
const BETA_START: f64 = 1e-4;
const BETA_END: f64 = 0.02;
const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Linear,
    Cosine,
}

/// Cumulative signal levels `ᾱ_0 = 1 > ᾱ_1 > … > ᾱ_T > 0` at the sampling
/// timesteps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of sampling steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

fn train_alpha_bar(kind: ScheduleKind) -> Vec<f64> {
    let betas: Vec<f64> = match kind {
        ScheduleKind::Linear => (0..TRAIN_STEPS)
            .map(|i| BETA_START + (BETA_END - BETA_START) * i as f64 / (TRAIN_STEPS - 1) as f64)
            .collect(),
        ScheduleKind::Cosine => {
            let f = |i: usize| {
                let x = (i as f64 / TRAIN_STEPS as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
                (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
            };
            (0..TRAIN_STEPS)
                .map(|i| (1.0 - f(i + 1) / f(i)).min(MAX_BETA))
                .collect()
        }
    };
    let mut out = Vec::with_capacity(TRAIN_STEPS + 1);
    let mut acc = 1.0;
    out.push(acc);
    for b in betas {
        acc *= 1.0 - b;
        out.push(acc);
    }
    out
}

/// `T`-step schedule taking training timestep `round(k · 1000 / T)` for
/// sampling step `k`.
pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    if steps < 1 {
        return Err(invalid!("schedule needs at least one step"));
    }
    if steps > TRAIN_STEPS {
        return Err(invalid!("at most {TRAIN_STEPS} steps supported, got {steps}"));
    }
    let train = train_alpha_bar(kind);
    let alpha_bar = (0..=steps)
        .map(|k| train[(k as f64 * TRAIN_STEPS as f64 / steps as f64).round() as usize])
        .collect();
    Ok(NoiseSchedule { kind, alpha_bar })
}
