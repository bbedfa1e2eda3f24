use ndarray::{Array4, Zip};

use super::schedule::NoiseSchedule;
use crate::error::{invalid, Error, Result};

/// Video latent laid out as `(frames, channels, height, width)`.
pub type VideoLatent = Array4<f64>;

fn check(z: &VideoLatent, eps: &VideoLatent, what: &str) -> Result<()> {
    if z.dim() != eps.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: latent {:?} vs noise {:?}",
            z.dim(),
            eps.dim()
        )));
    }
    if z.iter().chain(eps.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(what.to_owned()));
    }
    Ok(())
}

/// Moves a latent from noise level `from` to `to` along the deterministic
/// path defined by `eps`.
fn transfer(z: &VideoLatent, eps: &VideoLatent, sched: &NoiseSchedule, from: usize, to: usize) -> VideoLatent {
    let (a_from, a_to) = (sched.alpha_bar(from), sched.alpha_bar(to));
    let (sa, sn) = (a_from.sqrt(), (1.0 - a_from).sqrt());
    let (ta, tn) = (a_to.sqrt(), (1.0 - a_to).sqrt());
    let mut out = VideoLatent::zeros(z.dim());
    Zip::from(&mut out).and(z).and(eps).for_each(|o, &z, &e| {
        let x0 = (z - sn * e) / sa;
        *o = ta * x0 + tn * e;
    });
    out
}

/// One deterministic DDIM update `z_t → z_{t-1}`.
pub fn ddim_step(z: &VideoLatent, t: usize, eps: &VideoLatent, sched: &NoiseSchedule) -> Result<VideoLatent> {
    if t < 1 || t > sched.steps() {
        return Err(invalid!("ddim_step needs 1 <= t <= {}, got {t}", sched.steps()));
    }
    check(z, eps, "ddim_step")?;
    Ok(transfer(z, eps, sched, t, t - 1))
}

/// One DDIM inversion update `z_t → z_{t+1}`.
pub fn ddim_invert_step(z: &VideoLatent, t: usize, eps: &VideoLatent, sched: &NoiseSchedule) -> Result<VideoLatent> {
    if t >= sched.steps() {
        return Err(invalid!("ddim_invert_step needs t < {}, got {t}", sched.steps()));
    }
    check(z, eps, "ddim_invert_step")?;
    Ok(transfer(z, eps, sched, t, t + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::{make_schedule, ScheduleKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(seed: u64) -> VideoLatent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VideoLatent::from_shape_simple_fn((2, 4, 5, 6), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn zero_noise_scales_latent() {
        let s = make_schedule(50, ScheduleKind::Linear).unwrap();
        let z = random(1);
        let zero = VideoLatent::zeros(z.dim());
        let down = ddim_step(&z, 10, &zero, &s).unwrap();
        let up = ddim_invert_step(&z, 10, &zero, &s).unwrap();
        let f_down = (s.alpha_bar(9) / s.alpha_bar(10)).sqrt();
        let f_up = (s.alpha_bar(11) / s.alpha_bar(10)).sqrt();
        for ((a, b), c) in z.iter().zip(&down).zip(&up) {
            assert!((b - a * f_down).abs() < 1e-12);
            assert!((c - a * f_up).abs() < 1e-12);
        }
    }

    #[test]
    fn last_step_returns_clean_estimate() {
        let s = make_schedule(50, ScheduleKind::Linear).unwrap();
        let (z, eps) = (random(2), random(3));
        let out = ddim_step(&z, 1, &eps, &s).unwrap();
        let (a, n) = (s.alpha_bar(1).sqrt(), (1.0 - s.alpha_bar(1)).sqrt());
        for ((o, z), e) in out.iter().zip(&z).zip(&eps) {
            assert!((o - (z - n * e) / a).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_hand_formula() {
        let s = make_schedule(50, ScheduleKind::Cosine).unwrap();
        let (z, eps) = (random(4), random(5));
        let t = 17;
        let out = ddim_step(&z, t, &eps, &s).unwrap();
        let (at, ap) = (s.alpha_bar(t), s.alpha_bar(t - 1));
        for ((o, z), e) in out.iter().zip(&z).zip(&eps) {
            let x0 = (z - (1.0 - at).sqrt() * e) / at.sqrt();
            let want = ap.sqrt() * x0 + (1.0 - ap).sqrt() * e;
            assert!((o - want).abs() < 1e-10);
        }
    }

    #[test]
    fn step_undoes_inversion_step() {
        let s = make_schedule(50, ScheduleKind::Linear).unwrap();
        let (z, eps) = (random(6), random(7));
        for t in 0..50 {
            let up = ddim_invert_step(&z, t, &eps, &s).unwrap();
            let back = ddim_step(&up, t + 1, &eps, &s).unwrap();
            let err = z.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "t={t} err={err}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let s = make_schedule(10, ScheduleKind::Linear).unwrap();
        let z = random(8);
        assert!(ddim_step(&z, 0, &z, &s).is_err());
        assert!(ddim_step(&z, 11, &z, &s).is_err());
        assert!(ddim_invert_step(&z, 10, &z, &s).is_err());
        let mut bad = z.clone();
        bad[[0, 0, 0, 0]] = f64::NAN;
        assert!(matches!(ddim_step(&bad, 3, &z, &s), Err(Error::Numeric(_))));
        let small = VideoLatent::zeros((1, 1, 1, 1));
        assert!(matches!(ddim_step(&z, 3, &small, &s), Err(Error::ShapeMismatch(_))));
    }
}
