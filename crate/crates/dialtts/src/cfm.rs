//! Conditional flow matching on the toy backbone: the straight-line
//! interpolant objective and Euler-integration sampling.
//!
//! The training target is the constant field of the linear path from noise
//! to data: `x_t = (1-t) x0 + t x1`, `u = x1 - x0`. The loss regresses the
//! model's predicted field onto `u` in mean-squared error per feature.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::TtsModel;

/// Straight-line interpolant `(1-t) x0 + t x1`.
pub fn interpolate(x0: &Array1<f64>, x1: &Array1<f64>, t: f64) -> Array1<f64> {
    (1.0 - t) * x0 + t * x1
}

/// The conditional target field of the linear path, `x1 - x0`.
pub fn target_field(x0: &Array1<f64>, x1: &Array1<f64>) -> Array1<f64> {
    x1 - x0
}

/// Flow-matching regression loss for one `(x0, x1, t)` triple under a fixed
/// conditioning vector: `|v(x_t, t, cond) - (x1 - x0)|^2 / F`.
pub fn ot_cfm_loss(
    x0: &Array1<f64>,
    x1: &Array1<f64>,
    t: f64,
    model: &TtsModel,
    cond: &Array1<f64>,
) -> f64 {
    let x_t = interpolate(x0, x1, t);
    let u = target_field(x0, x1);
    let v = model.predict_field(&x_t, t, cond);
    (&v - &u).mapv(|d| d * d).sum() / x0.len() as f64
}

/// States visited by the Euler integrator, including the start and end
/// points; `states[i]` is the state at `times[i]`.
#[derive(Debug, Clone)]
pub struct SampleTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array1<f64>>,
}

impl SampleTrajectory {
    pub fn final_state(&self) -> &Array1<f64> {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Euler integration of the learned field from a given start state:
/// `x_{i+1} = x_i + dt * v(x_i, t_i, cond)` with `t_i = i / n_steps`.
pub fn sample_from(
    model: &TtsModel,
    cond: &Array1<f64>,
    n_steps: usize,
    x0: Array1<f64>,
) -> SampleTrajectory {
    assert!(n_steps >= 1, "need at least one integration step");
    let dt = 1.0 / n_steps as f64;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut x = x0;
    times.push(0.0);
    states.push(x.clone());
    for i in 0..n_steps {
        let t = i as f64 * dt;
        let v = model.predict_field(&x, t, cond);
        x = &x + &(dt * &v);
        times.push((i + 1) as f64 * dt);
        states.push(x.clone());
    }
    SampleTrajectory { times, states }
}

/// [`sample_from`] with `x(0)` drawn from a seeded standard normal.
pub fn sample(
    model: &TtsModel,
    cond: &Array1<f64>,
    n_steps: usize,
    seed: u64,
) -> SampleTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = model.config.feature_dim;
    let x0 = Array1::from_shape_fn(f, |_| StandardNormal.sample(&mut rng));
    sample_from(model, cond, n_steps, x0)
}
