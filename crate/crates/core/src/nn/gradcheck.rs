use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{ParamStore, Tensor};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that gradients that are zero
/// up to round-off do not register as large relative deviations.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_FLOOR)
}

/// Compares reverse-mode gradients with central finite differences on up to
/// `samples` randomly chosen scalar parameters and returns the worst relative
/// error.
///
/// `eval` computes the loss and its parameter gradients at the given
/// parameters; it must be deterministic (freeze dropout masks).
pub fn grad_check<F>(params: &ParamStore<f64>, samples: usize, seed: u64, eval: F) -> Result<f64>
where
    F: Fn(&ParamStore<f64>) -> Result<(f64, Vec<Option<Tensor<f64>>>)>,
{
    grad_check_steps(params, samples, seed, &[FD_STEP], eval)
}

/// Steps tried by [`grad_check_steps`] for deep piecewise-linear stacks.
pub const FD_STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// [`grad_check`] over several difference steps, keeping for each parameter
/// the step that agrees best. Large steps may straddle a ReLU or pooling
/// kink and small ones drown tiny gradients in round-off; a wrong analytic
/// gradient disagrees at every step.
pub fn grad_check_steps<F>(params: &ParamStore<f64>, samples: usize, seed: u64, steps: &[f64], eval: F) -> Result<f64>
where
    F: Fn(&ParamStore<f64>) -> Result<(f64, Vec<Option<Tensor<f64>>>)>,
{
    let (_, grads) = eval(params)?;
    let sizes: Vec<usize> = params.iter().map(|(_, t)| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if samples >= total {
        (0..total).collect()
    } else {
        let mut v = sample(&mut rng, total, samples).into_vec();
        v.sort_unstable();
        v
    };
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for flat in picks {
        let (mut id, mut off) = (0, flat);
        while off >= sizes[id] {
            off -= sizes[id];
            id += 1;
        }
        let analytic = grads.get(id).and_then(|g| g.as_ref()).map(|g| g.data()[off]).unwrap_or(0.0);
        let orig = probe.get(id).data()[off];
        let mut best = f64::INFINITY;
        for &step in steps {
            probe.get_mut(id).data_mut()[off] = orig + step;
            let (plus, _) = eval(&probe)?;
            probe.get_mut(id).data_mut()[off] = orig - step;
            let (minus, _) = eval(&probe)?;
            probe.get_mut(id).data_mut()[off] = orig;
            let err = relative_error(analytic, (plus - minus) / (2.0 * step));
            if err.is_nan() {
                return Ok(f64::NAN);
            }
            best = best.min(err);
        }
        worst = worst.max(best);
    }
    Ok(worst)
}
