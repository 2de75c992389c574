//! Forward noising, the ε-prediction objective, ancestral sampling and the
//! training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::denoiser::Denoiser;
use super::schedule::NoiseSchedule;
use crate::error::{param, Error, Result};
use crate::nn::{clip_grad_norm, Adam, AdamConfig};
use crate::rng::Rng;

/// Anything that predicts the noise component of `x_k`.
pub trait NoisePredictor {
    fn predict(&self, x: &[f64], k: usize, cond: Option<&[f64]>) -> Result<Vec<f64>>;
}

impl NoisePredictor for Denoiser {
    fn predict(&self, x: &[f64], k: usize, cond: Option<&[f64]>) -> Result<Vec<f64>> {
        self.forward(x, k, cond)
    }
}

/// `x_k = √ᾱ_k x₀ + √(1−ᾱ_k) ε`.
pub fn q_sample(x0: &[f64], k: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    if k >= sched.steps() {
        return Err(param("k", format!("step {k} outside [0, {})", sched.steps())));
    }
    if eps.len() != x0.len() {
        return Err(Error::Shape(format!("noise has {} values, sample has {}", eps.len(), x0.len())));
    }
    let ab = sched.alpha_bars[k];
    let (a, b) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Mean squared error over the cells where `mask` is true.
pub fn masked_mse(pred: &[f64], target: &[f64], mask: &[bool]) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for ((p, t), &m) in pred.iter().zip(target).zip(mask) {
        if m {
            s += (p - t) * (p - t);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// One draw of the ε-objective: random step, random noise, masked MSE
/// between the true and predicted noise.
pub fn loss_eps(
    x0: &[f64],
    cond: Option<&[f64]>,
    mask: &[bool],
    sched: &NoiseSchedule,
    net: &dyn NoisePredictor,
    rng: &mut Rng,
) -> Result<f64> {
    let k = rng.below(sched.steps());
    let mut eps = vec![0.0; x0.len()];
    rng.fill_normal(&mut eps);
    let xk = q_sample(x0, k, &eps, sched)?;
    let pred = net.predict(&xk, k, cond)?;
    Ok(masked_mse(&eps, &pred, mask))
}

/// Ancestral sampling from `x_K ~ N(0, I)` down to `x_0` with the DDPM
/// posterior mean and `σ_k² = β_k` (no noise on the last step).
pub fn p_sample_loop(
    shape_len: usize,
    cond: Option<&[f64]>,
    sched: &NoiseSchedule,
    net: &dyn NoisePredictor,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut x = vec![0.0; shape_len];
    rng.fill_normal(&mut x);
    for k in (0..sched.steps()).rev() {
        let eps = net.predict(&x, k, cond)?;
        let (alpha, beta, ab) = (sched.alphas[k], sched.betas[k], sched.alpha_bars[k]);
        let coef = beta / libm::sqrt(1.0 - ab);
        let inv = 1.0 / libm::sqrt(alpha);
        for (v, e) in x.iter_mut().zip(&eps) {
            *v = inv * (*v - coef * e);
        }
        if k > 0 {
            let sigma = libm::sqrt(beta);
            for v in x.iter_mut() {
                *v += sigma * rng.normal();
            }
        }
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("sample cell {i} diverged")));
    }
    Ok(x)
}

/// One training pair in tensor form.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub x0: Vec<f64>,
    pub cond: Vec<f64>,
    /// Cells of `x0` that enter the loss.
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 50, batch_size: 16, lr: 1e-3, clip_norm: 1.0, seed: 42 }
    }
}

/// Adam on the ε-objective with global-norm clipping. Returns the mean loss of
/// every epoch; `on_epoch` sees `(epoch, mean_loss)` as they complete.
pub fn train_denoiser(
    net: &mut Denoiser,
    data: &[TrainingExample],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    if cfg.batch_size == 0 {
        return Err(param("batch_size", "must be positive"));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let n_cells = data[0].x0.len();
    let mut eps = vec![0.0; n_cells];
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            net.zero_grad();
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &data[i];
                let k = rng.below(sched.steps());
                rng.fill_normal(&mut eps);
                let xk = q_sample(&ex.x0, k, &eps, sched)?;
                let cond = (!ex.cond.is_empty()).then_some(ex.cond.as_slice());
                let (pred, cache) = net.forward_train(&xk, k, cond)?;
                let valid = ex.mask.iter().filter(|&&m| m).count().max(1) as f64;
                let scale = 2.0 / (valid * batch.len() as f64);
                let mut d = vec![0.0; n_cells];
                let mut l = 0.0;
                for j in 0..n_cells {
                    if ex.mask[j] {
                        let r = pred[j] - eps[j];
                        l += r * r;
                        d[j] = scale * r;
                    }
                }
                let l = l / valid;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss {l} at epoch {epoch}, batch {bi}, example {i}, step {k}"
                    )));
                }
                batch_loss += l;
                net.backward(&cache, &d);
            }
            let mut params = net.params_mut();
            clip_grad_norm(&mut params, cfg.clip_norm);
            opt.step(&mut params);
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / data.len() as f64;
        on_epoch(epoch, mean);
        trace.push(mean);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_linear_schedule, DenoiserConfig};

    /// Returns exactly the noise that takes `x0` to the given `x_k`.
    struct Oracle<'a> {
        x0: &'a [f64],
        sched: &'a NoiseSchedule,
    }

    impl NoisePredictor for Oracle<'_> {
        fn predict(&self, x: &[f64], k: usize, _: Option<&[f64]>) -> Result<Vec<f64>> {
            let ab = self.sched.alpha_bars[k];
            Ok(x.iter()
                .zip(self.x0)
                .map(|(xk, x0)| (xk - libm::sqrt(ab) * x0) / libm::sqrt(1.0 - ab))
                .collect())
        }
    }

    #[test]
    fn q_sample_limits() {
        let s = make_linear_schedule(50, 1e-8, 0.05).unwrap();
        let x0 = [1.0, -2.0, 3.0];
        let eps = [0.3, 0.1, -0.2];
        let near = q_sample(&x0, 0, &eps, &s).unwrap();
        for (a, b) in near.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-3);
        }
        let s = make_linear_schedule(50, 1e-4, 0.05).unwrap();
        let z = q_sample(&x0, 20, &[0.0; 3], &s).unwrap();
        for (a, b) in z.iter().zip(&x0) {
            assert_eq!(*a, libm::sqrt(s.alpha_bars[20]) * b);
        }
        assert!(q_sample(&x0, 50, &eps, &s).is_err());
    }

    #[test]
    fn q_sample_moments() {
        let s = make_linear_schedule(50, 1e-4, 0.05).unwrap();
        let x0 = [0.7];
        let mut rng = Rng::new(3);
        let n = 10_000;
        for k in [0, 25, 49] {
            let draws: Vec<f64> = (0..n)
                .map(|_| q_sample(&x0, k, &[rng.normal()], &s).unwrap()[0])
                .collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
            let want_mean = libm::sqrt(s.alpha_bars[k]) * 0.7;
            let want_var = 1.0 - s.alpha_bars[k];
            let se_mean = libm::sqrt(want_var / n as f64);
            // Var of the sample variance for a Gaussian: 2σ⁴/(n−1)
            let se_var = want_var * libm::sqrt(2.0 / (n - 1) as f64);
            assert!((mean - want_mean).abs() < 3.0 * se_mean);
            assert!((var - want_var).abs() < 3.0 * se_var);
        }
    }

    #[test]
    fn oracle_loss_is_zero() {
        let s = make_linear_schedule(50, 1e-4, 0.05).unwrap();
        let mut rng = Rng::new(4);
        let x0: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let oracle = Oracle { x0: &x0, sched: &s };
        let mask = vec![true; 64];
        for _ in 0..20 {
            assert!(loss_eps(&x0, None, &mask, &s, &oracle, &mut rng).unwrap() < 1e-20);
        }
    }

    #[test]
    fn single_step_oracle_sampling_recovers_x0() {
        let s = make_linear_schedule(1, 0.3, 0.3).unwrap();
        let mut rng = Rng::new(5);
        let x0: Vec<f64> = (0..100).map(|_| rng.normal()).collect();
        let oracle = Oracle { x0: &x0, sched: &s };
        let out = p_sample_loop(100, None, &s, &oracle, &mut rng).unwrap();
        for (a, b) in out.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let s = make_linear_schedule(5, 1e-4, 0.05).unwrap();
        let cfg = DenoiserConfig { height: 4, width: 4, hidden: 8, blocks: 1, groups: 2, time_dim: 8, ..DenoiserConfig::new(2, 1) };
        let net = Denoiser::new(cfg, &mut Rng::new(0));
        let cond = vec![0.5; 16];
        let a = p_sample_loop(32, Some(&cond), &s, &net, &mut Rng::new(9)).unwrap();
        let b = p_sample_loop(32, Some(&cond), &s, &net, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_reduces_loss_on_toy_problem() {
        let s = make_linear_schedule(10, 1e-3, 0.2).unwrap();
        let cfg = DenoiserConfig { height: 4, width: 4, hidden: 8, blocks: 1, groups: 2, time_dim: 8, ..DenoiserConfig::new(1, 1) };
        let mut net = Denoiser::new(cfg, &mut Rng::new(1));
        let mut rng = Rng::new(2);
        let data: Vec<TrainingExample> = (0..32)
            .map(|_| {
                let c = rng.normal();
                TrainingExample { x0: vec![c; 16], cond: vec![c; 16], mask: vec![true; 16] }
            })
            .collect();
        let tc = TrainConfig { epochs: 30, batch_size: 8, lr: 1e-2, clip_norm: 1.0, seed: 3 };
        let trace = train_denoiser(&mut net, &data, &s, &tc, &mut |_, _| {}).unwrap();
        assert_eq!(trace.len(), 30);
        let first = trace[0];
        let last = trace[25..].iter().sum::<f64>() / 5.0;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }
}
