use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ForecastError, Window};
use crate::math::{dot, matvec, outer_acc, sigmoid, sqrt, tanh};
use crate::optim::AdamW;

/// Single-layer LSTM with a scalar linear read-out of the last hidden state.
///
/// `params = [W (4H × d_in) | U (4H × H) | b (4H) | w_out (H) | b_out]`,
/// gate blocks ordered input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub d_in: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

/// Per-step activations kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: usize,
    /// Per step: gates `[i | f | o | g]` (4H), cell state (H), hidden state (H).
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
    pub output: f64,
}

impl Lstm {
    pub fn n_params_for(d_in: usize, hidden: usize) -> usize {
        4 * hidden * d_in + 4 * hidden * hidden + 4 * hidden + hidden + 1
    }

    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        Self {
            d_in,
            hidden,
            params: vec![0.0; Self::n_params_for(d_in, hidden)],
        }
    }

    /// Uniform `±1/√H` initialisation with forget-gate bias 1.
    pub fn new(d_in: usize, hidden: usize, seed: u64) -> Self {
        let mut m = Self::zeros(d_in, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1.0 / sqrt(hidden as f64);
        for p in m.params.iter_mut() {
            *p = rng.random_range(-k..k);
        }
        let [_, _, b, _, _] = m.offsets();
        for j in 0..hidden {
            m.params[b + hidden + j] = 1.0;
        }
        m
    }

    fn offsets(&self) -> [usize; 5] {
        let h4 = 4 * self.hidden;
        let w = 0;
        let u = w + h4 * self.d_in;
        let b = u + h4 * self.hidden;
        let wo = b + h4;
        let bo = wo + self.hidden;
        [w, u, b, wo, bo]
    }

    pub fn forward(&self, x: &[f64]) -> Result<LstmCache, ForecastError> {
        self.forward_with(&self.params, x)
    }

    /// Runs the recurrence over `x` (row-major `T × d_in`).
    pub fn forward_with(&self, params: &[f64], x: &[f64]) -> Result<LstmCache, ForecastError> {
        if params.len() != self.params.len() {
            return Err(ForecastError::DimensionMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        if self.d_in == 0 || !x.len().is_multiple_of(self.d_in) {
            return Err(ForecastError::DimensionMismatch { expected: self.d_in, got: x.len() });
        }
        let h = self.hidden;
        let [w, u, b, wo, bo] = self.offsets();
        let steps = x.len() / self.d_in;
        let mut cache = LstmCache {
            steps,
            gates: Vec::with_capacity(steps),
            cells: Vec::with_capacity(steps),
            hs: Vec::with_capacity(steps),
            output: 0.0,
        };
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut tmp = vec![0.0; 4 * h];
        for t in 0..steps {
            let mut z: Vec<f64> = params[b..b + 4 * h].to_vec();
            matvec(&params[w..u], 4 * h, &x[t * self.d_in..(t + 1) * self.d_in], &mut tmp);
            z.iter_mut().zip(&tmp).for_each(|(a, v)| *a += v);
            matvec(&params[u..b], 4 * h, &h_prev, &mut tmp);
            z.iter_mut().zip(&tmp).for_each(|(a, v)| *a += v);
            for (k, v) in z.iter_mut().enumerate() {
                *v = if k < 3 * h { sigmoid(*v) } else { tanh(*v) };
            }
            let c: Vec<f64> = (0..h).map(|j| z[h + j] * c_prev[j] + z[j] * z[3 * h + j]).collect();
            let hn: Vec<f64> = (0..h).map(|j| z[2 * h + j] * tanh(c[j])).collect();
            cache.gates.push(z);
            cache.cells.push(c.clone());
            cache.hs.push(hn.clone());
            h_prev = hn;
            c_prev = c;
        }
        cache.output = dot(&params[wo..bo], &h_prev) + params[bo];
        Ok(cache)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, ForecastError> {
        Ok(self.forward(x)?.output)
    }

    /// Accumulates `d_output · ∂output/∂params` into `grad`.
    pub fn backward(&self, params: &[f64], x: &[f64], cache: &LstmCache, d_output: f64, grad: &mut [f64]) {
        let h = self.hidden;
        let [w, u, b, wo, bo] = self.offsets();
        let steps = cache.steps;
        if steps == 0 {
            grad[bo] += d_output;
            return;
        }
        grad[bo] += d_output;
        for j in 0..h {
            grad[wo + j] += d_output * cache.hs[steps - 1][j];
        }
        let mut dh: Vec<f64> = params[wo..bo].iter().map(|v| v * d_output).collect();
        let mut dc = vec![0.0; h];
        let zero = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let g = &cache.gates[t];
            let c = &cache.cells[t];
            let c_prev = if t > 0 { &cache.cells[t - 1] } else { &zero };
            let h_prev = if t > 0 { &cache.hs[t - 1] } else { &zero };
            for j in 0..h {
                let tc = tanh(c[j]);
                let (ig, fg, og, cg) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                dc[j] += dh[j] * og * (1.0 - tc * tc);
                dz[j] = dc[j] * cg * ig * (1.0 - ig);
                dz[h + j] = dc[j] * c_prev[j] * fg * (1.0 - fg);
                dz[2 * h + j] = dh[j] * tc * og * (1.0 - og);
                dz[3 * h + j] = dc[j] * ig * (1.0 - cg * cg);
                dc[j] *= fg;
            }
            outer_acc(&mut grad[w..u], &dz, &x[t * self.d_in..(t + 1) * self.d_in]);
            outer_acc(&mut grad[u..b], &dz, h_prev);
            grad[b..b + 4 * h].iter_mut().zip(&dz).for_each(|(a, v)| *a += v);
            dh.iter_mut().for_each(|v| *v = 0.0);
            crate::math::matvec_t_acc(&params[u..b], &dz, &mut dh);
        }
    }

    /// Mean squared error over `windows` and its gradient.
    pub fn mse_and_grad(&self, params: &[f64], windows: &[&Window]) -> Result<(f64, Vec<f64>), ForecastError> {
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let n = windows.len().max(1) as f64;
        for w in windows {
            let c = self.forward_with(params, &w.x)?;
            let r = c.output - w.y;
            loss += r * r / n;
            self.backward(params, &w.x, &c, 2.0 * r / n, &mut grad);
        }
        Ok((loss, grad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LstmTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Minibatch Adam on MSE. Returns the trained model and the full-training-set
/// loss before training and after every epoch.
pub fn train_lstm(mut model: Lstm, train: &[Window], config: &LstmTrainConfig) -> Result<(Lstm, Vec<f64>), ForecastError> {
    if train.is_empty() {
        return Err(ForecastError::EmptyInput);
    }
    let all: Vec<&Window> = train.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(model.params.len(), config.learning_rate, 0.0);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = vec![model.mse_and_grad(&model.params, &all)?.0];
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<&Window> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grad) = model.mse_and_grad(&model.params, &batch)?;
            if !loss.is_finite() {
                return Err(ForecastError::NonFiniteLoss { epoch });
            }
            opt.step(&mut model.params, &grad);
        }
        let (loss, _) = model.mse_and_grad(&model.params, &all)?;
        if !loss.is_finite() {
            return Err(ForecastError::NonFiniteLoss { epoch });
        }
        trace.push(loss);
    }
    Ok((model, trace))
}

/// RMSE of the model's predictions on `windows`, in normalized units.
pub fn evaluate_forecast(model: &Lstm, windows: &[Window]) -> Result<f64, ForecastError> {
    let pred = windows.iter().map(|w| model.predict(&w.x)).collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<f64> = windows.iter().map(|w| w.y).collect();
    crate::eval::rmse(&pred, &truth).map_err(|_| ForecastError::EmptyInput)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_predict_zero() {
        let m = Lstm::zeros(3, 4);
        assert_eq!(m.predict(&[0.3; 12]).unwrap(), 0.0);
        assert!(m.predict(&[0.3; 5]).is_err());
    }

    #[test]
    fn hand_computed_recurrence() {
        // hidden 2, d_in 1, T 2
        let mut m = Lstm::zeros(1, 2);
        let p: Vec<f64> = (0..m.params.len()).map(|k| 0.1 * ((k % 7) as f64) - 0.3).collect();
        m.params = p.clone();
        let x = [0.5, -1.0];
        let (w, u, b, wo, bo) = (&p[0..8], &p[8..24], &p[24..32], &p[32..34], p[34]);
        let sig = |v: f64| 1.0 / (1.0 + libm::exp(-v));
        let mut h = [0.0, 0.0];
        let mut c = [0.0, 0.0];
        for xt in x {
            let mut z = [0.0; 8];
            for r in 0..8 {
                z[r] = w[r] * xt + u[r * 2] * h[0] + u[r * 2 + 1] * h[1] + b[r];
            }
            let mut hn = [0.0; 2];
            for j in 0..2 {
                let (i, f, o, g) = (sig(z[j]), sig(z[2 + j]), sig(z[4 + j]), libm::tanh(z[6 + j]));
                c[j] = f * c[j] + i * g;
                hn[j] = o * libm::tanh(c[j]);
            }
            h = hn;
        }
        let y = wo[0] * h[0] + wo[1] * h[1] + bo;
        assert!((m.predict(&x).unwrap() - y).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let m = Lstm::new(2, 3, 1);
        let ws: Vec<Window> = (0..4)
            .map(|i| Window {
                x: vec![0.1 * i as f64; 6],
                y: 0.2,
                target_day: i + 3,
            })
            .collect();
        let cfg = LstmTrainConfig {
            hidden: 3,
            epochs: 3,
            learning_rate: 0.0,
            batch_size: 2,
            seed: 0,
        };
        let (out, trace) = train_lstm(m.clone(), &ws, &cfg).unwrap();
        assert_eq!(out.params, m.params);
        assert!(trace.iter().all(|l| *l == trace[0]));
    }
}
