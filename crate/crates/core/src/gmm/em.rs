use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::{check_frames, column_variance, kmeans_plus_plus, variance_floor};
use super::{log_sum_exp, GmmModel};
use crate::error::Result;

const FLOOR_RATIO: f64 = 1e-4;
const EMPTY_MASS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    /// Total data log-likelihood of the starting model and after each iteration.
    pub log_likelihoods: Vec<f64>,
}

/// Expectation-maximisation with k-means++ means, data variances and uniform
/// weights as the starting point. A component whose responsibility mass
/// vanishes is re-seeded at a random frame.
pub fn train_em(
    frames: ArrayView2<'_, f64>,
    components: usize,
    iterations: usize,
    seed: u64,
) -> Result<EmFit> {
    check_frames(frames, components)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = frames.dim();
    let data_var = column_variance(frames);
    let floor = variance_floor(&data_var, FLOOR_RATIO);
    let mut weights = vec![1.0 / components as f64; components];
    let mut means = kmeans_plus_plus(frames, components, &mut rng);
    let mut vars = Array2::from_shape_fn((components, d), |(_, j)| data_var[j].max(floor[j]));

    let mut history = Vec::with_capacity(iterations + 1);
    let mut resp = Array2::<f64>::zeros((n, components));
    let mut lp = vec![0.0; components];
    let mut model = GmmModel::new(weights.clone(), means.clone(), vars.clone())?;
    for iter in 0..=iterations {
        let mut total = 0.0;
        for (i, x) in frames.rows().into_iter().enumerate() {
            model.component_log_probs(x.as_slice().unwrap_or(&x.to_vec()), &mut lp);
            let l = log_sum_exp(&lp);
            total += l;
            for k in 0..components {
                resp[[i, k]] = (lp[k] - l).exp();
            }
        }
        history.push(total);
        if iter == iterations {
            break;
        }

        let mass: Array1<f64> = resp.sum_axis(ndarray::Axis(0));
        for k in 0..components {
            if mass[k] < EMPTY_MASS {
                means.row_mut(k).assign(&frames.row(rng.random_range(0..n)));
                vars.row_mut(k).assign(&data_var.mapv(|v| v.max(1e-12)));
                weights[k] = 1.0 / n as f64;
                continue;
            }
            weights[k] = mass[k] / n as f64;
            let mut mu = Array1::<f64>::zeros(d);
            for (i, x) in frames.rows().into_iter().enumerate() {
                mu.scaled_add(resp[[i, k]], &x);
            }
            mu /= mass[k];
            let mut var = Array1::<f64>::zeros(d);
            for (i, x) in frames.rows().into_iter().enumerate() {
                let r = resp[[i, k]];
                for j in 0..d {
                    var[j] += r * (x[j] - mu[j]).powi(2);
                }
            }
            var /= mass[k];
            for j in 0..d {
                var[j] = var[j].max(floor[j]);
            }
            means.row_mut(k).assign(&mu);
            vars.row_mut(k).assign(&var);
        }
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        model = GmmModel::new(weights.clone(), means.clone(), vars.clone())?;
    }
    Ok(EmFit {
        model,
        log_likelihoods: history,
    })
}
