use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{log_sum_exp, GmmModel, LN_2PI};
use crate::error::{Error, Result};

/// Rows per work unit when a batch is split across threads. Fixed so the
/// reduction order, and therefore the result, does not depend on thread count.
const CHUNK_ROWS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub components: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Per-dimension variance floor as a fraction of the data variance.
    pub variance_floor_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            components: 128,
            epochs: 10,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            variance_floor_ratio: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "components, epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.variance_floor_ratio > 0.0) || !self.variance_floor_ratio.is_finite() {
            return Err(Error::Config(
                "variance floor ratio must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Unconstrained parameterisation used by gradient training:
/// `w = softmax(logits)`, `var = floor + exp(log_excess)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub logits: Array1<f64>,
    pub means: Array2<f64>,
    pub log_excess: Array2<f64>,
    pub floor: Array1<f64>,
}

impl GmmParams {
    fn zeros_like(&self) -> Self {
        Self {
            logits: Array1::zeros(self.logits.len()),
            means: Array2::zeros(self.means.dim()),
            log_excess: Array2::zeros(self.log_excess.dim()),
            floor: self.floor.clone(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        self.logits += &other.logits;
        self.means += &other.means;
        self.log_excess += &other.log_excess;
    }

    fn variances(&self) -> Array2<f64> {
        let mut v = self.log_excess.mapv(f64::exp);
        v += &self.floor.view().insert_axis(Axis(0));
        v
    }

    fn weights(&self) -> Vec<f64> {
        // keep every weight strictly positive even when a logit falls far behind
        let lse = log_sum_exp(self.logits.as_slice().expect("contiguous"));
        let raw: Vec<f64> = self
            .logits
            .iter()
            .map(|l| (l - lse).exp().max(1e-300))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// Parameters set from explicit weights and variances, each variance above its floor.
    pub fn from_model(model: &GmmModel, floor: Array1<f64>) -> Result<Self> {
        if floor.len() != model.dim() {
            return Err(Error::Shape(
                "floor length differs from model dimension".into(),
            ));
        }
        let excess = Array2::from_shape_fn(model.variances().dim(), |(k, d)| {
            model.variances()[[k, d]] - floor[d]
        });
        if excess.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Range("variances must exceed the floor".into()));
        }
        Ok(Self {
            logits: model.weights().iter().map(|w| w.ln()).collect(),
            means: model.means().clone(),
            log_excess: excess.mapv(f64::ln),
            floor,
        })
    }

    pub fn to_model(&self) -> Result<GmmModel> {
        GmmModel::new(self.weights(), self.means.clone(), self.variances())
    }

    /// Summed negative log-likelihood of `rows` of `frames` and its gradient
    /// with respect to every free parameter.
    pub fn nll_and_grad(&self, frames: ArrayView2<'_, f64>, rows: &[usize]) -> (f64, GmmParams) {
        let m = self.logits.len();
        let d = self.means.ncols();
        let weights = self.weights();
        let excess = self.log_excess.mapv(f64::exp);
        let var = self.variances();
        let prec = var.mapv(|v| 1.0 / v);
        let log_norm: Vec<f64> = (0..m)
            .map(|k| {
                weights[k].ln() - 0.5 * var.row(k).iter().map(|v| LN_2PI + v.ln()).sum::<f64>()
            })
            .collect();

        let partial = |chunk: &[usize]| {
            let mut g = self.zeros_like();
            let mut nll = 0.0;
            let mut lp = vec![0.0; m];
            for &i in chunk {
                let x = frames.row(i);
                for k in 0..m {
                    let mu = self.means.row(k);
                    let p = prec.row(k);
                    let mut q = 0.0;
                    for j in 0..d {
                        let diff = x[j] - mu[j];
                        q += diff * diff * p[j];
                    }
                    lp[k] = log_norm[k] - 0.5 * q;
                }
                let total = log_sum_exp(&lp);
                nll -= total;
                for k in 0..m {
                    let gamma = (lp[k] - total).exp();
                    g.logits[k] -= gamma - weights[k];
                    if gamma == 0.0 {
                        continue;
                    }
                    let mu = self.means.row(k);
                    let p = prec.row(k);
                    for j in 0..d {
                        let z = (x[j] - mu[j]) * p[j];
                        g.means[[k, j]] -= gamma * z;
                        // d(-ln N)/d var = 0.5 (1/var - diff^2/var^2); d var / d s = exp(s)
                        g.log_excess[[k, j]] -= gamma * 0.5 * (z * z - p[j]) * excess[[k, j]];
                    }
                }
            }
            (nll, g)
        };

        let parts: Vec<(f64, GmmParams)> = rows.par_chunks(CHUNK_ROWS).map(partial).collect();
        let mut grad = self.zeros_like();
        let mut nll = 0.0;
        for (n, g) in &parts {
            nll += n;
            grad.add_assign(g);
        }
        (nll, grad)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step<'a>(
        &mut self,
        params: impl Iterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = &'a f64>,
    ) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

pub(crate) fn check_frames(frames: ArrayView2<'_, f64>, components: usize) -> Result<()> {
    if frames.ncols() == 0 {
        return Err(Error::Shape("frames have zero dimensions".into()));
    }
    if frames.nrows() < components {
        return Err(Error::Data {
            frames: frames.nrows(),
            components,
        });
    }
    if frames.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range(
            "training frames contain non-finite values".into(),
        ));
    }
    Ok(())
}

/// Population variance of each column.
pub(crate) fn column_variance(frames: ArrayView2<'_, f64>) -> Array1<f64> {
    let mean = frames.mean_axis(Axis(0)).expect("non-empty");
    let n = frames.nrows() as f64;
    let mut var = Array1::zeros(frames.ncols());
    for row in frames.rows() {
        for (j, v) in row.iter().enumerate() {
            var[j] += (v - mean[j]).powi(2);
        }
    }
    var / n
}

/// Variance floor per dimension. Constant columns get a tiny absolute floor
/// so the model stays well defined.
pub(crate) fn variance_floor(data_var: &Array1<f64>, ratio: f64) -> Array1<f64> {
    data_var.mapv(|v| (ratio * v).max(1e-12))
}

/// k-means++ seeding: first centre uniform, each later centre drawn with
/// probability proportional to squared distance from the nearest chosen one.
pub fn kmeans_plus_plus(
    frames: ArrayView2<'_, f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let n = frames.nrows();
    let mut centres = Array2::zeros((k, frames.ncols()));
    let first = rng.random_range(0..n);
    centres.row_mut(0).assign(&frames.row(first));
    let sq = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
    };
    let mut nearest: Vec<f64> = frames
        .rows()
        .into_iter()
        .map(|r| sq(r, frames.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centres.row_mut(c).assign(&frames.row(pick));
        for (i, row) in frames.rows().into_iter().enumerate() {
            nearest[i] = nearest[i].min(sq(row, frames.row(pick)));
        }
    }
    centres
}

/// Mini-batch Adam on the mean negative log-likelihood. Deterministic for a
/// given seed and independent of the rayon pool size.
pub fn train_gd(frames: ArrayView2<'_, f64>, cfg: &TrainConfig) -> Result<GmmModel> {
    cfg.validate()?;
    check_frames(frames, cfg.components)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data_var = column_variance(frames);
    let floor = variance_floor(&data_var, cfg.variance_floor_ratio);
    let m = cfg.components;
    let d = frames.ncols();
    let mut params = GmmParams {
        logits: Array1::zeros(m),
        means: kmeans_plus_plus(frames, m, &mut rng),
        log_excess: Array2::from_shape_fn((m, d), |(_, j)| {
            (data_var[j] - floor[j]).max(floor[j]).ln()
        }),
        floor,
    };
    let n_params = m + 2 * m * d;
    let mut adam = Adam::new(n_params, cfg.learning_rate);
    let mut order: Vec<usize> = (0..frames.nrows()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_nll = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (nll, grad) = params.nll_and_grad(frames, batch);
            epoch_nll += nll;
            if !nll.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            let scale = 1.0 / batch.len() as f64;
            let p_iter = params
                .logits
                .iter_mut()
                .chain(params.means.iter_mut())
                .chain(params.log_excess.iter_mut());
            let g: Vec<f64> = grad
                .logits
                .iter()
                .chain(grad.means.iter())
                .chain(grad.log_excess.iter())
                .map(|g| g * scale)
                .collect();
            adam.step(p_iter, g.iter());
        }
        let finite = epoch_nll.is_finite()
            && params.means.iter().all(|v| v.is_finite())
            && params
                .log_excess
                .iter()
                .all(|v| v.is_finite() && *v < 700.0)
            && params.logits.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Divergence { epoch });
        }
    }
    params.to_model().map_err(|_| Error::Divergence {
        epoch: cfg.epochs - 1,
    })
}
