//! Diagonal-covariance Gaussian mixtures and the two-model likelihood-ratio
//! detector.

mod em;
mod train;

pub use em::{train_em, EmFit};
pub use train::{kmeans_plus_plus, train_gd, GmmParams, TrainConfig};

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dsp::{CepstralFeatures, FeatureFingerprint};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Mixture of `M` axis-aligned Gaussians in `D` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Array2<f64>,
    variances: Array2<f64>,
    /// `ln w_m - 0.5 * sum_d ln(2 pi var_md)`
    log_norm: Vec<f64>,
    precisions: Array2<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Array2<f64>, variances: Array2<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::Shape("mixture needs at least one component".into()));
        }
        if means.nrows() != m || variances.dim() != means.dim() {
            return Err(Error::Shape(format!(
                "weights {m}, means {:?}, variances {:?}",
                means.dim(),
                variances.dim()
            )));
        }
        if means.ncols() == 0 {
            return Err(Error::Shape("mixture needs at least one dimension".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 || weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Range(format!(
                "weights must be positive and sum to 1 (sum {total})"
            )));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Range("variances must be positive and finite".into()));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range("means must be finite".into()));
        }
        let log_norm = (0..m)
            .map(|k| {
                weights[k].ln()
                    - 0.5
                        * variances
                            .row(k)
                            .iter()
                            .map(|&v| LN_2PI + v.ln())
                            .sum::<f64>()
            })
            .collect();
        let precisions = variances.mapv(|v| 1.0 / v);
        Ok(Self {
            weights,
            means,
            variances,
            log_norm,
            precisions,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn variances(&self) -> &Array2<f64> {
        &self.variances
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "vector has {} dims, model has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Per-component `ln w_m + ln N(x; mu_m, var_m)` into `out`.
    fn component_log_probs(&self, x: &[f64], out: &mut [f64]) {
        for (k, slot) in out.iter_mut().enumerate() {
            let mu = self.means.row(k);
            let prec = self.precisions.row(k);
            let mut q = 0.0;
            for d in 0..x.len() {
                let diff = x[d] - mu[d];
                q += diff * diff * prec[d];
            }
            *slot = self.log_norm[k] - 0.5 * q;
        }
    }

    /// `ln sum_m w_m N(x; mu_m, diag var_m)`, evaluated with log-sum-exp.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut buf = vec![0.0; self.n_components()];
        self.component_log_probs(x, &mut buf);
        Ok(log_sum_exp(&buf))
    }

    /// Log density and its gradient with respect to `x`:
    /// `sum_m gamma_m(x) * (mu_m - x) / var_m`.
    pub fn log_density_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x)?;
        let mut lp = vec![0.0; self.n_components()];
        self.component_log_probs(x, &mut lp);
        let total = log_sum_exp(&lp);
        let mut grad = vec![0.0; x.len()];
        for (k, &l) in lp.iter().enumerate() {
            let gamma = (l - total).exp();
            if gamma == 0.0 {
                continue;
            }
            let mu = self.means.row(k);
            let prec = self.precisions.row(k);
            for d in 0..x.len() {
                grad[d] += gamma * (mu[d] - x[d]) * prec[d];
            }
        }
        Ok((total, grad))
    }

    /// Mean log density over the rows of `frames`.
    pub fn mean_log_likelihood(&self, frames: ArrayView2<'_, f64>) -> Result<f64> {
        if frames.nrows() == 0 {
            return Err(Error::Empty("no frames".into()));
        }
        if frames.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "frames have {} dims, model has {}",
                frames.ncols(),
                self.dim()
            )));
        }
        let mut buf = vec![0.0; self.n_components()];
        let mut total = 0.0;
        for row in frames.rows() {
            let x = row
                .as_slice()
                .map(|s| s.to_vec())
                .unwrap_or_else(|| row.to_vec());
            self.component_log_probs(&x, &mut buf);
            total += log_sum_exp(&buf);
        }
        Ok(total / frames.nrows() as f64)
    }

    pub(crate) fn to_file(&self, fingerprint: Option<FeatureFingerprint>) -> GmmModelFile {
        GmmModelFile {
            m: self.n_components(),
            d: self.dim(),
            weights: self.weights.clone(),
            means: self.means.rows().into_iter().map(|r| r.to_vec()).collect(),
            variances: self
                .variances
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            feature_fingerprint: fingerprint,
        }
    }

    pub(crate) fn from_file(file: &GmmModelFile) -> Result<Self> {
        let rows = |v: &Vec<Vec<f64>>, what: &str| -> Result<Array2<f64>> {
            if v.len() != file.m || v.iter().any(|r| r.len() != file.d) {
                return Err(Error::Shape(format!(
                    "{what} do not match m={} d={}",
                    file.m, file.d
                )));
            }
            Ok(Array2::from_shape_vec((file.m, file.d), v.concat()).expect("checked"))
        };
        if file.weights.len() != file.m {
            return Err(Error::Shape(format!(
                "{} weights for m={}",
                file.weights.len(),
                file.m
            )));
        }
        GmmModel::new(
            file.weights.clone(),
            rows(&file.means, "means")?,
            rows(&file.variances, "variances")?,
        )
    }

    pub fn to_json(&self, fingerprint: Option<FeatureFingerprint>) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file(fingerprint))?)
    }

    pub fn from_json(text: &str) -> Result<(Self, Option<FeatureFingerprint>)> {
        let file: GmmModelFile = serde_json::from_str(text)?;
        Ok((Self::from_file(&file)?, file.feature_fingerprint))
    }
}

/// On-disk model schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct GmmModelFile {
    m: usize,
    d: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    feature_fingerprint: Option<FeatureFingerprint>,
}

/// Real-speech and generated-speech models scored by their log-likelihood ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorPair {
    pub real: GmmModel,
    pub fake: GmmModel,
    pub fingerprint: Option<FeatureFingerprint>,
}

#[derive(Serialize, Deserialize)]
struct DetectorFile {
    real: GmmModelFile,
    fake: GmmModelFile,
    #[serde(default)]
    provenance: serde_json::Value,
}

impl DetectorPair {
    pub fn new(
        real: GmmModel,
        fake: GmmModel,
        fingerprint: Option<FeatureFingerprint>,
    ) -> Result<Self> {
        if real.dim() != fake.dim() {
            return Err(Error::Shape(format!(
                "real model has {} dims, fake model {}",
                real.dim(),
                fake.dim()
            )));
        }
        Ok(Self {
            real,
            fake,
            fingerprint,
        })
    }

    pub fn dim(&self) -> usize {
        self.real.dim()
    }

    pub fn check_compatible(&self, feats: &CepstralFeatures) -> Result<()> {
        if feats.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "features have {} dims per frame, detector expects {}",
                feats.dim(),
                self.dim()
            )));
        }
        let Some(expected) = &self.fingerprint else {
            return Ok(());
        };
        let mismatch = match &feats.fingerprint {
            Some(found) => found != expected,
            None => {
                feats.kind != expected.kind || feats.delta_window != expected.config.delta_window
            }
        };
        if mismatch {
            return Err(Error::Compatibility {
                expected: expected.to_string(),
                found: feats.fingerprint.map(|f| f.to_string()).unwrap_or_else(|| {
                    format!(
                        "{} features, delta window {}",
                        feats.kind, feats.delta_window
                    )
                }),
            });
        }
        Ok(())
    }

    /// Per-frame log-likelihood ratios `ln p(x|real) - ln p(x|fake)`.
    pub fn frame_ratios(&self, frames: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if frames.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "frames have {} dims, detector {}",
                frames.ncols(),
                self.dim()
            )));
        }
        let mut real_buf = vec![0.0; self.real.n_components()];
        let mut fake_buf = vec![0.0; self.fake.n_components()];
        Ok(frames
            .rows()
            .into_iter()
            .map(|row| {
                let x = row.to_vec();
                self.real.component_log_probs(&x, &mut real_buf);
                self.fake.component_log_probs(&x, &mut fake_buf);
                log_sum_exp(&real_buf) - log_sum_exp(&fake_buf)
            })
            .collect())
    }

    /// Mean frame ratio over a `T x D` matrix.
    pub fn score_frames(&self, frames: ArrayView2<'_, f64>) -> Result<f64> {
        if frames.nrows() == 0 {
            return Err(Error::Empty("cannot score zero frames".into()));
        }
        let ratios = self.frame_ratios(frames)?;
        Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
    }

    pub fn to_json(&self, provenance: serde_json::Value) -> Result<String> {
        let file = DetectorFile {
            real: self.real.to_file(self.fingerprint),
            fake: self.fake.to_file(self.fingerprint),
            provenance,
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    /// Returns the pair and the provenance block stored with it.
    pub fn from_json(text: &str) -> Result<(Self, serde_json::Value)> {
        let file: DetectorFile = serde_json::from_str(text)?;
        if file.real.feature_fingerprint != file.fake.feature_fingerprint {
            return Err(Error::Shape(
                "real and fake models carry different fingerprints".into(),
            ));
        }
        let pair = DetectorPair::new(
            GmmModel::from_file(&file.real)?,
            GmmModel::from_file(&file.fake)?,
            file.real.feature_fingerprint,
        )?;
        Ok((pair, file.provenance))
    }

    pub fn save(&self, path: impl AsRef<Path>, provenance: serde_json::Value) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json(provenance)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, serde_json::Value)> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Mean log-likelihood ratio of a clip's stacked frames. Positive favours real.
pub fn score(pair: &DetectorPair, feats: &CepstralFeatures) -> Result<f64> {
    pair.check_compatible(feats)?;
    if feats.n_frames() == 0 {
        return Err(Error::Empty("features have zero frames".into()));
    }
    pair.score_frames(feats.stacked().view())
}

/// Closed-form density of a single normal, used by tests and quadrature checks.
pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, m: usize, d: usize) -> GmmModel {
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        GmmModel::new(
            raw.iter().map(|w| w / total).collect(),
            Array2::from_shape_fn((m, d), |_| rng.random_range(-2.0..2.0)),
            Array2::from_shape_fn((m, d), |_| rng.random_range(0.3..2.0)),
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_at_origin() {
        let g = GmmModel::new(vec![1.0], array![[0.0]], array![[1.0]]).unwrap();
        let lp = g.log_density(&[0.0]).unwrap();
        assert!((lp - (-0.5 * (2.0 * PI).ln())).abs() < 1e-12);
        assert!((lp + 0.91894).abs() < 1e-5);
    }

    #[test]
    fn duplicated_component_collapses() {
        let one = GmmModel::new(vec![1.0], array![[1.0, -1.0]], array![[0.5, 2.0]]).unwrap();
        let two = GmmModel::new(
            vec![0.5, 0.5],
            array![[1.0, -1.0], [1.0, -1.0]],
            array![[0.5, 2.0], [0.5, 2.0]],
        )
        .unwrap();
        for x in [[0.0, 0.0], [3.0, -2.0], [-1.0, 5.0]] {
            assert!((one.log_density(&x).unwrap() - two.log_density(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_sum_and_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let g = random_model(&mut rng, 4, 3);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let naive: f64 = (0..4)
                .map(|k| {
                    g.weights[k]
                        * (0..3)
                            .map(|d| {
                                normal_log_pdf(x[d], g.means[[k, d]], g.variances[[k, d]]).exp()
                            })
                            .product::<f64>()
                })
                .sum();
            let lp = g.log_density(&x).unwrap();
            assert!((lp - naive.ln()).abs() < 1e-10);

            let order = [2, 0, 3, 1];
            let perm = GmmModel::new(
                order.iter().map(|&k| g.weights[k]).collect(),
                Array2::from_shape_fn((4, 3), |(k, d)| g.means[[order[k], d]]),
                Array2::from_shape_fn((4, 3), |(k, d)| g.variances[[order[k], d]]),
            )
            .unwrap();
            assert!((perm.log_density(&x).unwrap() - lp).abs() < 1e-12);
        }
    }

    #[test]
    fn far_points_stay_finite() {
        let g =
            GmmModel::new(vec![0.5, 0.5], array![[0.0], [1.0]], array![[1e-4], [1e-4]]).unwrap();
        let lp = g.log_density(&[1e6]).unwrap();
        assert!(lp.is_finite());
        let (_, grad) = g.log_density_grad(&[1e6]).unwrap();
        assert!(grad[0].is_finite());
    }

    #[test]
    fn density_integrates_to_one() {
        let g =
            GmmModel::new(vec![0.3, 0.7], array![[-1.0], [2.0]], array![[0.25], [1.5]]).unwrap();
        // trapezoid over +-10 sigma of the widest component
        let (lo, hi) = (-1.0 - 10.0 * 1.5f64.sqrt(), 2.0 + 10.0 * 1.5f64.sqrt());
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let integral: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * g.log_density(&[lo + i as f64 * h]).unwrap().exp()
            })
            .sum::<f64>()
            * h;
        assert!((integral - 1.0).abs() < 1e-3);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let g = random_model(&mut rng, 3, 4);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, grad) = g.log_density_grad(&x).unwrap();
            for d in 0..4 {
                let h = 1e-5;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[d] += h;
                xm[d] -= h;
                let fd = (g.log_density(&xp).unwrap() - g.log_density(&xm).unwrap()) / (2.0 * h);
                assert!(
                    (fd - grad[d]).abs() <= 1e-5 * grad[d].abs().max(1e-3),
                    "{fd} vs {}",
                    grad[d]
                );
            }
        }
    }

    #[test]
    fn construction_rejects_invalid_parameters() {
        assert!(GmmModel::new(vec![0.5, 0.4], array![[0.0], [1.0]], array![[1.0], [1.0]]).is_err());
        assert!(GmmModel::new(vec![1.0, 0.0], array![[0.0], [1.0]], array![[1.0], [1.0]]).is_err());
        assert!(GmmModel::new(vec![1.0], array![[0.0]], array![[0.0]]).is_err());
        assert!(GmmModel::new(vec![1.0], array![[0.0, 1.0]], array![[1.0]]).is_err());
        let g = GmmModel::new(vec![1.0], array![[0.0]], array![[1.0]]).unwrap();
        assert!(matches!(g.log_density(&[0.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = random_model(&mut rng, 3, 2);
        let (back, fp) = GmmModel::from_json(&g.to_json(None).unwrap()).unwrap();
        assert_eq!(back, g);
        assert!(fp.is_none());
        let text = g.to_json(None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in [
            "m",
            "d",
            "weights",
            "means",
            "variances",
            "feature_fingerprint",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn score_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_model(&mut rng, 2, 3);
        let b = random_model(&mut rng, 2, 3);
        let base = Array2::from_shape_fn((6, 1), |_| rng.random_range(-1.0..1.0));
        let feats = CepstralFeatures::from_base(base, 1, crate::dsp::FeatureKind::Lfcc).unwrap();

        let same = DetectorPair::new(a.clone(), a.clone(), None).unwrap();
        assert_eq!(score(&same, &feats).unwrap(), 0.0);

        let ab = DetectorPair::new(a.clone(), b.clone(), None).unwrap();
        let ba = DetectorPair::new(b, a, None).unwrap();
        let s = score(&ab, &feats).unwrap();
        assert!((s + score(&ba, &feats).unwrap()).abs() < 1e-12);

        let doubled =
            ndarray::concatenate(ndarray::Axis(0), &[feats.base.view(), feats.base.view()])
                .unwrap();
        let twice = CepstralFeatures::from_base(doubled, 1, crate::dsp::FeatureKind::Lfcc).unwrap();
        let stacked = ndarray::concatenate(
            ndarray::Axis(0),
            &[feats.stacked().view(), feats.stacked().view()],
        )
        .unwrap();
        assert!((ab.score_frames(stacked.view()).unwrap() - s).abs() < 1e-12);
        let _ = twice;

        let empty =
            CepstralFeatures::from_base(Array2::zeros((0, 1)), 1, crate::dsp::FeatureKind::Lfcc)
                .unwrap();
        assert!(matches!(score(&ab, &empty), Err(Error::Empty(_))));
    }
}
