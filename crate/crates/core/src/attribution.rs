//! Blur-path integrated gradients of the detector score over the three
//! cepstral feature blocks.

use std::io::Write;

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::CepstralFeatures;
use crate::error::{Error, Result};
use crate::gmm::DetectorPair;

/// Smallest nonzero blur on the path, relative to `sigma_max`.
const SIGMA_MIN_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlurIgConfig {
    pub sigma_max: f64,
    pub steps: usize,
}

impl Default for BlurIgConfig {
    fn default() -> Self {
        Self {
            sigma_max: 5.0,
            steps: 100,
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Half-sample symmetric reflection: `-1 -> 0`, `n -> n - 1`, period `2n`.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn blur_axis(x: ArrayView2<'_, f64>, kernel: &[f64], axis: Axis) -> Array2<f64> {
    let radius = (kernel.len() / 2) as isize;
    let n = x.len_of(axis);
    let mut out = Array2::zeros(x.dim());
    for (mut dst, src) in out.lanes_mut(axis).into_iter().zip(x.lanes(axis)) {
        for i in 0..n {
            dst[i] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * src[reflect(i as isize + k as isize - radius, n)])
                .sum();
        }
    }
    out
}

/// Separable Gaussian blur over both axes with reflective edges.
pub fn gaussian_blur_2d(feat: ArrayView2<'_, f64>, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Range(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 || feat.is_empty() {
        return Ok(feat.to_owned());
    }
    let kernel = gaussian_kernel(sigma);
    let along_t = blur_axis(feat, &kernel, Axis(0));
    Ok(blur_axis(along_t.view(), &kernel, Axis(1)))
}

fn blur_blocks(feats: &CepstralFeatures, sigma: f64) -> Result<Array2<f64>> {
    let blocks = [
        gaussian_blur_2d(feats.base.view(), sigma)?,
        gaussian_blur_2d(feats.delta.view(), sigma)?,
        gaussian_blur_2d(feats.delta2.view(), sigma)?,
    ];
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    Ok(ndarray::concatenate(Axis(1), &views).expect("blocks share a frame count"))
}

/// Score of a stacked `T x 3R` map and its gradient with respect to every cell:
/// `(grad ln p_real(v_t) - grad ln p_fake(v_t)) / T` for frame `t`.
pub fn score_gradient(
    pair: &DetectorPair,
    stacked: ArrayView2<'_, f64>,
) -> Result<(f64, Array2<f64>)> {
    let (t, d) = stacked.dim();
    if d != pair.dim() {
        return Err(Error::Shape(format!(
            "map has {d} columns, detector expects {}",
            pair.dim()
        )));
    }
    if t == 0 {
        return Err(Error::Empty("cannot score zero frames".into()));
    }
    let rows: Vec<(f64, Vec<f64>)> = (0..t)
        .into_par_iter()
        .map(|i| {
            let x = stacked.row(i).to_vec();
            let (lr, gr) = pair.real.log_density_grad(&x)?;
            let (lf, gf) = pair.fake.log_density_grad(&x)?;
            Ok((
                lr - lf,
                gr.iter()
                    .zip(&gf)
                    .map(|(a, b)| (a - b) / t as f64)
                    .collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let mut grad = Array2::zeros((t, d));
    let mut total = 0.0;
    for (i, (ratio, g)) in rows.into_iter().enumerate() {
        total += ratio;
        grad.row_mut(i).assign(&ndarray::Array1::from(g));
    }
    Ok((total / t as f64, grad))
}

/// Signed per-cell attributions aligned with the feature blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub base: Array2<f64>,
    pub delta: Array2<f64>,
    pub delta2: Array2<f64>,
    pub config: BlurIgConfig,
    /// Score of the input features.
    pub score: f64,
    /// Score of the fully blurred baseline.
    pub baseline_score: f64,
}

impl AttributionMap {
    pub fn total(&self) -> f64 {
        self.base.sum() + self.delta.sum() + self.delta2.sum()
    }

    /// `|sum - (score - baseline)| / |score - baseline|`.
    pub fn completeness_residual(&self) -> f64 {
        let gap = self.score - self.baseline_score;
        (self.total() - gap).abs() / gap.abs()
    }

    pub fn stacked(&self) -> Array2<f64> {
        ndarray::concatenate(
            Axis(1),
            &[self.base.view(), self.delta.view(), self.delta2.view()],
        )
        .expect("blocks share a frame count")
    }

    /// One `block,t,r,value` line per cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "block,t,r,value")?;
        for (name, block) in [
            ("base", &self.base),
            ("delta", &self.delta),
            ("delta2", &self.delta2),
        ] {
            for ((t, r), v) in block.indexed_iter() {
                writeln!(w, "{name},{t},{r},{v}")?;
            }
        }
        Ok(())
    }

    /// ASCII PGM with time across and the three blocks stacked top to bottom.
    /// Zero maps to 128; the largest magnitude maps to 0 or 255.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let (t, r) = self.base.dim();
        let peak = self
            .base
            .iter()
            .chain(self.delta.iter())
            .chain(self.delta2.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        writeln!(w, "P2\n{t} {}\n255", 3 * r)?;
        for block in [&self.base, &self.delta, &self.delta2] {
            for row in 0..r {
                let line: Vec<String> = (0..t)
                    .map(|i| {
                        let v = if peak > 0.0 {
                            block[[i, row]] / peak
                        } else {
                            0.0
                        };
                        ((127.5 + 127.5 * v).round() as u8).to_string()
                    })
                    .collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        Ok(())
    }
}

/// Blur scales from `sigma_max` down to zero: `steps` geometric points ending
/// at `sigma_max * 1e-3`, then 0.
pub fn blur_path(cfg: &BlurIgConfig) -> Vec<f64> {
    let n = cfg.steps;
    let ratio = SIGMA_MIN_RATIO.powf(1.0 / (n - 1) as f64);
    let mut sigmas: Vec<f64> = (0..n)
        .map(|i| cfg.sigma_max * ratio.powi(i as i32))
        .collect();
    sigmas.push(0.0);
    sigmas
}

/// Integrates the score gradient along the blur path with the trapezoidal
/// rule, so the attributions sum to roughly `score - baseline_score`.
pub fn blur_ig(
    pair: &DetectorPair,
    feats: &CepstralFeatures,
    cfg: &BlurIgConfig,
) -> Result<AttributionMap> {
    if cfg.steps < 2 {
        return Err(Error::Range(format!(
            "need at least 2 steps, got {}",
            cfg.steps
        )));
    }
    if !(cfg.sigma_max > 0.0) || !cfg.sigma_max.is_finite() {
        return Err(Error::Range(format!(
            "sigma_max must be positive, got {}",
            cfg.sigma_max
        )));
    }
    pair.check_compatible(feats)?;
    let sigmas = blur_path(cfg);
    let mut prev_x = blur_blocks(feats, sigmas[0])?;
    let (baseline_score, mut prev_g) = score_gradient(pair, prev_x.view())?;
    let mut attr = Array2::<f64>::zeros(prev_x.dim());
    let mut score = baseline_score;
    for &sigma in &sigmas[1..] {
        let x = blur_blocks(feats, sigma)?;
        let (s, g) = score_gradient(pair, x.view())?;
        attr += &((&g + &prev_g) * 0.5 * (&x - &prev_x));
        prev_x = x;
        prev_g = g;
        score = s;
    }
    let r = feats.n_coeffs();
    Ok(AttributionMap {
        base: attr.slice(s![.., 0..r]).to_owned(),
        delta: attr.slice(s![.., r..2 * r]).to_owned(),
        delta2: attr.slice(s![.., 2 * r..]).to_owned(),
        config: *cfg,
        score,
        baseline_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureKind;
    use crate::gmm::GmmModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, m: usize, d: usize) -> GmmModel {
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        GmmModel::new(
            raw.iter().map(|w| w / total).collect(),
            Array2::from_shape_fn((m, d), |_| rng.random_range(-1.5..1.5)),
            Array2::from_shape_fn((m, d), |_| rng.random_range(0.5..2.0)),
        )
        .unwrap()
    }

    fn random_feats(rng: &mut ChaCha8Rng, t: usize, r: usize) -> CepstralFeatures {
        let base = Array2::from_shape_fn((t, r), |_| rng.random_range(-2.0..2.0));
        CepstralFeatures::from_base(base, 1, FeatureKind::Lfcc).unwrap()
    }

    #[test]
    fn zero_sigma_and_constant_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        assert_eq!(gaussian_blur_2d(x.view(), 0.0).unwrap(), x);
        let c = Array2::from_elem((6, 3), 2.5);
        for sigma in [0.3, 1.0, 4.0, 20.0] {
            let b = gaussian_blur_2d(c.view(), sigma).unwrap();
            assert!(b.iter().all(|v| (v - 2.5).abs() < 1e-12));
        }
        assert!(gaussian_blur_2d(x.view(), -1.0).is_err());
    }

    #[test]
    fn impulse_matches_direct_kernel_sum() {
        let (t, r) = (9, 7);
        let mut x = Array2::zeros((t, r));
        x[[4, 3]] = 1.0;
        x[[0, 6]] = -2.0;
        let sigma = 1.0;
        let got = gaussian_blur_2d(x.view(), sigma).unwrap();
        let radius = 3isize;
        let w = |k: isize| (-(k * k) as f64 / 2.0).exp();
        let norm: f64 = (-radius..=radius).map(w).sum();
        let refl = |i: isize, n: isize| -> isize {
            let mut i = i;
            while i < 0 || i >= n {
                i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
            }
            i
        };
        for i in 0..t as isize {
            for j in 0..r as isize {
                let mut acc = 0.0;
                for a in -radius..=radius {
                    for b in -radius..=radius {
                        acc += w(a)
                            * w(b)
                            * x[[
                                refl(i + a, t as isize) as usize,
                                refl(j + b, r as isize) as usize,
                            ]];
                    }
                }
                acc /= norm * norm;
                assert!((acc - got[[i as usize, j as usize]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn score_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let pair = DetectorPair::new(
                random_model(&mut rng, 3, 6),
                random_model(&mut rng, 2, 6),
                None,
            )
            .unwrap();
            let x = Array2::from_shape_fn((4, 6), |_| rng.random_range(-2.0..2.0));
            let (_, g) = score_gradient(&pair, x.view()).unwrap();
            let h = 1e-5;
            for ((i, j), &analytic) in g.indexed_iter() {
                let mut up = x.clone();
                up[[i, j]] += h;
                let mut down = x.clone();
                down[[i, j]] -= h;
                let fd = (pair.score_frames(up.view()).unwrap()
                    - pair.score_frames(down.view()).unwrap())
                    / (2.0 * h);
                assert!(
                    (fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-3),
                    "{fd} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn identical_models_attribute_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng, 2, 9);
        let pair = DetectorPair::new(m.clone(), m, None).unwrap();
        let map = blur_ig(
            &pair,
            &random_feats(&mut rng, 8, 3),
            &BlurIgConfig::default(),
        )
        .unwrap();
        assert!(map.stacked().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn completeness_improves_with_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pair = DetectorPair::new(
            random_model(&mut rng, 3, 9),
            random_model(&mut rng, 3, 9),
            None,
        )
        .unwrap();
        let feats = random_feats(&mut rng, 12, 3);
        let coarse = blur_ig(
            &pair,
            &feats,
            &BlurIgConfig {
                steps: 100,
                ..Default::default()
            },
        )
        .unwrap();
        let fine = blur_ig(
            &pair,
            &feats,
            &BlurIgConfig {
                steps: 200,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            fine.completeness_residual() < 0.02,
            "{}",
            fine.completeness_residual()
        );
        assert!(fine.completeness_residual() <= coarse.completeness_residual());
        assert!((fine.score - pair.score_frames(feats.stacked().view()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn single_dimension_difference_stays_in_its_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let real = random_model(&mut rng, 1, 9);
        let mut means = real.means().clone();
        means[[0, 4]] += 1.0;
        let fake = GmmModel::new(vec![1.0], means, real.variances().clone()).unwrap();
        let pair = DetectorPair::new(real, fake, None).unwrap();
        let map = blur_ig(
            &pair,
            &random_feats(&mut rng, 10, 3),
            &BlurIgConfig::default(),
        )
        .unwrap();
        for ((_, j), v) in map.stacked().indexed_iter() {
            if j != 4 {
                assert!(v.abs() < 1e-8);
            }
        }
        assert!(map.delta.column(1).iter().any(|v| v.abs() > 1e-6));
    }

    #[test]
    fn outputs_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pair = DetectorPair::new(
            random_model(&mut rng, 2, 6),
            random_model(&mut rng, 2, 6),
            None,
        )
        .unwrap();
        let feats = random_feats(&mut rng, 5, 2);
        let map = blur_ig(
            &pair,
            &feats,
            &BlurIgConfig {
                steps: 10,
                sigma_max: 2.0,
            },
        )
        .unwrap();
        assert_eq!(
            map,
            blur_ig(
                &pair,
                &feats,
                &BlurIgConfig {
                    steps: 10,
                    sigma_max: 2.0
                }
            )
            .unwrap()
        );
        let mut csv = Vec::new();
        map.write_csv(&mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap().lines().count(),
            1 + 3 * 5 * 2
        );
        let mut pgm = Vec::new();
        map.write_pgm(&mut pgm).unwrap();
        let text = String::from_utf8(pgm).unwrap();
        assert!(text.starts_with("P2\n5 6\n255\n"));
        assert!(blur_ig(
            &pair,
            &feats,
            &BlurIgConfig {
                steps: 1,
                sigma_max: 2.0
            }
        )
        .is_err());
        let wrong = random_feats(&mut rng, 5, 3);
        assert!(matches!(
            blur_ig(&pair, &wrong, &BlurIgConfig::default()),
            Err(Error::Shape(_))
        ));
    }
}
