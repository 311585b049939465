//! Detection metrics, experiment grids and the narrowband phone channel.

mod experiment;
mod phone;

pub use experiment::{
    holdout_mask, run_experiment, run_leave_one_out, train_detector, Corpus, CorpusItem,
    EvalReport, ExperimentConfig, Partition,
};
pub use phone::{simulate_phone, Biquad, Companding, PhoneChannelConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores of genuine and generated clips. Higher means more likely real.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub real: Vec<f64>,
    pub fake: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
}

/// `FAR(t)` = share of fake scores `>= t`, `FRR(t)` = share of real scores `< t`.
fn rates(sorted_real: &[f64], sorted_fake: &[f64], t: f64) -> (f64, f64) {
    let fake_below = sorted_fake.partition_point(|&s| s < t);
    let real_below = sorted_real.partition_point(|&s| s < t);
    (
        (sorted_fake.len() - fake_below) as f64 / sorted_fake.len() as f64,
        real_below as f64 / sorted_real.len() as f64,
    )
}

/// Equal error rate from a threshold sweep over every distinct score plus
/// `+inf`. `FAR - FRR` falls from 1 to -1 along the sweep; the first
/// threshold where it reaches zero or below is taken, interpolating linearly
/// from the previous threshold when it overshoots.
pub fn compute_eer(scores: &ScoreSet) -> Result<EerResult> {
    if scores.real.is_empty() || scores.fake.is_empty() {
        return Err(Error::Empty(format!(
            "need both classes ({} real, {} fake)",
            scores.real.len(),
            scores.fake.len()
        )));
    }
    if scores
        .real
        .iter()
        .chain(&scores.fake)
        .any(|s| !s.is_finite())
    {
        return Err(Error::Range("scores must be finite".into()));
    }
    let mut real = scores.real.clone();
    let mut fake = scores.fake.clone();
    real.sort_by(f64::total_cmp);
    fake.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = real.iter().chain(&fake).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let mut prev: Option<(f64, f64, f64)> = None;
    for &t in &thresholds {
        let (far, frr) = rates(&real, &fake, t);
        let diff = far - frr;
        if diff <= 0.0 {
            let Some((pt, pfar, pfrr)) = prev.filter(|_| diff < 0.0) else {
                return Ok(EerResult {
                    eer: (far + frr) / 2.0,
                    threshold: t,
                });
            };
            let pdiff = pfar - pfrr;
            let a = pdiff / (pdiff - diff);
            let far_x = pfar + a * (far - pfar);
            let frr_x = pfrr + a * (frr - pfrr);
            let threshold = if t.is_finite() { pt + a * (t - pt) } else { pt };
            return Ok(EerResult {
                eer: (far_x + frr_x) / 2.0,
                threshold,
            });
        }
        prev = Some((t, far, frr));
    }
    unreachable!("FAR - FRR is -1 at +inf")
}

/// Arithmetic mean of a row of EERs.
pub fn average_eer(eers: &[f64]) -> Result<f64> {
    if eers.is_empty() {
        return Err(Error::Empty("no EER values to average".into()));
    }
    Ok(eers.iter().sum::<f64>() / eers.len() as f64)
}
