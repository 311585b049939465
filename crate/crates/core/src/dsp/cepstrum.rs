use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};

use super::MelSpectrogram;
use crate::error::{Error, Result};

/// Unnormalised DCT-II of the log filterbank energies:
/// `c(t, r) = sum_s ln(max(X(t, s), floor)) * cos(pi * r * (s + 0.5) / S)`.
pub fn cepstrum(mel: &MelSpectrogram, coeffs: usize, log_floor: f64) -> Result<Array2<f64>> {
    let (frames, filters) = mel.values.dim();
    if coeffs == 0 || coeffs > filters {
        return Err(Error::Range(format!(
            "need 1 <= R ({coeffs}) <= S ({filters})"
        )));
    }
    if !(log_floor > 0.0) {
        return Err(Error::Range(format!(
            "log floor must be positive, got {log_floor}"
        )));
    }
    let basis = Array2::from_shape_fn((filters, coeffs), |(s, r)| {
        (PI * r as f64 * (s as f64 + 0.5) / filters as f64).cos()
    });
    let logs = mel.values.mapv(|v| v.max(log_floor).ln());
    debug_assert_eq!(logs.nrows(), frames);
    Ok(logs.dot(&basis))
}

/// Central-difference regression over `±window` frames, replicating the
/// first and last frames beyond the edges. Output has the input's shape.
pub fn delta(c: ArrayView2<'_, f64>, window: usize) -> Result<Array2<f64>> {
    if window == 0 {
        return Err(Error::Range("delta window must be >= 1".into()));
    }
    let (frames, dims) = c.dim();
    if frames == 0 {
        return Ok(Array2::zeros((0, dims)));
    }
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let last = frames as isize - 1;
    let at = |t: isize| t.clamp(0, last) as usize;
    let mut out = Array2::zeros((frames, dims));
    for t in 0..frames as isize {
        let mut row = out.row_mut(t as usize);
        for n in 1..=window as isize {
            let ahead = c.row(at(t + n));
            let behind = c.row(at(t - n));
            for d in 0..dims {
                row[d] += n as f64 * (ahead[d] - behind[d]);
            }
        }
        row.mapv_inplace(|v| v / denom);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FilterScale;
    use proptest::prelude::*;

    fn mel(values: Array2<f64>) -> MelSpectrogram {
        MelSpectrogram {
            values,
            scale: FilterScale::Mel,
        }
    }

    #[test]
    fn constant_row_concentrates_in_c0() {
        let s = 12;
        let v = 3.7;
        let c = cepstrum(&mel(Array2::from_elem((2, s), v)), 8, 1e-10).unwrap();
        for t in 0..2 {
            assert!((c[[t, 0]] - s as f64 * v.ln()).abs() < 1e-10);
            for r in 1..8 {
                assert!(c[[t, r]].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_entries_use_floor() {
        let m = mel(Array2::from_shape_vec((1, 3), vec![0.0, 1.0, 2.0]).unwrap());
        let c = cepstrum(&m, 1, 1e-10).unwrap();
        assert!(c.iter().all(|v| v.is_finite()));
        assert!((c[[0, 0]] - (1e-10f64.ln() + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn coefficient_bounds() {
        let m = mel(Array2::ones((1, 4)));
        assert!(cepstrum(&m, 0, 1e-10).is_err());
        assert!(cepstrum(&m, 5, 1e-10).is_err());
        assert!(cepstrum(&m, 4, 0.0).is_err());
    }

    #[test]
    fn delta_of_constant_is_zero_and_ramp_is_one() {
        let constant = Array2::from_elem((7, 3), 2.5);
        for n in 1..=3 {
            assert!(delta(constant.view(), n).unwrap().iter().all(|&v| v == 0.0));
            let ramp = Array2::from_shape_fn((12, 2), |(t, _)| t as f64);
            let d = delta(ramp.view(), n).unwrap();
            for t in n..12 - n {
                assert!((d[[t, 0]] - 1.0).abs() < 1e-12);
                assert!((d[[t, 1]] - 1.0).abs() < 1e-12);
            }
        }
        assert!(delta(constant.view(), 0).is_err());
    }

    proptest! {
        #[test]
        fn delta_is_linear(
            xs in prop::collection::vec(-5.0f64..5.0, 15),
            ys in prop::collection::vec(-5.0f64..5.0, 15),
            a in -3.0f64..3.0, b in -3.0f64..3.0, n in 1usize..4,
        ) {
            let x = Array2::from_shape_vec((5, 3), xs).unwrap();
            let y = Array2::from_shape_vec((5, 3), ys).unwrap();
            let lhs = delta((&x * a + &y * b).view(), n).unwrap();
            let rhs = delta(x.view(), n).unwrap() * a + delta(y.view(), n).unwrap() * b;
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() < 1e-12);
            }
        }
    }
}
