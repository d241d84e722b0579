//! Closed-form first-order motion-error model and least-squares ripple fits.
//!
//! For small offsets the phase error of one window is a DC shift plus a
//! harmonic at twice the fringe phase. Binomial fusion of `K + 1` windows
//! turns the harmonic coefficients into `(K+1)`-th order differences of the
//! offsets and the DC term into a binomial average of the window shifts.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fringe::PhaseSteps;
use crate::grid::Grid;
use crate::kinematics::{binomial_weights, finite_difference};
use crate::phase::PhaseFrame;

/// Minimum number of valid pixels for [`fit_ripple`].
pub const MIN_FIT_PIXELS: usize = 100;

/// Maps an angle into `(-π, π]`.
#[inline]
pub fn wrap_to_pi(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Coefficients of `dc + cos2·cos(2φ) + sin2·sin(2φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTerms {
    pub dc: f64,
    pub cos2: f64,
    pub sin2: f64,
}

impl ErrorTerms {
    pub fn eval(&self, phi: f64) -> f64 {
        let two = 2.0 * phi;
        self.dc + self.cos2 * two.cos() + self.sin2 * two.sin()
    }
}

/// Predicted error terms of one raw window with offsets `x_window`.
pub fn predict_error_terms(steps: PhaseSteps, x_window: &[f64]) -> Result<ErrorTerms> {
    let n = steps.count();
    if x_window.len() != n {
        return Err(Error::OutOfRange(format!(
            "error window needs {n} offsets, got {}",
            x_window.len()
        )));
    }
    let x = x_window;
    Ok(match steps {
        PhaseSteps::Four => ErrorTerms {
            dc: (x[0] + x[1] + x[2] + x[3]) / 4.0,
            cos2: (x[1] - x[0] + x[3] - x[2]) / 4.0,
            sin2: 0.0,
        },
        PhaseSteps::Three => ErrorTerms {
            dc: (x[0] + 2.0 * x[1] + x[2]) / 4.0,
            cos2: (2.0 * x[1] - x[0] - x[2]) / 4.0,
            sin2: (x[0] - x[2]) / 4.0,
        },
    })
}

/// Predicted phase error of one raw window at true phase `phi`.
pub fn predict_error(steps: PhaseSteps, x_window: &[f64], phi: f64) -> Result<f64> {
    Ok(predict_error_terms(steps, x_window)?.eval(phi))
}

fn check_series(steps: PhaseSteps, series: &[f64], k: usize, i: usize) -> Result<()> {
    let needed = i + k + steps.count();
    if series.len() < needed {
        return Err(Error::OutOfRange(format!(
            "offset series of length {} too short: order {k} at window {i} needs {needed}",
            series.len()
        )));
    }
    Ok(())
}

/// Harmonic amplitudes `(cos2, sin2)` of the order-K output built from
/// windows `i..=i+K`, referenced to the true phase of window `i + K`.
pub fn predict_bsc_harmonic(
    steps: PhaseSteps,
    series: &[f64],
    k: usize,
    i: usize,
) -> Result<(f64, f64)> {
    check_series(steps, series, k, i)?;
    let scale = 0.5f64.powi(k as i32 + 2);
    let d = |order: usize, at: usize| finite_difference(series, order, at);
    Ok(match steps {
        PhaseSteps::Four => (scale * (d(k + 1, i)? + d(k + 1, i + 2)?), 0.0),
        PhaseSteps::Three => (
            -scale * d(k + 2, i)?,
            -scale * (d(k + 1, i)? + d(k + 1, i + 1)?),
        ),
    })
}

/// Predicted DC error of the order-K output: the binomial average of the
/// window shifts.
pub fn predict_bsc_dc(steps: PhaseSteps, series: &[f64], k: usize, i: usize) -> Result<f64> {
    check_series(steps, series, k, i)?;
    let n = steps.count();
    let weights = binomial_weights(k)?;
    weights
        .iter()
        .enumerate()
        .map(|(j, w)| Ok(w * predict_error_terms(steps, &series[i + j..i + j + n])?.dc))
        .sum()
}

/// Both predicted terms of the order-K output at window `i`.
pub fn predict_bsc_terms(steps: PhaseSteps, series: &[f64], k: usize, i: usize) -> Result<ErrorTerms> {
    let (cos2, sin2) = predict_bsc_harmonic(steps, series, k, i)?;
    Ok(ErrorTerms {
        dc: predict_bsc_dc(steps, series, k, i)?,
        cos2,
        sin2,
    })
}

/// True phase that the harmonic of output `i` at order `k` is referenced
/// to. `phase` is the unshifted phase of frame `i + k`, i.e. the frame-0
/// phase plus that frame's offset.
#[inline]
pub fn harmonic_reference(phase: f64, i: usize, k: usize) -> f64 {
    phase - ((i + k) % 4) as f64 * FRAC_PI_2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RippleDecomposition {
    pub dc: f64,
    pub cos2_amp: f64,
    pub sin2_amp: f64,
    pub residual_rms: f64,
    pub pixels: usize,
}

impl RippleDecomposition {
    pub fn terms(&self) -> ErrorTerms {
        ErrorTerms {
            dc: self.dc,
            cos2: self.cos2_amp,
            sin2: self.sin2_amp,
        }
    }

    /// Peak amplitude of the fitted 2φ harmonic.
    pub fn ripple_amplitude(&self) -> f64 {
        self.cos2_amp.hypot(self.sin2_amp)
    }
}

/// Circular span of the sample phases (2π minus the largest gap).
fn phase_coverage(mut phases: Vec<f64>) -> f64 {
    if phases.len() < 2 {
        return 0.0;
    }
    phases.sort_by(f64::total_cmp);
    let wrap_gap = phases[0] + TAU - phases[phases.len() - 1];
    let max_gap = phases
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(wrap_gap, f64::max);
    TAU - max_gap
}

/// Least-squares fit of `dc + a cos(2φ) + b sin(2φ)` to `error` over the
/// masked pixels.
pub fn fit_ripple(
    error: &Grid<f64>,
    phase: &Grid<f64>,
    mask: &Grid<bool>,
) -> Result<RippleDecomposition> {
    if error.dims() != phase.dims() || error.dims() != mask.dims() {
        return Err(Error::DimensionMismatch(
            "error, phase and mask grids must share dimensions".into(),
        ));
    }
    let samples: Vec<(f64, f64)> = error
        .as_slice()
        .iter()
        .zip(phase.as_slice())
        .zip(mask.as_slice())
        .filter(|(_, &m)| m)
        .map(|((&e, &p), _)| (e, p))
        .filter(|(e, p)| e.is_finite() && p.is_finite())
        .collect();
    if samples.len() < MIN_FIT_PIXELS {
        return Err(Error::RankDeficient(format!(
            "{} valid pixels, need at least {MIN_FIT_PIXELS}",
            samples.len()
        )));
    }
    let coverage = phase_coverage(samples.iter().map(|(_, p)| p.rem_euclid(TAU)).collect());
    if coverage < PI {
        return Err(Error::RankDeficient(format!(
            "phase coverage {coverage:.3} rad is under half a fringe period"
        )));
    }

    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for &(e, p) in &samples {
        let row = Vector3::new(1.0, (2.0 * p).cos(), (2.0 * p).sin());
        ata += row * row.transpose();
        atb += row * e;
    }
    let svd = ata.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::RankDeficient(format!(
            "normal matrix condition {:.3e}",
            smax / smin
        )));
    }
    let coef = svd
        .solve(&atb, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let sse: f64 = samples
        .iter()
        .map(|&(e, p)| {
            let r = e - (coef[0] + coef[1] * (2.0 * p).cos() + coef[2] * (2.0 * p).sin());
            r * r
        })
        .sum();
    Ok(RippleDecomposition {
        dc: coef[0],
        cos2_amp: coef[1],
        sin2_amp: coef[2],
        residual_rms: (sse / samples.len() as f64).sqrt(),
        pixels: samples.len(),
    })
}

/// Mean of `|a cos(2φ) + b sin(2φ)|` over the masked pixels.
pub fn ripple_mae(fit: &RippleDecomposition, phase: &Grid<f64>, mask: &Grid<bool>) -> f64 {
    let (sum, count) = phase
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (&p, _)| {
            let two = 2.0 * p;
            (s + (fit.cos2_amp * two.cos() + fit.sin2_amp * two.sin()).abs(), c + 1)
        });
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Wrapped error `measured - truth` in `(-π, π]` and the mask of pixels it
/// is defined on.
pub fn phase_error_map(measured: &PhaseFrame, truth: &Grid<f64>) -> Result<(Grid<f64>, Grid<bool>)> {
    if measured.phase.dims() != truth.dims() {
        return Err(Error::DimensionMismatch(
            "measured phase and ground truth differ in size".into(),
        ));
    }
    let (w, h) = truth.dims();
    let mut mask = measured.valid.clone();
    let mut err = Grid::filled(w, h, 0.0);
    for ((e, m), (&p, &t)) in err
        .as_mut_slice()
        .iter_mut()
        .zip(mask.as_mut_slice())
        .zip(measured.phase.as_slice().iter().zip(truth.as_slice()))
    {
        if *m && t.is_finite() {
            *e = wrap_to_pi(p - t);
        } else {
            *m = false;
        }
    }
    Ok((err, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Normal;

    #[test]
    fn wrap_to_pi_range() {
        assert_eq!(wrap_to_pi(PI), PI);
        assert!((wrap_to_pi(-PI) - PI).abs() < 1e-15);
        assert!((wrap_to_pi(TAU + 0.25) - 0.25).abs() < 1e-15);
        assert!((wrap_to_pi(3.5 * PI) + 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn four_step_linear_example() {
        let v = 0.01;
        let t = predict_error_terms(PhaseSteps::Four, &[0.0, v, 2.0 * v, 3.0 * v]).unwrap();
        assert!((t.dc - 0.015).abs() < 1e-15);
        assert!((t.cos2 - 0.005).abs() < 1e-15);
        assert_eq!(t.sin2, 0.0);
        let phi = 0.7;
        let e = predict_error(PhaseSteps::Four, &[0.0, v, 2.0 * v, 3.0 * v], phi).unwrap();
        assert!((e - (0.015 + 0.005 * (2.0 * phi).cos())).abs() < 1e-15);
    }

    #[test]
    fn constant_offset_is_pure_shift() {
        let t = predict_error_terms(PhaseSteps::Four, &[0.2; 4]).unwrap();
        assert_eq!((t.dc, t.cos2, t.sin2), (0.2, 0.0, 0.0));
    }

    #[test]
    fn three_step_linear_example() {
        let v = 0.02;
        let t = predict_error_terms(PhaseSteps::Three, &[0.0, v, 2.0 * v]).unwrap();
        assert!((t.dc - v).abs() < 1e-15);
        assert!(t.cos2.abs() < 1e-15);
        assert!((t.sin2 + v / 2.0).abs() < 1e-15);
        assert!(predict_error_terms(PhaseSteps::Three, &[0.0; 4]).is_err());
    }

    #[test]
    fn linear_series_has_no_bsc_harmonic() {
        let series: Vec<f64> = (0..20).map(|i| 0.03 * i as f64 - 0.1).collect();
        for k in 1..=6 {
            let (c, s) = predict_bsc_harmonic(PhaseSteps::Four, &series, k, 2).unwrap();
            assert!(c.abs() < 1e-15 && s == 0.0);
        }
    }

    #[test]
    fn quadratic_three_step_k0() {
        let series: Vec<f64> = (0..6).map(|i| 0.01 * (i * i) as f64).collect();
        let (c, _) = predict_bsc_harmonic(PhaseSteps::Three, &series, 0, 1).unwrap();
        assert!((c + 0.02 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn series_length_checked() {
        let series = [0.0; 7];
        assert!(predict_bsc_harmonic(PhaseSteps::Four, &series, 4, 0).is_err());
        assert!(predict_bsc_harmonic(PhaseSteps::Four, &series, 3, 0).is_ok());
        assert!(predict_bsc_dc(PhaseSteps::Three, &series, 5, 0).is_err());
        assert!(predict_bsc_dc(PhaseSteps::Three, &series, 4, 0).is_ok());
    }

    proptest! {
        #[test]
        fn k0_matches_single_window(xs in proptest::collection::vec(-0.2f64..0.2, 6), i in 0usize..2) {
            for steps in [PhaseSteps::Three, PhaseSteps::Four] {
                let n = steps.count();
                let single = predict_error_terms(steps, &xs[i..i + n]).unwrap();
                let (c, s) = predict_bsc_harmonic(steps, &xs, 0, i).unwrap();
                prop_assert!((c - single.cos2).abs() < 1e-14);
                prop_assert!((s - single.sin2).abs() < 1e-14);
                prop_assert!((predict_bsc_dc(steps, &xs, 0, i).unwrap() - single.dc).abs() < 1e-14);
            }
        }

        /// The order-K prediction equals the binomial average of the
        /// single-window terms once each window's harmonic is re-expressed
        /// against the last window's phase (a shift of π/2 per window).
        #[test]
        fn bsc_terms_are_weighted_window_terms(xs in proptest::collection::vec(-0.2f64..0.2, 12), k in 0usize..6) {
            for steps in [PhaseSteps::Three, PhaseSteps::Four] {
                let n = steps.count();
                let w = binomial_weights(k).unwrap();
                let (mut c, mut s) = (0.0, 0.0);
                for (j, wj) in w.iter().enumerate() {
                    let t = predict_error_terms(steps, &xs[j..j + n]).unwrap();
                    // Window j sits (k - j) quarter-periods after window k,
                    // so its 2φ basis flips sign every step.
                    let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
                    c += wj * sign * t.cos2;
                    s += wj * sign * t.sin2;
                }
                let (pc, ps) = predict_bsc_harmonic(steps, &xs, k, 0).unwrap();
                prop_assert!((pc - c).abs() < 1e-13, "N={n} K={k}: {pc} vs {c}");
                prop_assert!((ps - s).abs() < 1e-13, "N={n} K={k}: {ps} vs {s}");
            }
        }
    }

    fn ramp(w: usize, h: usize) -> Grid<f64> {
        Grid::from_fn(w, h, |x, y| TAU * ((x + 3 * y) as f64 / 24.0) % TAU)
    }

    #[test]
    fn fit_recovers_exact_basis() {
        let phase = ramp(48, 5);
        let err = phase.map(|&p| 0.01 + 0.005 * (2.0 * p).cos());
        let mask = Grid::filled(48, 5, true);
        let fit = fit_ripple(&err, &phase, &mask).unwrap();
        assert!((fit.dc - 0.01).abs() < 1e-12);
        assert!((fit.cos2_amp - 0.005).abs() < 1e-12);
        assert!(fit.sin2_amp.abs() < 1e-12);
        assert!(fit.residual_rms < 1e-12);
        assert_eq!(fit.pixels, 240);
        let mae = ripple_mae(&fit, &phase, &mask);
        assert!((mae - 0.005 * 2.0 / PI).abs() < 1e-4);
    }

    #[test]
    fn fit_of_noise_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut amp = Vec::new();
        for (w, h) in [(48, 10), (480, 100)] {
            let phase = ramp(w, h);
            let err = Grid::from_fn(w, h, |_, _| rng.sample(normal));
            let fit = fit_ripple(&err, &phase, &Grid::filled(w, h, true)).unwrap();
            amp.push(fit.ripple_amplitude().max(fit.dc.abs()));
            assert!((fit.residual_rms - 0.1).abs() < 0.02);
        }
        // Standard error of each coefficient scales as sigma / sqrt(n).
        assert!(amp[1] < 5.0 * 0.1 * (2.0f64 / 48_000.0).sqrt());
        assert!(amp[0] < 5.0 * 0.1 * (2.0f64 / 480.0).sqrt());
    }

    #[test]
    fn fit_rejects_narrow_or_sparse_input() {
        let narrow = Grid::from_fn(50, 4, |x, _| 0.01 * x as f64);
        let err = Grid::filled(50, 4, 0.0);
        let mask = Grid::filled(50, 4, true);
        assert!(matches!(fit_ripple(&err, &narrow, &mask), Err(Error::RankDeficient(_))));
        let phase = ramp(9, 9);
        let few = Grid::filled(9, 9, true);
        assert!(matches!(
            fit_ripple(&Grid::filled(9, 9, 0.0), &phase, &few),
            Err(Error::RankDeficient(_))
        ));
        assert!(fit_ripple(&err, &ramp(10, 4), &mask).is_err());
    }

    #[test]
    fn error_map_wraps_and_masks() {
        let measured = PhaseFrame {
            phase: Grid::from_vec(3, 1, vec![0.05, 6.2, 1.0]).unwrap(),
            valid: Grid::from_vec(3, 1, vec![true, true, false]).unwrap(),
            start_index: 0,
            datum_index: Some(0),
            order_k: 0,
        };
        let truth = Grid::from_vec(3, 1, vec![6.25, 0.1, 1.0]).unwrap();
        let (e, m) = phase_error_map(&measured, &truth).unwrap();
        assert!((e.get(0, 0) - (0.05 + TAU - 6.25)).abs() < 1e-12);
        assert!((e.get(1, 0) - (6.2 - 0.1 - TAU)).abs() < 1e-12);
        assert_eq!(m.as_slice(), &[true, true, false]);
    }
}
