use std::f64::consts::TAU;

use bsc_core::fringe::ramp_phase;
use bsc_core::kinematics::sample_offsets;
use bsc_core::oracle::{harmonic_reference, phase_error_map, predict_bsc_terms, predict_error_terms};
use bsc_core::{
    compensate_batch, fit_ripple, render_sequence, FringeConfig, Grid, MotionProfile, NoiseConfig,
    Offsets, Phase0, PhaseOptions, PhaseSteps,
};

const W: usize = 96;
const H: usize = 4;

fn run(steps: PhaseSteps, offsets: &[f64], k: usize) -> Vec<(usize, bsc_core::RippleDecomposition)> {
    let phi0 = ramp_phase(W, H, 24.0);
    let cfg = FringeConfig {
        steps,
        ..FringeConfig::default()
    };
    let frames = render_sequence(
        &cfg,
        &Phase0::Map(phi0.clone()),
        &Offsets::Scalar(offsets.to_vec()),
        offsets.len(),
        &NoiseConfig::none(),
    )
    .unwrap();
    let outs = compensate_batch(&frames, steps, k, &PhaseOptions::default()).unwrap();
    outs.iter()
        .map(|o| {
            let (err, mask) = phase_error_map(o, &phi0).unwrap();
            let lag = offsets[o.start_index + k];
            let basis = Grid::from_fn(W, H, |x, y| harmonic_reference(*phi0.get(x, y) + lag, o.start_index, k));
            (o.start_index, fit_ripple(&err, &basis, &mask).unwrap())
        })
        .collect()
}

fn sinusoid(amplitude: f64, period: f64, count: usize) -> Vec<f64> {
    sample_offsets(
        &MotionProfile::Sinusoid {
            amplitude,
            period,
            phase: 0.4,
        },
        count,
    )
    .unwrap()
}

#[test]
fn raw_four_step_linear_motion_matches_prediction() {
    let v = 0.01;
    let xs: Vec<f64> = (0..8).map(|i| v * i as f64).collect();
    for (i, fit) in run(PhaseSteps::Four, &xs, 0) {
        let t = predict_error_terms(PhaseSteps::Four, &xs[i..i + 4]).unwrap();
        assert!((fit.cos2_amp - t.cos2).abs() < 5e-3, "window {i}");
        assert!((fit.dc - t.dc).abs() < 5e-3, "window {i}");
        assert!(fit.sin2_amp.abs() < 5e-3);
    }
}

#[test]
fn compensated_terms_match_oracle() {
    let xs = sinusoid(0.025, 37.0, 30);
    for steps in [PhaseSteps::Three, PhaseSteps::Four] {
        for k in 0..=4 {
            for (i, fit) in run(steps, &xs, k) {
                let t = predict_bsc_terms(steps, &xs, k, i).unwrap();
                assert!((fit.cos2_amp - t.cos2).abs() < 5e-3, "N={} K={k} i={i}: {} vs {}", steps.count(), fit.cos2_amp, t.cos2);
                assert!((fit.sin2_amp - t.sin2).abs() < 5e-3, "N={} K={k} i={i}: {} vs {}", steps.count(), fit.sin2_amp, t.sin2);
                assert!((fit.dc - t.dc).abs() < 5e-3, "N={} K={k} i={i}", steps.count());
            }
        }
    }
}

#[test]
fn oracle_is_first_order_accurate() {
    // Mismatch shrinks quadratically: much tighter than the coefficients.
    let xs = sinusoid(0.01, 29.0, 24);
    for steps in [PhaseSteps::Three, PhaseSteps::Four] {
        for k in 0..=3 {
            for (i, fit) in run(steps, &xs, k) {
                let t = predict_bsc_terms(steps, &xs, k, i).unwrap();
                let scale = t.cos2.abs().max(t.sin2.abs()).max(1e-6);
                let miss = (fit.cos2_amp - t.cos2).abs().max((fit.sin2_amp - t.sin2).abs());
                assert!(miss < 2e-4, "N={} K={k} i={i}: miss {miss:.2e} vs scale {scale:.2e}", steps.count());
                assert!((fit.dc - t.dc).abs() < 2e-4);
            }
        }
    }
}

#[test]
fn mismatch_grows_superlinearly() {
    let mismatch = |a: f64| {
        let xs = sinusoid(a, 23.0, 12);
        run(PhaseSteps::Four, &xs, 0)
            .into_iter()
            .map(|(i, fit)| {
                let t = predict_error_terms(PhaseSteps::Four, &xs[i..i + 4]).unwrap();
                (fit.cos2_amp - t.cos2).abs() + (fit.dc - t.dc).abs() + fit.sin2_amp.abs()
            })
            .fold(0.0, f64::max)
    };
    let small = mismatch(0.05);
    let large = mismatch(0.4);
    assert!(large > 10.0 * small, "{large} vs {small}");
    assert!(small < TAU);
}
