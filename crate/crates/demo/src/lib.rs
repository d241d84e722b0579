//! Browser bindings: ripple-versus-order curve, compensated phase-error
//! field and the fringe-frequency limit calculator.

use std::f64::consts::TAU;

use bsc_core::fringe::{render_sequence, FringeConfig, NoiseConfig, Offsets, Phase0, PhaseSteps};
use bsc_core::kinematics::{sample_offsets, MotionProfile};
use bsc_core::oracle::{phase_error_map, predict_bsc_terms, wrap_to_pi};
use bsc_core::scenario::{check_output, simulate_scenario, NoiseSpec, ScenarioSpec, Source, SCHEMA_VERSION};
use bsc_core::{check_frequency, compensate_batch, Grid, PhaseOptions, SystemGeometry};
use wasm_bindgen::prelude::*;

fn js(e: bsc_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn steps_of(n: u8) -> bsc_core::Result<PhaseSteps> {
    PhaseSteps::try_from(n as usize)
}

fn sinusoid(amplitude: f64, period: f64) -> MotionProfile {
    MotionProfile::Sinusoid {
        amplitude,
        period,
        phase: 0.3,
    }
}

pub fn ripple_curve(steps: u8, amplitude: f64, period: f64, k_max: usize, sigma: f64) -> bsc_core::Result<Vec<f64>> {
    let spec = ScenarioSpec {
        schema_version: SCHEMA_VERSION,
        name: "demo".into(),
        seed: 1,
        fringe: FringeConfig {
            steps: steps_of(steps)?,
            ..FringeConfig::default()
        },
        noise: NoiseSpec {
            gaussian_sigma: sigma,
            quantize_bits: None,
        },
        frames: 48 + k_max,
        k_range: [0, k_max],
        phase: PhaseOptions::default(),
        sad: Default::default(),
        tolerance: 1.0,
        depth_every: 1,
        source: Source::Ramp {
            width: 96,
            height: 4,
            motion: sinusoid(amplitude, period),
        },
    };
    let sim = simulate_scenario(&spec)?;
    spec.k_values()
        .map(|k| {
            let outs = compensate_batch(&sim.main, spec.fringe.steps, k, &spec.phase)?;
            let mut sum = 0.0;
            for o in &outs {
                sum += check_output(o, &sim.truth, spec.fringe.steps, k)?.ripple_mae;
            }
            Ok(sum / outs.len() as f64)
        })
        .collect()
}

/// Mean absolute 2φ ripple (rad) of the compensated phase for K = 0..=k_max
/// under sinusoidal motion.
#[wasm_bindgen]
pub fn ripple_vs_k(steps: u8, amplitude: f64, period: f64, k_max: usize, sigma: f64) -> Result<Vec<f64>, JsError> {
    ripple_curve(steps, amplitude, period, k_max, sigma).map_err(js)
}

/// Fringes on a tilted plane with a bump in the middle.
fn dome(width: usize, height: usize) -> Grid<f64> {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let r2 = (width.min(height) as f64 / 3.0).powi(2);
    Grid::from_fn(width, height, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        TAU * x as f64 / 20.0 + 9.0 * (-(dx * dx + dy * dy) / r2).exp()
    })
}

/// Motion-induced error of one compensated frame with the mean lag removed.
/// Invalid pixels are NaN.
pub fn error_field(steps: u8, k: usize, amplitude: f64, period: f64, width: usize, height: usize) -> bsc_core::Result<Grid<f64>> {
    let steps = steps_of(steps)?;
    let phi0 = dome(width, height);
    let count = steps.count() + k + 8;
    let offsets = sample_offsets(&sinusoid(amplitude, period), count)?;
    let cfg = FringeConfig {
        steps,
        ..FringeConfig::default()
    };
    let frames = render_sequence(
        &cfg,
        &Phase0::Map(phi0.clone()),
        &Offsets::Scalar(offsets.clone()),
        count,
        &NoiseConfig::none(),
    )?;
    let out = compensate_batch(&frames, steps, k, &PhaseOptions::default())?.swap_remove(8);
    let dc = predict_bsc_terms(steps, &offsets, k, out.start_index)?.dc;
    let (err, mask) = phase_error_map(&out, &phi0)?;
    Ok(Grid::from_fn(width, height, |x, y| {
        if *mask.get(x, y) {
            wrap_to_pi(err.get(x, y) - dc)
        } else {
            f64::NAN
        }
    }))
}

/// Blue-white-red rendering of `values`; `scale` (rad) maps to full colour.
pub fn to_rgba(values: &Grid<f64>, scale: f64) -> Vec<u8> {
    let mut rgba = Vec::with_capacity(values.len() * 4);
    for &v in values.as_slice() {
        if !v.is_finite() {
            rgba.extend_from_slice(&[40, 40, 40, 255]);
            continue;
        }
        let t = (v / scale).clamp(-1.0, 1.0);
        let fade = (255.0 * (1.0 - t.abs())) as u8;
        rgba.extend_from_slice(&if t >= 0.0 { [255, fade, fade, 255] } else { [fade, fade, 255, 255] });
    }
    rgba
}

/// RGBA pixels (row-major, `width * height * 4` bytes) of the order-K
/// phase error under sinusoidal motion.
#[wasm_bindgen]
pub fn phase_error_rgba(
    steps: u8,
    k: usize,
    amplitude: f64,
    period: f64,
    width: usize,
    height: usize,
    scale: f64,
) -> Result<Vec<u8>, JsError> {
    let field = error_field(steps, k, amplitude, period, width, height).map_err(js)?;
    Ok(to_rgba(&field, scale))
}

#[wasm_bindgen]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyLimit {
    pub segment_mm: f64,
    pub f_limit: f64,
    pub satisfied: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn limit(
    z_min: f64,
    z_max: f64,
    z_nominal: f64,
    baseline_mm: f64,
    projector_z_mm: f64,
    projector_focal_px: f64,
    projector_width_px: u32,
    candidate: f64,
) -> bsc_core::Result<FrequencyLimit> {
    let geom = SystemGeometry {
        z_min,
        z_max,
        z_nominal,
        baseline_mm,
        projector_z_mm,
        projector_focal_px,
        projector_width_px,
        fringe_periods: candidate,
    };
    geom.validate()?;
    let c = check_frequency(&geom, None)?;
    Ok(FrequencyLimit {
        segment_mm: c.segment_mm,
        f_limit: c.f_limit,
        satisfied: c.satisfied,
    })
}

/// Largest fringe frequency (periods across the projector) for which every
/// stereo search range holds a single period.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn frequency_limit(
    z_min: f64,
    z_max: f64,
    z_nominal: f64,
    baseline_mm: f64,
    projector_z_mm: f64,
    projector_focal_px: f64,
    projector_width_px: u32,
    candidate: f64,
) -> Result<FrequencyLimit, JsError> {
    limit(z_min, z_max, z_nominal, baseline_mm, projector_z_mm, projector_focal_px, projector_width_px, candidate)
        .map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ripple_falls_with_order() {
        let curve = ripple_curve(4, 0.05, 30.0, 4, 0.0).unwrap();
        assert_eq!(curve.len(), 5);
        assert!(curve.windows(2).all(|w| w[1] < w[0]), "{curve:?}");
        assert!(ripple_curve(5, 0.05, 30.0, 4, 0.0).is_err());
    }

    #[test]
    fn error_field_shrinks_with_order() {
        let rms = |k| {
            let f = error_field(3, k, 0.1, 25.0, 48, 32).unwrap();
            let v: Vec<f64> = f.as_slice().iter().copied().filter(|v| v.is_finite()).collect();
            (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
        };
        assert!(rms(3) < 0.1 * rms(0));
        assert_eq!(to_rgba(&error_field(4, 2, 0.1, 25.0, 48, 32).unwrap(), 0.05).len(), 48 * 32 * 4);
    }

    #[test]
    fn rgba_colours() {
        let g = Grid::from_vec(3, 1, vec![-1.0, 0.0, f64::NAN]).unwrap();
        assert_eq!(to_rgba(&g, 1.0), vec![0, 0, 255, 255, 255, 255, 255, 255, 40, 40, 40, 255]);
    }

    #[test]
    fn desk_limit() {
        let l = limit(400.0, 500.0, 450.0, 35.0, 0.0, 1000.0, 912, 38.0).unwrap();
        assert!((l.f_limit - 52.114285714285714).abs() < 1e-9);
        assert!((l.segment_mm - 7.875).abs() < 1e-12);
        assert!(l.satisfied);
        assert!(!limit(400.0, 500.0, 450.0, 35.0, 0.0, 1000.0, 912, 60.0).unwrap().satisfied);
        assert!(limit(500.0, 400.0, 450.0, 35.0, 0.0, 1000.0, 912, 38.0).is_err());
    }
}
