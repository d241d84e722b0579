//! Wrapped phase from three or four π/2-shifted images.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fringe::{ImageFrame, PhaseSteps};
use crate::grid::Grid;

/// Default modulation threshold in gray levels.
pub const DEFAULT_MODULATION_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseOptions {
    /// Pixels whose modulation estimate falls below this are invalid.
    pub modulation_threshold: f64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self {
            modulation_threshold: DEFAULT_MODULATION_THRESHOLD,
        }
    }
}

impl PhaseOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.modulation_threshold >= 0.0) {
            return Err(Error::config("modulation threshold must be non-negative"));
        }
        Ok(())
    }
}

/// Wrapped phase in `[0, 2π)` with a validity mask. Invalid pixels hold 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFrame {
    pub phase: Grid<f64>,
    pub valid: Grid<bool>,
    /// Captured index of the first image that contributed.
    pub start_index: usize,
    /// The `t` used for datum correction, `None` for an uncorrected frame.
    pub datum_index: Option<usize>,
    /// Binomial order; 0 for raw frames.
    pub order_k: usize,
}

impl PhaseFrame {
    pub fn width(&self) -> usize {
        self.phase.width()
    }

    pub fn height(&self) -> usize {
        self.phase.height()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|&&v| v).count()
    }

    /// `(datum_index - start_index) mod 4`, which is what frames must agree
    /// on to be combined.
    pub(crate) fn datum_class(&self) -> Option<usize> {
        self.datum_index
            .map(|t| (t as i64 - self.start_index as i64).rem_euclid(4) as usize)
    }
}

/// `atan2(s, c)` mapped into `[0, 2π)`.
#[inline]
pub(crate) fn full_quadrant(s: f64, c: f64) -> f64 {
    crate::angle::phase_angle(s, c)
}

/// The phase shift `(t mod 4) π/2` added by datum correction.
#[inline]
pub(crate) fn datum_shift(t: usize) -> f64 {
    (t % 4) as f64 * FRAC_PI_2
}

/// `(p + shift) mod 2π` for `p` in `[0, 2π)` and `shift` in `[0, 2π)`.
#[inline]
pub(crate) fn shift_wrap(p: f64, shift: f64) -> f64 {
    let v = p + shift;
    if v >= TAU {
        v - TAU
    } else {
        v
    }
}

/// Numerator and denominator of the phase arctangent.
#[inline]
pub(crate) fn sine_cosine(steps: PhaseSteps, i: &[f64]) -> (f64, f64) {
    match steps {
        PhaseSteps::Four => (i[1] - i[3], i[0] - i[2]),
        PhaseSteps::Three => (2.0 * i[1] - i[0] - i[2], i[0] - i[2]),
    }
}

/// Per-pixel phase kernel shared by batch and streaming paths.
/// `images` holds the N intensity buffers in capture order.
pub(crate) fn phase_kernel(
    steps: PhaseSteps,
    images: &[&[f64]],
    threshold: f64,
    shift: Option<f64>,
    phase: &mut [f64],
    valid: &mut [bool],
    width: usize,
) {
    // Modulation is 0.5 |(S, C)|; compare squares to skip the sqrt.
    let limit = 4.0 * threshold * threshold;
    let shift = shift.unwrap_or(0.0);
    crate::par::rows_mut2(phase, valid, width, |y, prow, vrow| {
        let base = y * width;
        let rows: [&[f64]; 4] = std::array::from_fn(|k| match images.get(k) {
            Some(img) => &img[base..base + prow.len()],
            None => &[],
        });
        let row = KernelRow { steps, limit, shift, images: rows };
        #[cfg(target_arch = "x86_64")]
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was just detected on this CPU.
            unsafe { row.run_avx2(prow, vrow) };
            return;
        }
        row.run(prow, vrow);
    });
}

/// One image row of the phase kernel. The AVX2 copy is the same IEEE
/// arithmetic compiled wider, so both paths give identical bits.
struct KernelRow<'a> {
    steps: PhaseSteps,
    limit: f64,
    shift: f64,
    images: [&'a [f64]; 4],
}

impl KernelRow<'_> {
    #[inline(always)]
    fn pixel(&self, s: f64, c: f64) -> (f64, bool) {
        let m2 = s * s + c * c;
        let ok = m2 >= self.limit && m2.is_finite();
        (if ok { shift_wrap(full_quadrant(s, c), self.shift) } else { 0.0 }, ok)
    }

    #[inline(always)]
    fn run(&self, phase: &mut [f64], valid: &mut [bool]) {
        let n = phase.len();
        let valid = &mut valid[..n];
        let [i0, i1, i2, i3] = self.images;
        match self.steps {
            PhaseSteps::Four => {
                let (i0, i1, i2, i3) = (&i0[..n], &i1[..n], &i2[..n], &i3[..n]);
                for x in 0..n {
                    (phase[x], valid[x]) = self.pixel(i1[x] - i3[x], i0[x] - i2[x]);
                }
            }
            PhaseSteps::Three => {
                let (i0, i1, i2) = (&i0[..n], &i1[..n], &i2[..n]);
                for x in 0..n {
                    (phase[x], valid[x]) = self.pixel(2.0 * i1[x] - i0[x] - i2[x], i0[x] - i2[x]);
                }
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn run_avx2(&self, phase: &mut [f64], valid: &mut [bool]) {
        self.run(phase, valid)
    }
}

fn check_window(frames: &[ImageFrame], steps: PhaseSteps) -> Result<(usize, usize)> {
    let n = steps.count();
    if frames.len() != n {
        return Err(Error::NotEnoughFrames {
            needed: n,
            got: frames.len(),
        });
    }
    let dims = frames[0].intensity.dims();
    for (k, f) in frames.iter().enumerate() {
        if f.frame_index != frames[0].frame_index + k {
            return Err(Error::NonConsecutive {
                expected: frames[0].frame_index + k,
                got: f.frame_index,
            });
        }
        if f.intensity.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "frame {} is {}x{}, expected {}x{}",
                f.frame_index,
                f.width(),
                f.height(),
                dims.0,
                dims.1
            )));
        }
    }
    Ok(dims)
}

/// Raw (order 0, uncorrected) phase of `N` consecutive frames.
pub fn wrapped_phase(
    frames: &[ImageFrame],
    steps: PhaseSteps,
    options: &PhaseOptions,
) -> Result<PhaseFrame> {
    options.validate()?;
    let (w, h) = check_window(frames, steps)?;
    let images: Vec<&[f64]> = frames.iter().map(|f| f.intensity.as_slice()).collect();
    let mut phase = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    phase_kernel(
        steps,
        &images,
        options.modulation_threshold,
        None,
        &mut phase,
        &mut valid,
        w,
    );
    Ok(PhaseFrame {
        phase: Grid::from_vec(w, h, phase)?,
        valid: Grid::from_vec(w, h, valid)?,
        start_index: frames[0].frame_index,
        datum_index: None,
        order_k: 0,
    })
}

/// Adds `t π/2` so that every raw frame of a sequence shares one datum.
pub fn datum_correct(frame: &PhaseFrame, t: usize) -> Result<PhaseFrame> {
    if frame.order_k != 0 {
        return Err(Error::Datum(format!(
            "datum correction applies to raw frames, got order {}",
            frame.order_k
        )));
    }
    if frame.datum_index.is_some() {
        return Err(Error::Datum(format!(
            "frame starting at {} is already datum-corrected",
            frame.start_index
        )));
    }
    let shift = datum_shift(t);
    let mut out = frame.clone();
    for (p, &v) in out
        .phase
        .as_mut_slice()
        .iter_mut()
        .zip(frame.valid.as_slice())
    {
        if v {
            *p = shift_wrap(*p, shift);
        }
    }
    out.datum_index = Some(t);
    Ok(out)
}

/// Modulation estimate `0.5 |(S, C)|`, which equals `B` for a clean fringe.
pub fn modulation_map(frames: &[ImageFrame], steps: PhaseSteps) -> Result<Grid<f64>> {
    let (w, h) = check_window(frames, steps)?;
    let mut px = [0.0; 4];
    Ok(Grid::from_fn(w, h, |x, y| {
        for (k, f) in frames.iter().enumerate() {
            px[k] = *f.intensity.get(x, y);
        }
        let (s, c) = sine_cosine(steps, &px);
        0.5 * s.hypot(c)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fringe::{render_sequence, FringeConfig, NoiseConfig, Offsets, Phase0};
    use std::f64::consts::PI;

    fn frames(steps: PhaseSteps, a: f64, b: f64, phi: f64) -> Vec<ImageFrame> {
        let cfg = FringeConfig {
            wavelength_px: 24.0,
            amplitude: a,
            modulation: b,
            steps,
        };
        let p = Phase0::Uniform {
            value: phi,
            width: 4,
            height: 3,
        };
        render_sequence(&cfg, &p, &Offsets::Scalar(vec![0.0; 4]), 4, &NoiseConfig::none())
            .unwrap()
    }

    #[test]
    fn four_step_example() {
        let f = frames(PhaseSteps::Four, 100.0, 50.0, PI / 3.0);
        let (s, c) = sine_cosine(PhaseSteps::Four, &[125.0, 143.30127018922192, 75.0, 56.69872981077806]);
        assert!((s - 86.60254037844386).abs() < 1e-9 && (c - 50.0).abs() < 1e-12);
        let p = wrapped_phase(&f, PhaseSteps::Four, &PhaseOptions::default()).unwrap();
        assert!(p.valid.as_slice().iter().all(|&v| v));
        for &v in p.phase.as_slice() {
            assert!((v - PI / 3.0).abs() < 1e-12);
        }
        let m = modulation_map(&f, PhaseSteps::Four).unwrap();
        assert!(m.as_slice().iter().all(|&v| (v - 50.0).abs() < 1e-9));
    }

    #[test]
    fn three_step_example() {
        let f = frames(PhaseSteps::Three, 100.0, 50.0, PI / 3.0);
        let p = wrapped_phase(&f[..3], PhaseSteps::Three, &PhaseOptions::default()).unwrap();
        for &v in p.phase.as_slice() {
            assert!((v - PI / 3.0).abs() < 1e-12);
        }
        let m = modulation_map(&f[..3], PhaseSteps::Three).unwrap();
        assert!(m.as_slice().iter().all(|&v| (v - 50.0).abs() < 1e-9));
    }

    #[test]
    fn zero_modulation_is_invalid() {
        let f = frames(PhaseSteps::Four, 100.0, 0.0, 1.0);
        let p = wrapped_phase(&f, PhaseSteps::Four, &PhaseOptions::default()).unwrap();
        assert_eq!(p.valid_count(), 0);
        assert!(p.phase.as_slice().iter().all(|&v| v == 0.0));
        let m = modulation_map(&f, PhaseSteps::Four).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_errors() {
        let mut f = frames(PhaseSteps::Four, 100.0, 50.0, 1.0);
        let opts = PhaseOptions::default();
        assert!(matches!(
            wrapped_phase(&f[..3], PhaseSteps::Four, &opts),
            Err(Error::NotEnoughFrames { .. })
        ));
        f[2].frame_index = 7;
        assert!(matches!(
            wrapped_phase(&f, PhaseSteps::Four, &opts),
            Err(Error::NonConsecutive { .. })
        ));
        f[2].frame_index = 2;
        f[3].intensity = Grid::filled(5, 3, 0.0);
        assert!(matches!(
            wrapped_phase(&f, PhaseSteps::Four, &opts),
            Err(Error::DimensionMismatch(_))
        ));
    }

    fn raw(phase: f64) -> PhaseFrame {
        PhaseFrame {
            phase: Grid::filled(1, 1, phase),
            valid: Grid::filled(1, 1, true),
            start_index: 0,
            datum_index: None,
            order_k: 0,
        }
    }

    #[test]
    fn datum_examples() {
        let one = |p: f64, t: usize| *datum_correct(&raw(p), t).unwrap().phase.get(0, 0);
        assert!((one(0.0, 1) - PI / 2.0).abs() < 1e-15);
        assert_eq!(one(1.5 * PI, 1), 0.0);
        assert_eq!(one(2.5, 4), 2.5);
        let c = datum_correct(&raw(0.3), 6).unwrap();
        assert_eq!(c.datum_index, Some(6));
        assert!(datum_correct(&c, 1).is_err());
    }

    #[test]
    fn full_quadrant_range() {
        assert_eq!(full_quadrant(-1e-300, 1.0), 0.0);
        assert!((full_quadrant(-1.0, 0.0) - 1.5 * PI).abs() < 1e-15);
        assert!((full_quadrant(0.0, -1.0) - PI).abs() < 1e-15);
    }
}
