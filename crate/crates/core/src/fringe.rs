//! Synthetic fringe capture.
//!
//! Frame `i` of a cyclic π/2 phase-shifting sequence is
//! `A + B cos(φ0 - i π/2 + x_i)`, where `x_i` is the phase offset the motion
//! has accumulated since frame 0. Intensities are real-valued gray levels;
//! Gaussian noise and quantisation are opt-in.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Rig};
use crate::grid::Grid;

/// Phase-shift step between consecutive patterns.
pub const PHASE_SHIFT: f64 = FRAC_PI_2;

/// Number of images per phase computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PhaseSteps {
    Three,
    Four,
}

impl PhaseSteps {
    pub fn count(self) -> usize {
        match self {
            PhaseSteps::Three => 3,
            PhaseSteps::Four => 4,
        }
    }
}

impl TryFrom<u8> for PhaseSteps {
    type Error = String;

    fn try_from(n: u8) -> std::result::Result<Self, String> {
        match n {
            3 => Ok(PhaseSteps::Three),
            4 => Ok(PhaseSteps::Four),
            _ => Err(format!("phase steps must be 3 or 4, got {n}")),
        }
    }
}

impl TryFrom<usize> for PhaseSteps {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        u8::try_from(n)
            .ok()
            .and_then(|n| PhaseSteps::try_from(n).ok())
            .ok_or_else(|| Error::config(format!("phase steps must be 3 or 4, got {n}")))
    }
}

impl From<PhaseSteps> for u8 {
    fn from(s: PhaseSteps) -> u8 {
        s.count() as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeConfig {
    /// Projector pixels per fringe period.
    pub wavelength_px: f64,
    /// Background intensity `A` (gray levels).
    pub amplitude: f64,
    /// Modulation `B` (gray levels).
    pub modulation: f64,
    pub steps: PhaseSteps,
}

impl Default for FringeConfig {
    fn default() -> Self {
        Self {
            wavelength_px: 24.0,
            amplitude: 128.0,
            modulation: 100.0,
            steps: PhaseSteps::Four,
        }
    }
}

impl FringeConfig {
    pub fn validate(&self, quantize_bits: Option<u8>) -> Result<()> {
        if !(self.wavelength_px > 0.0) {
            return Err(Error::config("fringe wavelength must be positive"));
        }
        if !(self.amplitude >= 0.0 && self.modulation >= 0.0) {
            return Err(Error::config("amplitude and modulation must be non-negative"));
        }
        if self.amplitude - self.modulation < 0.0 {
            return Err(Error::config(format!(
                "amplitude {} below modulation {} gives negative intensities",
                self.amplitude, self.modulation
            )));
        }
        if let Some(bits) = quantize_bits {
            let max = max_gray(bits)?;
            if self.amplitude + self.modulation > max {
                return Err(Error::config(format!(
                    "A + B = {} exceeds the {bits}-bit maximum {max}",
                    self.amplitude + self.modulation
                )));
            }
        }
        Ok(())
    }
}

fn max_gray(bits: u8) -> Result<f64> {
    match bits {
        8 => Ok(255.0),
        16 => Ok(65535.0),
        _ => Err(Error::config(format!("quantisation must be 8 or 16 bits, got {bits}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default)]
    pub gaussian_sigma: f64,
    #[serde(default)]
    pub quantize_bits: Option<u8>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self {
            gaussian_sigma: 0.0,
            quantize_bits: None,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            gaussian_sigma: sigma,
            quantize_bits: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma >= 0.0) {
            return Err(Error::config("noise sigma must be non-negative"));
        }
        if let Some(bits) = self.quantize_bits {
            max_gray(bits)?;
        }
        Ok(())
    }
}

/// One captured intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    pub intensity: Grid<f64>,
    pub frame_index: usize,
    pub timestamp: Option<f64>,
}

impl ImageFrame {
    pub fn width(&self) -> usize {
        self.intensity.width()
    }

    pub fn height(&self) -> usize {
        self.intensity.height()
    }
}

/// Phase at frame 0, either uniform over an image or per pixel.
/// Non-finite entries mark pixels that see no lit surface.
#[derive(Debug, Clone, PartialEq)]
pub enum Phase0 {
    Uniform { value: f64, width: usize, height: usize },
    Map(Grid<f64>),
}

impl Phase0 {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Phase0::Uniform { width, height, .. } => (*width, *height),
            Phase0::Map(g) => g.dims(),
        }
    }

    #[inline]
    fn at(&self, idx: usize) -> f64 {
        match self {
            Phase0::Uniform { value, .. } => *value,
            Phase0::Map(g) => g.as_slice()[idx],
        }
    }
}

/// Motion offsets `x_i`: whole-frame scalars or per-pixel grids.
#[derive(Debug, Clone, PartialEq)]
pub enum Offsets {
    Scalar(Vec<f64>),
    PerPixel(Vec<Grid<f64>>),
}

impl Offsets {
    pub fn len(&self) -> usize {
        match self {
            Offsets::Scalar(v) => v.len(),
            Offsets::PerPixel(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self, i: usize) -> FrameOffset<'_> {
        match self {
            Offsets::Scalar(v) => FrameOffset::Scalar(v[i]),
            Offsets::PerPixel(v) => FrameOffset::Map(&v[i]),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum FrameOffset<'a> {
    Scalar(f64),
    Map(&'a Grid<f64>),
}

impl FrameOffset<'_> {
    #[inline]
    fn at(&self, idx: usize) -> f64 {
        match self {
            FrameOffset::Scalar(v) => *v,
            FrameOffset::Map(g) => g.as_slice()[idx],
        }
    }
}

/// Renders frames `0..count`.
pub fn render_sequence(
    config: &FringeConfig,
    phase0: &Phase0,
    offsets: &Offsets,
    count: usize,
    noise: &NoiseConfig,
) -> Result<Vec<ImageFrame>> {
    let n = config.steps.count();
    if count < n {
        return Err(Error::NotEnoughFrames { needed: n, got: count });
    }
    if offsets.len() < count {
        return Err(Error::NotEnoughFrames {
            needed: count,
            got: offsets.len(),
        });
    }
    (0..count)
        .map(|i| render_frame(config, phase0, offsets.frame(i), i, noise, 0))
        .collect()
}

/// Renders a single frame. `stream` separates the noise of different
/// cameras observing the same frame index.
pub fn render_frame(
    config: &FringeConfig,
    phase0: &Phase0,
    offset: FrameOffset<'_>,
    index: usize,
    noise: &NoiseConfig,
    stream: u32,
) -> Result<ImageFrame> {
    config.validate(noise.quantize_bits)?;
    noise.validate()?;
    let (width, height) = phase0.dims();
    if width == 0 || height == 0 {
        return Err(Error::DimensionMismatch("empty image".into()));
    }
    if let FrameOffset::Map(g) = offset {
        if g.dims() != (width, height) {
            return Err(Error::DimensionMismatch(format!(
                "offset grid {}x{} vs phase0 {}x{}",
                g.width(),
                g.height(),
                width,
                height
            )));
        }
    }
    if let Phase0::Uniform { value, .. } = phase0 {
        if !value.is_finite() {
            return Err(Error::config("uniform phase0 must be finite"));
        }
    }

    let a = config.amplitude;
    let b = config.modulation;
    let shift = (index % 4) as f64 * PHASE_SHIFT;
    let mut data = vec![0.0; width * height];
    crate::par::rows_mut(&mut data, width, |y, row| {
        let base = y * width;
        for (x, out) in row.iter_mut().enumerate() {
            let p = phase0.at(base + x);
            *out = if p.is_finite() {
                a + b * (p - shift + offset.at(base + x)).cos()
            } else {
                a
            };
        }
    });

    if noise.gaussian_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(((stream as u64) << 40) | index as u64);
        let normal = Normal::new(0.0, noise.gaussian_sigma)
            .map_err(|e| Error::config(format!("noise: {e}")))?;
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    if let Some(bits) = noise.quantize_bits {
        let max = max_gray(bits)?;
        for v in &mut data {
            *v = v.round().clamp(0.0, max);
        }
    }
    Ok(ImageFrame {
        intensity: Grid::from_vec(width, height, data)?,
        frame_index: index,
        timestamp: None,
    })
}

/// Horizontal ramp `2π x / period` over a `width x height` image.
pub fn ramp_phase(width: usize, height: usize, period_px: f64) -> Grid<f64> {
    Grid::from_fn(width, height, |x, _| TAU * x as f64 / period_px)
}

/// Static synthetic scenes made of fronto-parallel surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scene {
    Plane {
        z: f64,
    },
    /// Two planes split along the main-camera ray through `edge_column`:
    /// columns left of it see `z_left`, the rest see `z_right`.
    Step {
        edge_column: f64,
        z_left: f64,
        z_right: f64,
    },
}

/// Which camera of the rig a phase map is rendered for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Main,
    Aux,
}

impl Scene {
    /// The same scene with its moving surface (the plane, or the right side
    /// of a step) placed at depth `z`.
    pub fn with_moving_depth(&self, z: f64) -> Scene {
        match self {
            Scene::Plane { .. } => Scene::Plane { z },
            Scene::Step {
                edge_column,
                z_left,
                ..
            } => Scene::Step {
                edge_column: *edge_column,
                z_left: *z_left,
                z_right: z,
            },
        }
    }

    /// True depth seen by main-camera column `x`.
    pub fn main_depth(&self, x: f64) -> f64 {
        match self {
            Scene::Plane { z } => *z,
            Scene::Step {
                edge_column,
                z_left,
                z_right,
            } => {
                if x < *edge_column {
                    *z_left
                } else {
                    *z_right
                }
            }
        }
    }

    fn depths(&self) -> Vec<f64> {
        match self {
            Scene::Plane { z } => vec![*z],
            Scene::Step { z_left, z_right, .. } => vec![*z_left, *z_right],
        }
    }

    /// World point `(X, Z)` hit by column `x` of `camera`, if any.
    fn intersect(&self, rig: &Rig, camera: &CameraModel, x: f64) -> Option<(f64, f64)> {
        match self {
            Scene::Plane { z } => Some((camera.ray_x(x, *z), *z)),
            Scene::Step {
                edge_column,
                z_left,
                z_right,
            } => {
                let left = camera.ray_x(x, *z_left);
                let right = camera.ray_x(x, *z_right);
                let hit_left = left < rig.main.ray_x(*edge_column, *z_left);
                let hit_right = right >= rig.main.ray_x(*edge_column, *z_right);
                match (hit_left, hit_right) {
                    (true, true) if z_left <= z_right => Some((left, *z_left)),
                    (true, true) => Some((right, *z_right)),
                    (true, false) => Some((left, *z_left)),
                    (false, true) => Some((right, *z_right)),
                    (false, false) => None,
                }
            }
        }
    }
}

/// Absolute projector phase `2π x^p / λ` seen by each pixel of `view`.
/// Pixels that see no surface are NaN.
pub fn phase0_from_scene(
    scene: &Scene,
    rig: &Rig,
    view: View,
    config: &FringeConfig,
) -> Result<Grid<f64>> {
    let g = &rig.geometry;
    for z in scene.depths() {
        if !(g.z_min..=g.z_max).contains(&z) {
            return Err(Error::Geometry(format!(
                "scene depth {z} outside [{}, {}]",
                g.z_min, g.z_max
            )));
        }
    }
    if !(config.wavelength_px > 0.0) {
        return Err(Error::config("fringe wavelength must be positive"));
    }
    let camera = match view {
        View::Main => &rig.main,
        View::Aux => &rig.aux,
    };
    // Phase is constant along camera columns in this rectified, coplanar layout.
    let mut row = Vec::with_capacity(camera.width);
    for x in 0..camera.width {
        match scene.intersect(rig, camera, x as f64) {
            Some((wx, z)) => {
                let xp = rig.projector.column(wx, z);
                rig.check_projector_column(xp)?;
                row.push(TAU * xp / config.wavelength_px);
            }
            None => row.push(f64::NAN),
        }
    }
    Ok(Grid::from_fn(camera.width, camera.height, |x, _| row[x]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg(a: f64, b: f64) -> FringeConfig {
        FringeConfig {
            wavelength_px: 24.0,
            amplitude: a,
            modulation: b,
            steps: PhaseSteps::Four,
        }
    }

    fn uniform(v: f64) -> Phase0 {
        Phase0::Uniform {
            value: v,
            width: 3,
            height: 2,
        }
    }

    #[test]
    fn intensities_example() {
        let frames = render_sequence(
            &cfg(100.0, 50.0),
            &uniform(PI / 3.0),
            &Offsets::Scalar(vec![0.0; 4]),
            4,
            &NoiseConfig::none(),
        )
        .unwrap();
        let expected = [125.0, 143.301_270_189_221_9, 75.0, 56.698_729_810_778_06];
        for (f, e) in frames.iter().zip(expected) {
            for &v in f.intensity.as_slice() {
                assert!((v - e).abs() < 1e-9, "{v} vs {e}");
            }
        }
        assert_eq!(frames[2].frame_index, 2);
    }

    #[test]
    fn zero_modulation_is_flat() {
        let frames = render_sequence(
            &cfg(100.0, 0.0),
            &uniform(1.3),
            &Offsets::Scalar(vec![0.0, 0.4, 0.9, 1.7, 2.0]),
            5,
            &NoiseConfig::none(),
        )
        .unwrap();
        assert!(frames
            .iter()
            .all(|f| f.intensity.as_slice().iter().all(|&v| v == 100.0)));
    }

    #[test]
    fn full_period_offsets_are_invisible() {
        let phase = Phase0::Map(ramp_phase(48, 4, 24.0));
        let a = render_sequence(&cfg(128.0, 100.0), &phase, &Offsets::Scalar(vec![0.0; 6]), 6, &NoiseConfig::none()).unwrap();
        let b = render_sequence(&cfg(128.0, 100.0), &phase, &Offsets::Scalar(vec![TAU; 6]), 6, &NoiseConfig::none()).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            for (x, y) in fa.intensity.as_slice().iter().zip(fb.intensity.as_slice()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn errors_on_bad_inputs() {
        let c = cfg(100.0, 50.0);
        let none = NoiseConfig::none();
        assert!(matches!(
            render_sequence(&c, &uniform(0.0), &Offsets::Scalar(vec![0.0; 3]), 3, &none),
            Err(Error::NotEnoughFrames { .. })
        ));
        let wrong = Offsets::PerPixel(vec![Grid::filled(4, 2, 0.0); 4]);
        assert!(matches!(
            render_sequence(&c, &uniform(0.0), &wrong, 4, &none),
            Err(Error::DimensionMismatch(_))
        ));
        let q = NoiseConfig {
            quantize_bits: Some(8),
            ..NoiseConfig::none()
        };
        assert!(render_sequence(&cfg(200.0, 100.0), &uniform(0.0), &Offsets::Scalar(vec![0.0; 4]), 4, &q).is_err());
        assert!(cfg(10.0, 20.0).validate(None).is_err());
    }

    #[test]
    fn noise_is_deterministic_and_quantised() {
        let phase = Phase0::Map(ramp_phase(32, 8, 24.0));
        let noise = NoiseConfig {
            gaussian_sigma: 2.0,
            quantize_bits: Some(8),
            seed: 7,
        };
        let offs = Offsets::Scalar(vec![0.0; 5]);
        let a = render_sequence(&cfg(128.0, 100.0), &phase, &offs, 5, &noise).unwrap();
        let b = render_sequence(&cfg(128.0, 100.0), &phase, &offs, 5, &noise).unwrap();
        assert_eq!(a, b);
        for f in &a {
            for &v in f.intensity.as_slice() {
                assert_eq!(v, v.round());
                assert!((0.0..=255.0).contains(&v));
            }
        }
        let other = NoiseConfig { seed: 8, ..noise };
        let c = render_sequence(&cfg(128.0, 100.0), &phase, &offs, 5, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn steps_serde() {
        assert_eq!(serde_json::to_string(&PhaseSteps::Three).unwrap(), "3");
        let s: PhaseSteps = serde_json::from_str("4").unwrap();
        assert_eq!(s, PhaseSteps::Four);
        assert!(serde_json::from_str::<PhaseSteps>("5").is_err());
    }

    #[test]
    fn plane_phase_is_affine_along_x() {
        let rig = Rig::desk();
        let c = cfg(128.0, 100.0);
        let grid = phase0_from_scene(&Scene::Plane { z: 437.0 }, &rig, View::Main, &c).unwrap();
        let row: Vec<f64> = (0..grid.width()).map(|x| *grid.get(x, 7)).collect();
        let slope = row[1] - row[0];
        for w in row.windows(2) {
            assert!((w[1] - w[0] - slope).abs() < 1e-9);
        }
        // Constant along columns.
        assert_eq!(grid.get(12, 0), grid.get(12, 119));
    }

    #[test]
    fn one_wavelength_is_one_period() {
        let c = cfg(128.0, 100.0);
        let rig = Rig::desk();
        let mut shifted = rig.clone();
        shifted.projector.cx += c.wavelength_px;
        let scene = Scene::Plane { z: 450.0 };
        let a = phase0_from_scene(&scene, &rig, View::Main, &c).unwrap();
        let b = phase0_from_scene(&scene, &shifted, View::Main, &c).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((q - p - TAU).abs() < 1e-9);
        }
    }

    #[test]
    fn step_scene_has_one_discontinuity() {
        let rig = Rig::desk();
        let c = cfg(128.0, 100.0);
        let scene = Scene::Step {
            edge_column: 80.5,
            z_left: 430.0,
            z_right: 470.0,
        };
        let grid = phase0_from_scene(&scene, &rig, View::Main, &c).unwrap();
        let row: Vec<f64> = (0..grid.width()).map(|x| *grid.get(x, 3)).collect();
        let steps: Vec<f64> = row.windows(2).map(|w| w[1] - w[0]).collect();
        let typical = steps[0];
        let jumps: Vec<usize> = steps
            .iter()
            .enumerate()
            .filter(|(_, d)| (*d - typical).abs() > 1e-6)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(jumps, vec![80]);
    }

    #[test]
    fn out_of_projector_is_an_error() {
        let mut rig = Rig::desk();
        rig.projector.cx = 2000.0;
        let c = cfg(128.0, 100.0);
        assert!(phase0_from_scene(&Scene::Plane { z: 450.0 }, &rig, View::Main, &c).is_err());
        assert!(phase0_from_scene(&Scene::Plane { z: 550.0 }, &Rig::desk(), View::Main, &c).is_err());
    }
}
