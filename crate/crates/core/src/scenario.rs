//! Reproducible experiment runs: a JSON scenario describes the fringe,
//! noise, motion and (optionally) a stereo rig; the harness simulates it,
//! compensates for a range of orders and compares against the oracle.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bsc::{compensate_batch, StreamState};
use crate::error::{Error, Result};
use crate::fringe::{
    phase0_from_scene, ramp_phase, render_frame, render_sequence, FrameOffset, FringeConfig,
    ImageFrame, NoiseConfig, Offsets, Phase0, Scene, View,
};
use crate::geometry::Rig;
use crate::grid::Grid;
use crate::kinematics::{sample_offsets, DepthTrajectory, MotionProfile, MAX_BINOMIAL_ORDER};
use crate::oracle::{
    fit_ripple, harmonic_reference, phase_error_map, predict_bsc_terms, ripple_mae, wrap_to_pi, ErrorTerms,
    RippleDecomposition,
};
use crate::phase::{PhaseFrame, PhaseOptions};
use crate::stereo::{plane_fit_rmse, unwrap_pair, SadOptions};

pub const SCHEMA_VERSION: u32 = 1;

/// Noise applied to every rendered frame; the seed comes from the scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub gaussian_sigma: f64,
    pub quantize_bits: Option<u8>,
}

/// Where the frames come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    /// A horizontal fringe ramp (one fringe period per `wavelength_px`
    /// camera pixels) with the same offset series at every pixel.
    Ramp {
        width: usize,
        height: usize,
        motion: MotionProfile,
    },
    /// A scene seen by both cameras of `rig`; its moving surface follows
    /// `trajectory`.
    Scene {
        rig: Rig,
        scene: Scene,
        trajectory: DepthTrajectory,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub fringe: FringeConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Number of captured frames `T`.
    pub frames: usize,
    /// Inclusive range of binomial orders.
    pub k_range: [usize; 2],
    #[serde(default)]
    pub phase: PhaseOptions,
    #[serde(default)]
    pub sad: SadOptions,
    /// Largest accepted oracle mismatch (rad) for strict runs.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Evaluate depth on every n-th output (scene sources only).
    #[serde(default = "default_depth_every")]
    pub depth_every: usize,
    pub source: Source,
}

fn default_tolerance() -> f64 {
    5e-3
}

fn default_depth_every() -> usize {
    10
}

impl ScenarioSpec {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            gaussian_sigma: self.noise.gaussian_sigma,
            quantize_bits: self.noise.quantize_bits,
            seed: self.seed,
        }
    }

    pub fn k_values(&self) -> std::ops::RangeInclusive<usize> {
        self.k_range[0]..=self.k_range[1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.fringe.validate(self.noise.quantize_bits)?;
        self.noise_config().validate()?;
        self.phase.validate()?;
        let [k_lo, k_hi] = self.k_range;
        if k_lo > k_hi || k_hi > MAX_BINOMIAL_ORDER {
            return Err(Error::config(format!(
                "k_range [{k_lo}, {k_hi}] must be ordered and at most {MAX_BINOMIAL_ORDER}"
            )));
        }
        let needed = self.fringe.steps.count() + k_hi;
        if self.frames < needed {
            return Err(Error::NotEnoughFrames {
                needed,
                got: self.frames,
            });
        }
        if !(self.tolerance > 0.0) || self.depth_every == 0 {
            return Err(Error::config("tolerance and depth_every must be positive"));
        }
        match &self.source {
            Source::Ramp { width, height, motion } => {
                if *width == 0 || *height == 0 {
                    return Err(Error::config("ramp size must be positive"));
                }
                sample_offsets(motion, self.frames)?;
            }
            Source::Scene {
                rig, trajectory, ..
            } => {
                rig.validate()?;
                let rel = (rig.wavelength_px() - self.fringe.wavelength_px).abs()
                    / self.fringe.wavelength_px;
                if rel > 1e-9 {
                    return Err(Error::config(format!(
                        "fringe wavelength {} disagrees with the rig ({} px)",
                        self.fringe.wavelength_px,
                        rig.wavelength_px()
                    )));
                }
                trajectory.sample(self.frames, rig.geometry.z_min, rig.geometry.z_max)?;
            }
        }
        Ok(())
    }
}

/// Ground truth for a simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// Main-camera phase at frame 0.
    pub phi0: Grid<f64>,
    /// Offset series followed by the pixels in `region`.
    pub offsets: Vec<f64>,
    pub region: Grid<bool>,
    /// Depth of the moving surface per frame (scene sources).
    pub depths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub main: Vec<ImageFrame>,
    pub aux: Option<Vec<ImageFrame>>,
    pub truth: Truth,
}

/// Renders every frame of the scenario.
pub fn simulate_scenario(spec: &ScenarioSpec) -> Result<Simulation> {
    spec.validate()?;
    let noise = spec.noise_config();
    match &spec.source {
        Source::Ramp { width, height, motion } => {
            let phi0 = ramp_phase(*width, *height, spec.fringe.wavelength_px);
            let offsets = sample_offsets(motion, spec.frames)?;
            let main = render_sequence(
                &spec.fringe,
                &Phase0::Map(phi0.clone()),
                &Offsets::Scalar(offsets.clone()),
                spec.frames,
                &noise,
            )?;
            Ok(Simulation {
                main,
                aux: None,
                truth: Truth {
                    region: Grid::filled(*width, *height, true),
                    phi0,
                    offsets,
                    depths: None,
                },
            })
        }
        Source::Scene {
            rig,
            scene,
            trajectory,
        } => {
            let g = &rig.geometry;
            let depths = trajectory.sample(spec.frames, g.z_min, g.z_max)?;
            let mut main = Vec::with_capacity(spec.frames);
            let mut aux = Vec::with_capacity(spec.frames);
            let mut phi0 = None;
            for (i, &z) in depths.iter().enumerate() {
                let s = scene.with_moving_depth(z);
                let pm = phase0_from_scene(&s, rig, View::Main, &spec.fringe)?;
                let pa = phase0_from_scene(&s, rig, View::Aux, &spec.fringe)?;
                let zero = FrameOffset::Scalar(0.0);
                main.push(render_frame(&spec.fringe, &Phase0::Map(pm.clone()), zero, i, &noise, 0)?);
                aux.push(render_frame(&spec.fringe, &Phase0::Map(pa), zero, i, &noise, 1)?);
                if i == 0 {
                    phi0 = Some(pm);
                }
            }
            let phi0 = phi0.expect("at least one frame");
            // The rightmost column always sees the moving surface.
            let reference_x = (rig.main.width - 1) as f64;
            let offsets = sample_offsets(
                &MotionProfile::Geometric {
                    trajectory: DepthTrajectory::Series {
                        depths: depths.clone(),
                    },
                    rig: Box::new(rig.clone()),
                    pixel_x: reference_x,
                },
                spec.frames,
            )?;
            let moving = scene.with_moving_depth(f64::NAN);
            let region = Grid::from_fn(rig.main.width, rig.main.height, |x, y| {
                moving.main_depth(x as f64).is_nan() && phi0.get(x, y).is_finite()
            });
            Ok(Simulation {
                main,
                aux: Some(aux),
                truth: Truth {
                    phi0,
                    offsets,
                    region,
                    depths: Some(depths),
                },
            })
        }
    }
}

/// Fit of one compensated output against its oracle prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputCheck {
    pub start_index: usize,
    pub predicted: ErrorTerms,
    pub measured: RippleDecomposition,
    pub ripple_mae: f64,
}

impl OutputCheck {
    pub fn harmonic_mismatch(&self) -> f64 {
        (self.measured.cos2_amp - self.predicted.cos2)
            .abs()
            .max((self.measured.sin2_amp - self.predicted.sin2).abs())
    }

    pub fn dc_mismatch(&self) -> f64 {
        (self.measured.dc - self.predicted.dc).abs()
    }
}

/// Fits the error of `output` (order `k`) and evaluates the prediction.
pub fn check_output(
    output: &PhaseFrame,
    truth: &Truth,
    steps: crate::fringe::PhaseSteps,
    k: usize,
) -> Result<OutputCheck> {
    let (mut err, mut mask) = phase_error_map(output, &truth.phi0)?;
    for (m, &r) in mask.as_mut_slice().iter_mut().zip(truth.region.as_slice()) {
        *m &= r;
    }
    let i = output.start_index;
    let predicted = predict_bsc_terms(steps, &truth.offsets, k, i)?;
    // Accumulated motion can exceed π; read the error on the branch nearest
    // the predicted lag.
    for e in err.as_mut_slice() {
        *e = predicted.dc + wrap_to_pi(*e - predicted.dc);
    }
    // The harmonic follows the true phase of frame i + K, offset included.
    let lag = truth.offsets[i + k];
    let basis = truth.phi0.map(|&p| harmonic_reference(p + lag, i, k));
    let measured = fit_ripple(&err, &basis, &mask)?;
    Ok(OutputCheck {
        start_index: i,
        predicted,
        ripple_mae: ripple_mae(&measured, &basis, &mask),
        measured,
    })
}

/// Per-order summary of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub outputs: usize,
    /// Means of |coefficient| over outputs.
    pub predicted_cos2: f64,
    pub measured_cos2: f64,
    pub predicted_sin2: f64,
    pub measured_sin2: f64,
    /// Means over outputs.
    pub predicted_dc: f64,
    pub measured_dc: f64,
    pub residual_rms: f64,
    pub ripple_mae: f64,
    pub max_harmonic_mismatch: f64,
    pub max_dc_mismatch: f64,
    /// Mean plane-fit depth RMSE (mm) of the moving surface, scene sources only.
    pub depth_rmse: Option<f64>,
    pub stream_matches_batch: bool,
    pub batch_ms_per_frame: f64,
    pub stream_ms_per_frame: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub steps: usize,
    pub frames: usize,
    pub tolerance: f64,
    pub rows: Vec<SweepRow>,
}

impl RunReport {
    /// Whether every order stayed within the oracle tolerance and the
    /// streaming output matched the batch output.
    pub fn within_tolerance(&self) -> bool {
        self.rows.iter().all(|r| {
            r.stream_matches_batch
                && r.max_harmonic_mismatch <= self.tolerance
                && r.max_dc_mismatch <= self.tolerance
        })
    }

    /// CSV rendering. Timing is left out so equal seeds give equal bytes.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "K",
            "outputs",
            "predicted_cos2",
            "measured_cos2",
            "predicted_sin2",
            "measured_sin2",
            "predicted_dc",
            "measured_dc",
            "residual_rms",
            "ripple_mae",
            "max_harmonic_mismatch",
            "max_dc_mismatch",
            "depth_rmse",
            "stream_matches_batch",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.outputs.to_string(),
                r.predicted_cos2.to_string(),
                r.measured_cos2.to_string(),
                r.predicted_sin2.to_string(),
                r.measured_sin2.to_string(),
                r.predicted_dc.to_string(),
                r.measured_dc.to_string(),
                r.residual_rms.to_string(),
                r.ripple_mae.to_string(),
                r.max_harmonic_mismatch.to_string(),
                r.max_dc_mismatch.to_string(),
                r.depth_rmse.map(|v| v.to_string()).unwrap_or_default(),
                r.stream_matches_batch.to_string(),
            ])?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn stream_all(frames: &[ImageFrame], spec: &ScenarioSpec, k: usize) -> Result<Vec<PhaseFrame>> {
    let mut state = StreamState::new(spec.fringe.steps, k, spec.phase)?;
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        if let Some(p) = state.push(f)? {
            out.push(p);
        }
    }
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Simulates the scenario once and, for every K in range, compensates in
/// batch and streaming mode, fits each output's error and compares it with
/// the oracle.
pub fn run_sweep(spec: &ScenarioSpec) -> Result<RunReport> {
    let sim = simulate_scenario(spec)?;
    let steps = spec.fringe.steps;
    let mut rows = Vec::new();
    for k in spec.k_values() {
        let t0 = Instant::now();
        let batch = compensate_batch(&sim.main, steps, k, &spec.phase)?;
        let batch_ms = t0.elapsed().as_secs_f64() * 1e3 / sim.main.len() as f64;
        let t1 = Instant::now();
        let stream = stream_all(&sim.main, spec, k)?;
        let stream_ms = t1.elapsed().as_secs_f64() * 1e3 / sim.main.len() as f64;

        let checks = batch
            .iter()
            .map(|o| check_output(o, &sim.truth, steps, k))
            .collect::<Result<Vec<_>>>()?;

        let depth_rmse = match (&sim.aux, &spec.source) {
            (Some(aux_frames), Source::Scene { rig, .. }) => {
                let aux = compensate_batch(aux_frames, steps, k, &spec.phase)?;
                let values = batch
                    .iter()
                    .zip(&aux)
                    .step_by(spec.depth_every)
                    .map(|(m, a)| {
                        let res = unwrap_pair(m, a, rig, &spec.sad)?;
                        plane_fit_rmse(&res.depth, Some(&sim.truth.region))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(mean(values.into_iter()))
            }
            _ => None,
        };

        rows.push(SweepRow {
            k,
            outputs: checks.len(),
            predicted_cos2: mean(checks.iter().map(|c| c.predicted.cos2.abs())),
            measured_cos2: mean(checks.iter().map(|c| c.measured.cos2_amp.abs())),
            predicted_sin2: mean(checks.iter().map(|c| c.predicted.sin2.abs())),
            measured_sin2: mean(checks.iter().map(|c| c.measured.sin2_amp.abs())),
            predicted_dc: mean(checks.iter().map(|c| c.predicted.dc)),
            measured_dc: mean(checks.iter().map(|c| c.measured.dc)),
            residual_rms: mean(checks.iter().map(|c| c.measured.residual_rms)),
            ripple_mae: mean(checks.iter().map(|c| c.ripple_mae)),
            max_harmonic_mismatch: checks.iter().map(OutputCheck::harmonic_mismatch).fold(0.0, f64::max),
            max_dc_mismatch: checks.iter().map(OutputCheck::dc_mismatch).fold(0.0, f64::max),
            depth_rmse,
            stream_matches_batch: stream == batch,
            batch_ms_per_frame: batch_ms,
            stream_ms_per_frame: stream_ms,
        });
    }
    Ok(RunReport {
        scenario: spec.name.clone(),
        seed: spec.seed,
        steps: steps.count(),
        frames: spec.frames,
        tolerance: spec.tolerance,
        rows,
    })
}

/// One line of an oracle check at a fixed output index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub predicted_cos2: f64,
    pub measured_cos2: f64,
    pub predicted_dc: f64,
    pub measured_dc: f64,
    pub residual_rms: f64,
}

/// Oracle comparison of output `window` (the index of its first frame)
/// for every K in range.
pub fn oracle_check(spec: &ScenarioSpec, window: usize) -> Result<Vec<OracleRow>> {
    let sim = simulate_scenario(spec)?;
    let steps = spec.fringe.steps;
    let n = steps.count();
    spec.k_values()
        .map(|k| {
            let end = window + n + k;
            if end > sim.main.len() {
                return Err(Error::OutOfRange(format!(
                    "window {window} at order {k} needs frames up to {end}, scenario has {}",
                    sim.main.len()
                )));
            }
            let out = compensate_batch(&sim.main[window..end], steps, k, &spec.phase)?;
            let c = check_output(&out[0], &sim.truth, steps, k)?;
            Ok(OracleRow {
                k,
                predicted_cos2: c.predicted.cos2,
                measured_cos2: c.measured.cos2_amp,
                predicted_dc: c.predicted.dc,
                measured_dc: c.measured.dc,
                residual_rms: c.measured.residual_rms,
            })
        })
        .collect()
}

pub fn oracle_rows_to_csv(rows: &[OracleRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
        .map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub width: usize,
    pub height: usize,
    pub fringe: FringeConfig,
    pub k: usize,
    pub frames: usize,
    /// Distinct pre-rendered images cycled through during the run.
    pub cycle: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            fringe: FringeConfig::default(),
            k: 4,
            frames: 800,
            cycle: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub threads: usize,
    pub outputs: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub frames_per_second: f64,
}

/// Times every [`StreamState::push`] over `frames` pushes.
pub fn bench_stream(config: &BenchConfig) -> Result<BenchReport> {
    if config.frames == 0 || config.cycle == 0 {
        return Err(Error::config("bench needs at least one frame"));
    }
    let offsets: Vec<f64> = (0..config.cycle).map(|i| 0.05 * i as f64).collect();
    let mut cycle = render_sequence(
        &config.fringe,
        &Phase0::Map(ramp_phase(config.width, config.height, config.fringe.wavelength_px)),
        &Offsets::Scalar(offsets),
        config.cycle.max(config.fringe.steps.count()),
        &NoiseConfig::gaussian(1.0, config.seed),
    )?;
    let mut state = StreamState::new(config.fringe.steps, config.k, PhaseOptions::default())?;
    let mut out = PhaseFrame {
        phase: Grid::filled(0, 0, 0.0),
        valid: Grid::filled(0, 0, false),
        start_index: 0,
        datum_index: None,
        order_k: config.k,
    };
    let mut times = Vec::with_capacity(config.frames);
    let mut outputs = 0;
    let total = Instant::now();
    for t in 0..config.frames {
        let slot = t % cycle.len();
        cycle[slot].frame_index = t;
        let start = Instant::now();
        if state.push_into(&cycle[slot], &mut out)? {
            outputs += 1;
        }
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let elapsed = total.elapsed().as_secs_f64();
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let pick = |q: f64| sorted[((q * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    Ok(BenchReport {
        config: config.clone(),
        threads: thread_count(),
        outputs,
        mean_ms: mean(times.iter().copied()),
        median_ms: pick(0.5),
        p99_ms: pick(0.99),
        frames_per_second: config.frames as f64 / elapsed,
    })
}

/// Worker threads available to the row-parallel kernels.
pub fn thread_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
