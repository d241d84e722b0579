use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bsc_core::fringe::{ImageFrame, PhaseSteps};
use bsc_core::geometry::{check_frequency, Rig, SystemGeometry};
use bsc_core::io::{
    read_frame_dir, read_phase_frame, write_depth_map, write_f32_grid, write_frame_dir,
    write_phase_frame, write_xyz, GridSidecar,
};
use bsc_core::kinematics::{finite_difference, sample_offsets, MotionProfile};
use bsc_core::phase::{datum_correct, wrapped_phase, PhaseFrame, PhaseOptions};
use bsc_core::scenario::{
    bench_stream, oracle_check, oracle_rows_to_csv, run_sweep, simulate_scenario, BenchConfig,
    ScenarioSpec,
};
use bsc_core::stereo::{unwrap_pair, SadOptions};
use bsc_core::{compensate_batch, FringeConfig, Grid, StreamState};
use serde::Serialize;

use crate::{Cli, Command, Global, StrictFailure};

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    match &cli.command {
        Command::Simulate { scenario, bits } => simulate(g, scenario, *bits),
        Command::Offsets { profile, frames, order } => offsets(g, profile, *frames, *order),
        Command::Phase {
            frames,
            steps,
            start,
            count,
            datum,
            threshold,
        } => phase(g, frames, *steps, *start, *count, *datum, *threshold),
        Command::Compensate {
            frames,
            steps,
            k,
            stream,
            threshold,
        } => compensate(g, frames, *steps, *k, *stream, *threshold),
        Command::OracleCheck { scenario, window } => oracle(g, scenario, *window),
        Command::SweepK { scenario } => sweep(g, scenario),
        Command::FreqLimit { geometry, candidate } => freq_limit(g, geometry.as_deref(), *candidate),
        Command::Unwrap {
            main,
            aux,
            rig,
            window,
        } => unwrap(g, main, aux, rig.as_deref(), *window),
        Command::Bench {
            width,
            height,
            steps,
            k,
            frames,
        } => bench(g, *width, *height, *steps, *k, *frames),
    }
}

fn load_scenario(g: &Global, path: &Path) -> Result<ScenarioSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec =
        ScenarioSpec::from_json(&text).with_context(|| format!("scenario {}", path.display()))?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn steps_of(n: usize) -> Result<PhaseSteps> {
    Ok(PhaseSteps::try_from(n)?)
}

fn phase_options(threshold: Option<f64>) -> PhaseOptions {
    threshold
        .map(|t| PhaseOptions { modulation_threshold: t })
        .unwrap_or_default()
}

fn strict_check(g: &Global, ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if g.strict && !ok {
        return Err(StrictFailure(what()).into());
    }
    Ok(())
}

fn simulate(g: &Global, scenario: &Path, bits: u8) -> Result<()> {
    let spec = load_scenario(g, scenario)?;
    let sim = simulate_scenario(&spec)?;
    write_frame_dir(&g.out.join("main"), &sim.main, bits)?;
    if let Some(aux) = &sim.aux {
        write_frame_dir(&g.out.join("aux"), aux, bits)?;
    }
    let (w, h) = sim.truth.phi0.dims();
    write_f32_grid(
        &g.out.join("truth_phi0.f32"),
        &sim.truth.phi0,
        &GridSidecar {
            frame_index: Some(0),
            quantity: Some("absolute_phase".into()),
            nan_is_invalid: true,
            ..GridSidecar::new(w, h)
        },
    )?;
    let mut csv = String::from("frame,offset,depth_mm\n");
    for (i, x) in sim.truth.offsets.iter().enumerate() {
        let depth = sim.truth.depths.as_ref().map(|d| d[i].to_string()).unwrap_or_default();
        csv += &format!("{i},{x},{depth}\n");
    }
    fs::write(g.out.join("truth_offsets.csv"), csv)?;
    write_json(&g.out.join("scenario.json"), &spec)?;
    println!(
        "simulated {} frames ({}x{}{}) into {}",
        sim.main.len(),
        w,
        h,
        if sim.aux.is_some() { ", two cameras" } else { "" },
        g.out.display()
    );
    Ok(())
}

fn offsets(g: &Global, profile: &str, frames: usize, order: usize) -> Result<()> {
    let profile = MotionProfile::parse_compact(profile)?;
    let xs = sample_offsets(&profile, frames)?;
    let mut csv = String::from("frame,offset");
    for m in 1..=order {
        csv += &format!(",diff{m}");
    }
    csv.push('\n');
    for (i, x) in xs.iter().enumerate() {
        csv += &format!("{i},{x}");
        for m in 1..=order {
            csv.push(',');
            if let Ok(d) = finite_difference(&xs, m, i) {
                csv += &d.to_string();
            }
        }
        csv.push('\n');
    }
    let path = g.out.join("offsets.csv");
    fs::write(&path, &csv)?;
    print!("{csv}");
    Ok(())
}

fn read_frames(dir: &Path) -> Result<Vec<ImageFrame>> {
    read_frame_dir(dir).with_context(|| format!("reading frames from {}", dir.display()))
}

fn phase(
    g: &Global,
    dir: &Path,
    steps: usize,
    start: usize,
    count: Option<usize>,
    datum: bool,
    threshold: Option<f64>,
) -> Result<()> {
    let steps = steps_of(steps)?;
    let opts = phase_options(threshold);
    let frames = read_frames(dir)?;
    let n = steps.count();
    let first = frames[0].frame_index;
    let offset = start
        .checked_sub(first)
        .filter(|o| o + n <= frames.len())
        .ok_or_else(|| bsc_core::Error::OutOfRange(format!("no full window starts at frame {start}")))?;
    let available = frames.len() - offset - n + 1;
    let count = count.unwrap_or(available).min(available);
    for w in 0..count {
        let window = &frames[offset + w..offset + w + n];
        let mut p = wrapped_phase(window, steps, &opts)?;
        if datum {
            p = datum_correct(&p, p.start_index)?;
        }
        write_phase_frame(&g.out.join(format!("phase_{:05}.f32", p.start_index)), &p)?;
    }
    println!("wrote {count} phase frames to {}", g.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    file: String,
    start_index: usize,
    datum_index: Option<usize>,
    order_k: usize,
    valid_pixels: usize,
}

/// Index of a `compensate` run.
#[derive(Debug, Serialize)]
struct Manifest {
    source: PathBuf,
    steps: usize,
    k: usize,
    mode: &'static str,
    width: usize,
    height: usize,
    frames_in: usize,
    outputs: Vec<ManifestEntry>,
}

fn compensate(
    g: &Global,
    dir: &Path,
    steps: usize,
    k: usize,
    stream: bool,
    threshold: Option<f64>,
) -> Result<()> {
    let steps = steps_of(steps)?;
    let opts = phase_options(threshold);
    let frames = read_frames(dir)?;
    let outputs: Vec<PhaseFrame> = if stream {
        let mut state = StreamState::new(steps, k, opts)?;
        let mut out = Vec::new();
        for f in &frames {
            out.extend(state.push(f)?);
        }
        out
    } else {
        compensate_batch(&frames, steps, k, &opts)?
    };
    let mut entries = Vec::with_capacity(outputs.len());
    for o in &outputs {
        let file = format!("bsc_k{k}_{:05}.f32", o.start_index);
        write_phase_frame(&g.out.join(&file), o)?;
        entries.push(ManifestEntry {
            file,
            start_index: o.start_index,
            datum_index: o.datum_index,
            order_k: o.order_k,
            valid_pixels: o.valid_count(),
        });
    }
    let manifest = Manifest {
        source: dir.to_path_buf(),
        steps: steps.count(),
        k,
        mode: if stream { "stream" } else { "batch" },
        width: frames[0].width(),
        height: frames[0].height(),
        frames_in: frames.len(),
        outputs: entries,
    };
    write_json(&g.out.join("manifest.json"), &manifest)?;
    println!(
        "{} order-{k} outputs from {} frames ({}) in {}",
        manifest.outputs.len(),
        frames.len(),
        manifest.mode,
        g.out.display()
    );
    Ok(())
}

fn oracle(g: &Global, scenario: &Path, window: usize) -> Result<()> {
    let spec = load_scenario(g, scenario)?;
    let rows = oracle_check(&spec, window)?;
    let csv = oracle_rows_to_csv(&rows)?;
    fs::write(g.out.join("oracle.csv"), &csv)?;
    print!("{csv}");
    let worst = rows
        .iter()
        .map(|r| (r.measured_cos2 - r.predicted_cos2).abs().max((r.measured_dc - r.predicted_dc).abs()))
        .fold(0.0, f64::max);
    strict_check(g, worst <= spec.tolerance, || {
        format!("oracle mismatch {worst:.3e} rad exceeds tolerance {:.3e}", spec.tolerance)
    })
}

fn sweep(g: &Global, scenario: &Path) -> Result<()> {
    let spec = load_scenario(g, scenario)?;
    let report = run_sweep(&spec)?;
    let csv = report.to_csv()?;
    fs::write(g.out.join("sweep.csv"), &csv)?;
    fs::write(g.out.join("sweep.json"), report.to_json()? + "\n")?;
    print!("{csv}");
    strict_check(g, report.within_tolerance(), || {
        "sweep missed the oracle tolerance or stream/batch equality".into()
    })
}

fn freq_limit(g: &Global, geometry: Option<&Path>, candidate: Option<f64>) -> Result<()> {
    let geom: SystemGeometry = match geometry {
        Some(p) => load_json(p)?,
        None => Rig::desk().geometry,
    };
    geom.validate()?;
    let check = check_frequency(&geom, candidate)?;
    write_json(&g.out.join("freq_limit.json"), &check)?;
    println!("{}", serde_json::to_string_pretty(&check)?);
    strict_check(g, check.satisfied, || {
        format!("frequency {} is not below the limit {:.4}", check.candidate, check.f_limit)
    })
}

fn unwrap(g: &Global, main: &Path, aux: &Path, rig: Option<&Path>, window: Option<usize>) -> Result<()> {
    let rig: Rig = match rig {
        Some(p) => load_json(p)?,
        None => Rig::desk(),
    };
    rig.validate()?;
    let sad = SadOptions {
        window: window.unwrap_or(SadOptions::default().window),
        ..SadOptions::default()
    };
    let m = read_phase_frame(main).with_context(|| format!("reading {}", main.display()))?;
    let a = read_phase_frame(aux).with_context(|| format!("reading {}", aux.display()))?;
    let r = unwrap_pair(&m, &a, &rig, &sad)?;
    let (w, h) = r.unwrapped.absolute.dims();
    let masked = |values: &Grid<f64>| {
        Grid::from_vec(
            w,
            h,
            values
                .as_slice()
                .iter()
                .zip(r.unwrapped.valid.as_slice())
                .map(|(&v, &ok)| if ok { v } else { f64::NAN })
                .collect(),
        )
    };
    let side = |quantity: &str| GridSidecar {
        frame_index: Some(m.start_index),
        quantity: Some(quantity.into()),
        order_k: Some(m.order_k),
        nan_is_invalid: true,
        ..GridSidecar::new(w, h)
    };
    write_f32_grid(&g.out.join("absolute_phase.f32"), &masked(&r.unwrapped.absolute)?, &side("absolute_phase"))?;
    write_f32_grid(&g.out.join("phase_order.f32"), &masked(&r.unwrapped.order.map(|&o| o as f64))?, &side("phase_order"))?;
    write_depth_map(&g.out.join("depth.f32"), &r.depth)?;
    let points = write_xyz(&g.out.join("cloud.xyz"), &r.depth, &rig)?;
    println!(
        "{} of {} pixels unwrapped, {points} points, {} ambiguous matches",
        r.unwrapped.valid.as_slice().iter().filter(|&&v| v).count(),
        w * h,
        r.disparity.ambiguous_count()
    );
    Ok(())
}

fn bench(g: &Global, width: usize, height: usize, steps: usize, k: usize, frames: usize) -> Result<()> {
    let config = BenchConfig {
        width,
        height,
        fringe: FringeConfig {
            steps: steps_of(steps)?,
            ..FringeConfig::default()
        },
        k,
        frames,
        seed: g.seed.unwrap_or(0),
        ..BenchConfig::default()
    };
    let report = bench_stream(&config)?;
    write_json(&g.out.join("bench.json"), &report)?;
    println!(
        "{width}x{height} N={steps} K={k}: {:.1} frames/s, mean {:.3} ms, median {:.3} ms, p99 {:.3} ms, {} thread(s)",
        report.frames_per_second, report.mean_ms, report.median_ms, report.p99_ms, report.threads
    );
    Ok(())
}
