//! File formats: binary PGM images, raw little-endian float32 grids with a
//! JSON sidecar, frame directories and ASCII point clouds.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fringe::ImageFrame;
use crate::geometry::Rig;
use crate::grid::Grid;
use crate::phase::PhaseFrame;
use crate::stereo::DepthMap;

/// Writes `grid` as a binary (P5) PGM. Values are rounded and clamped to
/// the 8- or 16-bit range.
pub fn write_pgm(path: &Path, grid: &Grid<f64>, bits: u8) -> Result<()> {
    let max: u32 = match bits {
        8 => 255,
        16 => 65535,
        _ => return Err(Error::config(format!("PGM depth must be 8 or 16 bits, got {bits}"))),
    };
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{} {}\n{}\n", grid.width(), grid.height(), max)?;
    for &v in grid.as_slice() {
        let q = if v.is_finite() { v.round().clamp(0.0, max as f64) as u32 } else { 0 };
        if bits == 8 {
            out.write_all(&[q as u8])?;
        } else {
            out.write_all(&(q as u16).to_be_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a binary PGM. Returns the gray levels and the header's maxval.
pub fn read_pgm(path: &Path) -> Result<(Grid<f64>, u32)> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("{}: truncated PGM header", path.display())));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let bad = |what: &str| Error::Format(format!("{}: bad PGM {what}", path.display()));
    if token()? != "P5" {
        return Err(bad("magic (only binary P5 is supported)"));
    }
    let w: usize = token()?.parse().map_err(|_| bad("width"))?;
    let h: usize = token()?.parse().map_err(|_| bad("height"))?;
    let max: u32 = token()?.parse().map_err(|_| bad("maxval"))?;
    if max == 0 || max > 65535 {
        return Err(bad("maxval"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let depth = if max < 256 { 1 } else { 2 };
    let raster = bytes
        .get(pos..pos + w * h * depth)
        .ok_or_else(|| bad("raster (file too short)"))?;
    let data = if depth == 1 {
        raster.iter().map(|&b| b as f64).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    Ok((Grid::from_vec(w, h, data)?, max))
}

/// JSON sidecar describing a raw float32 grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub frame_index: Option<usize>,
    pub dtype: String,
    /// What the values are, e.g. `wrapped_phase` or `depth_mm`.
    #[serde(default)]
    pub quantity: Option<String>,
    #[serde(default)]
    pub datum_index: Option<usize>,
    #[serde(default)]
    pub order_k: Option<usize>,
    /// Invalid pixels are stored as NaN.
    #[serde(default)]
    pub nan_is_invalid: bool,
}

impl GridSidecar {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            frame_index: None,
            dtype: "float32".into(),
            quantity: None,
            datum_index: None,
            order_k: None,
            nan_is_invalid: false,
        }
    }
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the grid as little-endian float32 plus its sidecar.
pub fn write_f32_grid(path: &Path, grid: &Grid<f64>, sidecar: &GridSidecar) -> Result<()> {
    if (sidecar.width, sidecar.height) != grid.dims() {
        return Err(Error::DimensionMismatch(
            "sidecar dimensions disagree with the grid".into(),
        ));
    }
    let mut bytes = Vec::with_capacity(grid.len() * 4);
    for &v in grid.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}

/// Reads a float32 grid and its sidecar.
pub fn read_f32_grid(path: &Path) -> Result<(Grid<f64>, GridSidecar)> {
    let side: GridSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if side.dtype != "float32" {
        return Err(Error::Format(format!(
            "{}: unsupported dtype '{}'",
            path.display(),
            side.dtype
        )));
    }
    let bytes = fs::read(path)?;
    if bytes.len() != side.width * side.height * 4 {
        return Err(Error::Format(format!(
            "{}: {} bytes, sidecar expects {}x{} float32",
            path.display(),
            bytes.len(),
            side.width,
            side.height
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((Grid::from_vec(side.width, side.height, data)?, side))
}

/// Stores a phase frame; invalid pixels become NaN.
pub fn write_phase_frame(path: &Path, frame: &PhaseFrame) -> Result<()> {
    let grid = Grid::from_vec(
        frame.width(),
        frame.height(),
        frame
            .phase
            .as_slice()
            .iter()
            .zip(frame.valid.as_slice())
            .map(|(&p, &v)| if v { p } else { f64::NAN })
            .collect(),
    )?;
    let side = GridSidecar {
        frame_index: Some(frame.start_index),
        quantity: Some("wrapped_phase".into()),
        datum_index: frame.datum_index,
        order_k: Some(frame.order_k),
        nan_is_invalid: true,
        ..GridSidecar::new(frame.width(), frame.height())
    };
    write_f32_grid(path, &grid, &side)
}

/// Loads a phase frame written by [`write_phase_frame`]. Values are
/// re-wrapped into `[0, 2π)` since float32 rounding can reach 2π.
pub fn read_phase_frame(path: &Path) -> Result<PhaseFrame> {
    let (grid, side) = read_f32_grid(path)?;
    let (w, h) = grid.dims();
    let valid = grid.map(|v| v.is_finite());
    let phase = grid.map(|&v| {
        if v.is_finite() {
            let r = v.rem_euclid(std::f64::consts::TAU);
            if r >= std::f64::consts::TAU {
                0.0
            } else {
                r
            }
        } else {
            0.0
        }
    });
    debug_assert_eq!(phase.dims(), (w, h));
    Ok(PhaseFrame {
        phase,
        valid,
        start_index: side.frame_index.unwrap_or(0),
        datum_index: side.datum_index,
        order_k: side.order_k.unwrap_or(0),
    })
}

/// Stores a depth map in mm; invalid pixels become NaN.
pub fn write_depth_map(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = depth.depth.dims();
    let grid = Grid::from_vec(
        w,
        h,
        depth
            .depth
            .as_slice()
            .iter()
            .zip(depth.valid.as_slice())
            .map(|(&z, &v)| if v { z } else { f64::NAN })
            .collect(),
    )?;
    let side = GridSidecar {
        quantity: Some("depth_mm".into()),
        nan_is_invalid: true,
        ..GridSidecar::new(w, h)
    };
    write_f32_grid(path, &grid, &side)
}

/// Writes `X Y Z` lines (mm, main-camera frame) for every valid depth.
pub fn write_xyz(path: &Path, depth: &DepthMap, rig: &Rig) -> Result<usize> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let (w, h) = depth.depth.dims();
    let mut count = 0;
    for y in 0..h {
        for x in 0..w {
            if !*depth.valid.get(x, y) {
                continue;
            }
            let z = *depth.depth.get(x, y);
            let wx = rig.main.ray_x(x as f64, z);
            let wy = (y as f64 - rig.main.cy) * z / rig.main.focal_px;
            writeln!(out, "{wx:.6} {wy:.6} {z:.6}")?;
            count += 1;
        }
    }
    out.flush()?;
    Ok(count)
}

/// File name used for captured frame `index`.
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.pgm")
}

/// Gray-level scale of a 16-bit frame file relative to 8-bit units.
pub const SIXTEEN_BIT_SCALE: f64 = 256.0;

/// Writes frames as `frame_NNNNN.pgm` into `dir`. Intensities are in 8-bit
/// gray units; 16-bit files store them times [`SIXTEEN_BIT_SCALE`].
pub fn write_frame_dir(dir: &Path, frames: &[ImageFrame], bits: u8) -> Result<()> {
    fs::create_dir_all(dir)?;
    for f in frames {
        let path = dir.join(frame_file_name(f.frame_index));
        if bits == 16 {
            write_pgm(&path, &f.intensity.map(|v| v * SIXTEEN_BIT_SCALE), bits)?;
        } else {
            write_pgm(&path, &f.intensity, bits)?;
        }
    }
    Ok(())
}

/// Reads every `frame_NNNNN.pgm` in `dir`, ordered by index.
pub fn read_frame_dir(dir: &Path) -> Result<Vec<ImageFrame>> {
    let mut indexed = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(index) = name
            .strip_prefix("frame_")
            .and_then(|r| r.strip_suffix(".pgm"))
            .and_then(|n| n.parse::<usize>().ok())
        else {
            continue;
        };
        indexed.push((index, path));
    }
    if indexed.is_empty() {
        return Err(Error::Format(format!(
            "{}: no frame_NNNNN.pgm files",
            dir.display()
        )));
    }
    indexed.sort();
    indexed
        .into_iter()
        .map(|(index, path)| {
            let (mut intensity, maxval) = read_pgm(&path)?;
            if maxval > 255 {
                intensity = intensity.map(|v| v / SIXTEEN_BIT_SCALE);
            }
            Ok(ImageFrame {
                intensity,
                frame_index: index,
                timestamp: None,
            })
        })
        .collect()
}
