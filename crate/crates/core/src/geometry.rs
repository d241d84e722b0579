//! Paraxial binocular rig: main camera, auxiliary camera and projector.
//!
//! World coordinates coincide with the main camera. The auxiliary camera is
//! rectified against it (pure X translation by the camera-camera baseline)
//! and all three optical centres lie in the `Y = 0` plane, so only the X/Z
//! plane matters for correspondence and triangulation.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Depth range and fringe layout used by the uniqueness constraint.
/// Lengths in mm, focal length and width in projector pixels, fringe
/// frequency in periods across the projector width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemGeometry {
    pub z_min: f64,
    pub z_max: f64,
    pub z_nominal: f64,
    pub baseline_mm: f64,
    pub projector_z_mm: f64,
    pub projector_focal_px: f64,
    pub projector_width_px: u32,
    pub fringe_periods: f64,
}

impl SystemGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.z_min && self.z_min < self.z_nominal && self.z_nominal < self.z_max) {
            return Err(Error::Geometry(format!(
                "need 0 < z_min < z_nominal < z_max, got {} / {} / {}",
                self.z_min, self.z_nominal, self.z_max
            )));
        }
        if !(self.baseline_mm > 0.0) {
            return Err(Error::Geometry("camera-camera baseline must be positive".into()));
        }
        if self.projector_width_px == 0 || !(self.projector_focal_px > 0.0) {
            return Err(Error::Geometry(
                "projector width and focal length must be positive".into(),
            ));
        }
        if !(self.fringe_periods > 0.0) {
            return Err(Error::Geometry("fringe frequency must be positive".into()));
        }
        Ok(())
    }

    /// Fringe wavelength in projector pixels, `W^p / f`.
    pub fn wavelength_px(&self) -> f64 {
        self.projector_width_px as f64 / self.fringe_periods
    }
}

/// Length of the segment cut from the plane at `z_nominal` by the auxiliary
/// camera's feasible cone: `(z_max - z_min) Z L / (z_max z_min)`.
pub fn virtual_segment_length(geom: &SystemGeometry) -> f64 {
    (geom.z_max - geom.z_min) * geom.z_nominal * geom.baseline_mm / (geom.z_max * geom.z_min)
}

/// Upper bound on the fringe frequency for which every stereo search range
/// holds at most one fringe period.
pub fn max_fringe_frequency(geom: &SystemGeometry) -> Result<f64> {
    let factor = 1.0 - geom.projector_z_mm / geom.z_nominal;
    if !(factor > 0.0) {
        return Err(Error::Geometry(format!(
            "projector must sit in front of the nominal depth: 1 - Zp/Z = {factor}"
        )));
    }
    let range = geom.z_max - geom.z_min;
    if !(range > 0.0) || !(geom.baseline_mm > 0.0) || !(geom.projector_focal_px > 0.0) {
        return Err(Error::Geometry(
            "depth range, baseline and projector focal length must be positive".into(),
        ));
    }
    Ok(factor * geom.z_min * geom.z_max * geom.projector_width_px as f64
        / (range * geom.baseline_mm * geom.projector_focal_px))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCheck {
    pub segment_mm: f64,
    pub f_limit: f64,
    pub candidate: f64,
    pub satisfied: bool,
}

/// Evaluates `virtual_segment_length` and `max_fringe_frequency` for a
/// candidate frequency (`None` uses `geom.fringe_periods`).
pub fn check_frequency(geom: &SystemGeometry, candidate: Option<f64>) -> Result<FrequencyCheck> {
    let f_limit = max_fringe_frequency(geom)?;
    let candidate = candidate.unwrap_or(geom.fringe_periods);
    Ok(FrequencyCheck {
        segment_mm: virtual_segment_length(geom),
        f_limit,
        candidate,
        satisfied: candidate < f_limit,
    })
}

/// Rectified pinhole camera; the pose is a pure X translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub offset_x_mm: f64,
}

impl CameraModel {
    /// X coordinate of the ray through column `x` at depth `z`.
    #[inline]
    pub fn ray_x(&self, x: f64, z: f64) -> f64 {
        self.offset_x_mm + (x - self.cx) * z / self.focal_px
    }

    #[inline]
    pub fn project_x(&self, world_x: f64, z: f64) -> f64 {
        self.focal_px * (world_x - self.offset_x_mm) / z + self.cx
    }
}

/// Projector with its optical centre at `(offset_x_mm, 0, offset_z_mm)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorModel {
    pub focal_px: f64,
    pub cx: f64,
    pub width_px: u32,
    pub offset_x_mm: f64,
    #[serde(default)]
    pub offset_z_mm: f64,
}

impl ProjectorModel {
    /// Projector column `x^p` lighting world point `(x, ·, z)`.
    #[inline]
    pub fn column(&self, world_x: f64, z: f64) -> f64 {
        self.focal_px * (world_x - self.offset_x_mm) / (z - self.offset_z_mm) + self.cx
    }
}

/// Main/auxiliary camera pair plus projector, with the depth range they were
/// laid out for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rig {
    pub geometry: SystemGeometry,
    pub main: CameraModel,
    pub aux: CameraModel,
    pub projector: ProjectorModel,
}

impl Rig {
    /// A desk-scale layout: 400-500 mm working range, 35 mm camera baseline,
    /// 912 px wide projector with 24 px fringes, 160x120 camera crops.
    pub fn desk() -> Self {
        let geometry = SystemGeometry {
            z_min: 400.0,
            z_max: 500.0,
            z_nominal: 450.0,
            baseline_mm: 35.0,
            projector_z_mm: 0.0,
            projector_focal_px: 1000.0,
            projector_width_px: 912,
            fringe_periods: 38.0,
        };
        let main = CameraModel {
            focal_px: 1200.0,
            cx: 79.5,
            cy: 59.5,
            width: 160,
            height: 120,
            offset_x_mm: 0.0,
        };
        // The auxiliary crop is shifted so the disparity search range sits near zero.
        let aux = CameraModel {
            cx: main.cx + 95.0,
            offset_x_mm: geometry.baseline_mm,
            ..main.clone()
        };
        let projector = ProjectorModel {
            focal_px: geometry.projector_focal_px,
            cx: 678.0,
            width_px: geometry.projector_width_px,
            offset_x_mm: 100.0,
            offset_z_mm: geometry.projector_z_mm,
        };
        Self {
            geometry,
            main,
            aux,
            projector,
        }
    }

    /// Same rig with a different camera crop size (principal points re-centred).
    pub fn with_camera_size(mut self, width: usize, height: usize) -> Self {
        let shift = self.aux.cx - self.main.cx;
        self.main.width = width;
        self.main.height = height;
        self.main.cx = (width as f64 - 1.0) / 2.0;
        self.main.cy = (height as f64 - 1.0) / 2.0;
        self.aux.width = width;
        self.aux.height = height;
        self.aux.cx = self.main.cx + shift;
        self.aux.cy = self.main.cy;
        self
    }

    /// Same rig with a different fringe frequency (periods across the projector).
    pub fn with_fringe_periods(mut self, periods: f64) -> Self {
        self.geometry.fringe_periods = periods;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let g = &self.geometry;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        if self.main.offset_x_mm != 0.0 {
            return Err(Error::Geometry("main camera must sit at the world origin".into()));
        }
        if !close(self.aux.offset_x_mm, g.baseline_mm) {
            return Err(Error::Geometry(format!(
                "auxiliary camera offset {} does not match baseline {}",
                self.aux.offset_x_mm, g.baseline_mm
            )));
        }
        if !close(self.main.focal_px, self.aux.focal_px) || !close(self.main.cy, self.aux.cy) {
            return Err(Error::Geometry(
                "rectified cameras must share focal length and cy".into(),
            ));
        }
        if self.main.width != self.aux.width || self.main.height != self.aux.height {
            return Err(Error::Geometry("camera crops must have equal size".into()));
        }
        if !close(self.projector.focal_px, g.projector_focal_px)
            || self.projector.width_px != g.projector_width_px
            || !close(self.projector.offset_z_mm, g.projector_z_mm)
        {
            return Err(Error::Geometry(
                "projector model disagrees with the system geometry".into(),
            ));
        }
        if !(self.main.focal_px > 0.0) {
            return Err(Error::Geometry("camera focal length must be positive".into()));
        }
        Ok(())
    }

    pub fn wavelength_px(&self) -> f64 {
        self.geometry.wavelength_px()
    }

    /// Principal-point shift folded into every disparity.
    #[inline]
    pub fn disparity_offset(&self) -> f64 {
        self.main.cx - self.aux.cx
    }

    /// Disparity `x_main - x_aux` of a point at depth `z`.
    #[inline]
    pub fn disparity_at_depth(&self, z: f64) -> f64 {
        self.main.focal_px * self.geometry.baseline_mm / z + self.disparity_offset()
    }

    /// Depth of a point with disparity `d`.
    pub fn depth_from_disparity(&self, d: f64) -> Result<f64> {
        let denom = d - self.disparity_offset();
        if !(denom > 0.0) {
            return Err(Error::Geometry(format!("disparity {d} lies behind the cameras")));
        }
        Ok(self.main.focal_px * self.geometry.baseline_mm / denom)
    }

    /// Integer disparity search range implied by `[z_min, z_max]`.
    pub fn disparity_range(&self) -> (i32, i32) {
        let lo = self.disparity_at_depth(self.geometry.z_max).floor() as i32;
        let hi = self.disparity_at_depth(self.geometry.z_min).ceil() as i32;
        (lo, hi)
    }

    /// Absolute projector phase `2π x^p / λ` for world point `(x, z)`.
    #[inline]
    pub fn projector_phase(&self, world_x: f64, z: f64) -> f64 {
        TAU * self.projector.column(world_x, z) / self.wavelength_px()
    }

    /// Absolute phase seen by main-camera column `x` on a fronto-parallel
    /// plane at depth `z`; errors if the point falls outside the projector.
    pub fn main_pixel_phase_on_plane(&self, x: f64, z: f64) -> Result<f64> {
        let xp = self.projector.column(self.main.ray_x(x, z), z);
        self.check_projector_column(xp)?;
        Ok(TAU * xp / self.wavelength_px())
    }

    pub(crate) fn check_projector_column(&self, xp: f64) -> Result<()> {
        if !(0.0..self.projector.width_px as f64).contains(&xp) {
            return Err(Error::Geometry(format!(
                "projector column {xp:.3} outside [0, {})",
                self.projector.width_px
            )));
        }
        Ok(())
    }

    /// Depth where the main-camera ray through column `x` meets the
    /// projector column plane `x^p`.
    pub fn triangulate_column(&self, x: f64, xp: f64) -> Result<f64> {
        let slope = (x - self.main.cx) / self.main.focal_px;
        let u = (xp - self.projector.cx) / self.projector.focal_px;
        let denom = slope - u;
        if denom.abs() < 1e-9 {
            return Err(Error::Geometry(format!(
                "camera ray and projector plane are near parallel at column {x}"
            )));
        }
        Ok((self.projector.offset_x_mm - u * self.projector.offset_z_mm) / denom)
    }
}
