//! Stereo phase unwrapping: match wrapped phase between the main and
//! auxiliary cameras, re-project the binocular point into the projector to
//! pick the fringe order, then triangulate against the projector.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rig;
use crate::grid::Grid;
use crate::phase::PhaseFrame;

/// Circle-aware absolute difference of two wrapped phases, in `[0, π]`.
#[inline]
pub fn circular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % TAU;
    d.min(TAU - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SadOptions {
    /// Odd square window side in pixels.
    pub window: usize,
    pub subpixel: bool,
    /// Largest mean per-pixel difference (rad) a SAD minimum may have to
    /// count as a match candidate.
    pub candidate_threshold: f64,
}

impl Default for SadOptions {
    fn default() -> Self {
        Self {
            window: 5,
            subpixel: true,
            candidate_threshold: 0.5,
        }
    }
}

/// Disparities `x_main - x_aux` along rectified rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityMap {
    pub disparity: Grid<f64>,
    pub valid: Grid<bool>,
    /// Number of distinct SAD minima that qualify as matches.
    pub candidates: Grid<u8>,
    pub range: (i32, i32),
}

impl DisparityMap {
    /// Valid pixels that have more than one candidate.
    pub fn ambiguous_count(&self) -> usize {
        self.candidates
            .as_slice()
            .iter()
            .zip(self.valid.as_slice())
            .filter(|(&c, &v)| v && c > 1)
            .count()
    }
}

/// Sums of each `window x window` neighbourhood. Cells whose window leaves
/// the image are left untouched.
fn box_sum(cost: &[f64], w: usize, h: usize, window: usize, out: &mut [f64]) {
    let r = window / 2;
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        let line = &cost[y * w..(y + 1) * w];
        let mut acc: f64 = line[..window.min(w)].iter().sum();
        if w >= window {
            rows[y * w + r] = acc;
            for x in r + 1..w - r {
                acc += line[x + r] - line[x - r - 1];
                rows[y * w + x] = acc;
            }
        }
    }
    if h < window || w < window {
        return;
    }
    for x in r..w - r {
        let mut acc: f64 = (0..window).map(|y| rows[y * w + x]).sum();
        out[r * w + x] = acc;
        for y in r + 1..h - r {
            acc += rows[(y + r) * w + x] - rows[(y - r - 1) * w + x];
            out[y * w + x] = acc;
        }
    }
}

/// Number of plateau-collapsed local minima of `curve` whose value is at
/// most `limit`. Endpoints count when their single neighbour is higher.
fn count_minima(curve: &[f64], limit: f64) -> usize {
    let mut count = 0;
    let mut i = 0;
    while i < curve.len() {
        let mut j = i;
        while j + 1 < curve.len() && curve[j + 1] == curve[i] {
            j += 1;
        }
        let left_higher = i == 0 || curve[i - 1] > curve[i];
        let right_higher = j + 1 == curve.len() || curve[j + 1] > curve[i];
        if left_higher && right_higher && curve[i] <= limit {
            count += 1;
        }
        i = j + 1;
    }
    count
}

/// Block matching of wrapped phase over integer disparities `range`.
pub fn sad_match(
    main: &PhaseFrame,
    aux: &PhaseFrame,
    range: (i32, i32),
    options: &SadOptions,
) -> Result<DisparityMap> {
    let (lo, hi) = range;
    if hi < lo {
        return Err(Error::config(format!("empty disparity range [{lo}, {hi}]")));
    }
    if options.window == 0 || options.window % 2 == 0 {
        return Err(Error::config(format!(
            "SAD window must be a positive odd number, got {}",
            options.window
        )));
    }
    if main.phase.dims() != aux.phase.dims() {
        return Err(Error::DimensionMismatch(
            "main and auxiliary phase maps differ in size".into(),
        ));
    }
    if main.datum_class() != aux.datum_class() {
        return Err(Error::Datum("main and auxiliary phase maps use different datums".into()));
    }
    let (w, h) = main.phase.dims();
    let n_d = (hi - lo + 1) as usize;
    let area = (options.window * options.window) as f64;
    let (mp, mv) = (main.phase.as_slice(), main.valid.as_slice());
    let (ap, av) = (aux.phase.as_slice(), aux.valid.as_slice());

    let mut volume = vec![0.0; n_d * w * h];
    let mut cost = vec![0.0; w * h];
    for (di, slab) in volume.chunks_mut(w * h).enumerate() {
        let d = lo + di as i32;
        for y in 0..h {
            for x in 0..w {
                let xa = x as i64 - d as i64;
                let idx = y * w + x;
                cost[idx] = if xa >= 0 && (xa as usize) < w {
                    let ai = y * w + xa as usize;
                    if mv[idx] && av[ai] {
                        circular_difference(mp[idx], ap[ai])
                    } else {
                        PI
                    }
                } else {
                    PI
                };
            }
        }
        box_sum(&cost, w, h, options.window, slab);
    }

    let r = options.window / 2;
    let mut disparity = Grid::filled(w, h, 0.0);
    let mut valid = Grid::filled(w, h, false);
    let mut candidates = Grid::filled(w, h, 0u8);
    let mut curve = vec![0.0; n_d];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if !mv[idx] || x < r || y < r || x + r >= w || y + r >= h {
                continue;
            }
            for (di, c) in curve.iter_mut().enumerate() {
                *c = volume[di * w * h + idx] / area;
            }
            let mut best = 0;
            for di in 1..n_d {
                if curve[di] < curve[best] {
                    best = di;
                }
            }
            let n_cand = count_minima(&curve, options.candidate_threshold);
            *candidates.get_mut(x, y) = n_cand.min(u8::MAX as usize) as u8;
            if curve[best] > options.candidate_threshold {
                continue;
            }
            let mut d = (lo + best as i32) as f64;
            if options.subpixel && best > 0 && best + 1 < n_d {
                let (cm, c0, cp) = (curve[best - 1], curve[best], curve[best + 1]);
                let denom = cm - 2.0 * c0 + cp;
                if denom > 0.0 {
                    d += (0.5 * (cm - cp) / denom).clamp(-0.5, 0.5);
                }
            }
            *disparity.get_mut(x, y) = d;
            *valid.get_mut(x, y) = true;
        }
    }
    Ok(DisparityMap {
        disparity,
        valid,
        candidates,
        range,
    })
}

/// Fringe order and absolute phase for main-camera column `x` with
/// wrapped phase `wrapped` and stereo disparity `disparity`.
///
/// The binocular point is projected into the projector; the order is the
/// one that brings `wrapped` closest to the projector column it predicts.
pub fn phase_order(
    rig: &Rig,
    x: f64,
    disparity: f64,
    wrapped: f64,
    wavelength_px: f64,
) -> Result<(i64, f64)> {
    let z = rig.depth_from_disparity(disparity)?;
    let xp = rig.projector.column(rig.main.ray_x(x, z), z);
    rig.check_projector_column(xp)?;
    Ok(order_from_column(xp, wrapped, wavelength_px))
}

/// Order `n` minimising `|x^p/λ - (n + wrapped/2π)|`, and `2πn + wrapped`.
pub fn order_from_column(xp: f64, wrapped: f64, wavelength_px: f64) -> (i64, f64) {
    let n = (xp / wavelength_px - wrapped / TAU).round() as i64;
    (n, TAU * n as f64 + wrapped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnwrappedPhaseMap {
    pub absolute: Grid<f64>,
    pub order: Grid<i32>,
    pub valid: Grid<bool>,
}

/// Absolute phase for every pixel with a valid wrapped phase and disparity.
/// Pixels whose re-projection leaves the projector, or whose order falls
/// outside `[0, W^p / λ)`, become invalid.
pub fn unwrap_phase(
    main: &PhaseFrame,
    disparity: &DisparityMap,
    rig: &Rig,
    wavelength_px: f64,
) -> Result<UnwrappedPhaseMap> {
    if main.phase.dims() != disparity.disparity.dims() {
        return Err(Error::DimensionMismatch("phase and disparity maps differ in size".into()));
    }
    if !(wavelength_px > 0.0) {
        return Err(Error::config("fringe wavelength must be positive"));
    }
    let (w, h) = main.phase.dims();
    let periods = rig.projector.width_px as f64 / wavelength_px;
    let mut absolute = Grid::filled(w, h, 0.0);
    let mut order = Grid::filled(w, h, 0i32);
    let mut valid = Grid::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !(*main.valid.get(x, y) && *disparity.valid.get(x, y)) {
                continue;
            }
            let Ok((n, abs)) = phase_order(
                rig,
                x as f64,
                *disparity.disparity.get(x, y),
                *main.phase.get(x, y),
                wavelength_px,
            ) else {
                continue;
            };
            if n < 0 || n as f64 >= periods {
                continue;
            }
            *absolute.get_mut(x, y) = abs;
            *order.get_mut(x, y) = n as i32;
            *valid.get_mut(x, y) = true;
        }
    }
    Ok(UnwrappedPhaseMap {
        absolute,
        order,
        valid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    /// Depth in mm along the main-camera axis.
    pub depth: Grid<f64>,
    pub valid: Grid<bool>,
}

/// Intersects each main-camera ray with the projector column plane given
/// by the absolute phase. Depths outside the rig's working range are
/// marked invalid.
pub fn triangulate_depth(
    unwrapped: &UnwrappedPhaseMap,
    rig: &Rig,
    wavelength_px: f64,
) -> Result<DepthMap> {
    let (w, h) = unwrapped.absolute.dims();
    let g = &rig.geometry;
    let mut depth = Grid::filled(w, h, 0.0);
    let mut valid = Grid::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !*unwrapped.valid.get(x, y) {
                continue;
            }
            let xp = unwrapped.absolute.get(x, y) * wavelength_px / TAU;
            if let Ok(z) = rig.triangulate_column(x as f64, xp) {
                if (g.z_min..=g.z_max).contains(&z) {
                    *depth.get_mut(x, y) = z;
                    *valid.get_mut(x, y) = true;
                }
            }
        }
    }
    Ok(DepthMap { depth, valid })
}

/// Everything produced by one stereo unwrapping pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoResult {
    pub disparity: DisparityMap,
    pub unwrapped: UnwrappedPhaseMap,
    pub depth: DepthMap,
}

/// SAD matching over the rig's disparity range, unwrapping, and
/// triangulation in one call.
pub fn unwrap_pair(
    main: &PhaseFrame,
    aux: &PhaseFrame,
    rig: &Rig,
    options: &SadOptions,
) -> Result<StereoResult> {
    rig.validate()?;
    let wavelength = rig.wavelength_px();
    let disparity = sad_match(main, aux, rig.disparity_range(), options)?;
    let unwrapped = unwrap_phase(main, &disparity, rig, wavelength)?;
    let depth = triangulate_depth(&unwrapped, rig, wavelength)?;
    Ok(StereoResult {
        disparity,
        unwrapped,
        depth,
    })
}

/// Least-squares plane `z = a + b x + c y` through the selected pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    pub coefficients: [f64; 3],
    pub rmse: f64,
    pub pixels: usize,
}

/// Fits a plane to `values` where `mask` holds; errors on fewer than three
/// non-collinear pixels.
pub fn fit_plane(values: &Grid<f64>, mask: &Grid<bool>) -> Result<PlaneFit> {
    values.ensure_dims(mask, "plane fit")?;
    let (w, _) = values.dims();
    let pts: Vec<(f64, f64, f64)> = values
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .enumerate()
        .filter(|(_, (z, &m))| m && z.is_finite())
        .map(|(i, (&z, _))| ((i % w) as f64, (i / w) as f64, z))
        .collect();
    if pts.len() < 3 {
        return Err(Error::RankDeficient(format!("{} pixels for a plane fit", pts.len())));
    }
    // Centre coordinates for conditioning.
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for &(x, y, z) in &pts {
        let row = Vector3::new(1.0, x - mx, y - my);
        ata += row * row.transpose();
        atb += row * z;
    }
    let svd = ata.svd(true, true);
    if !(svd.singular_values.min() > 1e-10 * svd.singular_values.max()) {
        return Err(Error::RankDeficient("plane fit pixels are collinear".into()));
    }
    let c = svd
        .solve(&atb, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let sse: f64 = pts
        .iter()
        .map(|&(x, y, z)| {
            let r = z - (c[0] + c[1] * (x - mx) + c[2] * (y - my));
            r * r
        })
        .sum();
    Ok(PlaneFit {
        coefficients: [c[0] - c[1] * mx - c[2] * my, c[1], c[2]],
        rmse: (sse / n).sqrt(),
        pixels: pts.len(),
    })
}

/// RMS residual of a plane fit to the valid depths, optionally restricted
/// further by `region`.
pub fn plane_fit_rmse(depth: &DepthMap, region: Option<&Grid<bool>>) -> Result<f64> {
    let mask = match region {
        Some(r) => {
            if r.dims() != depth.valid.dims() {
                return Err(Error::DimensionMismatch("region and depth map differ in size".into()));
            }
            Grid::from_vec(
                r.width(),
                r.height(),
                r.as_slice()
                    .iter()
                    .zip(depth.valid.as_slice())
                    .map(|(&a, &b)| a && b)
                    .collect(),
            )?
        }
        None => depth.valid.clone(),
    };
    Ok(fit_plane(&depth.depth, &mask)?.rmse)
}
