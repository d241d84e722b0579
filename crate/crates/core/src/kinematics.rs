//! Motion profiles and finite differences of the per-frame phase offsets.
//!
//! The offsets `x_i` behave like a sampled trajectory: first differences are
//! velocities, second differences accelerations and so on. The residual
//! motion error after binomial compensation of order `K` is governed by the
//! `(K+1)`-th (four-step) or `(K+2)`-th (three-step) difference of this
//! series.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rig;

/// Largest binomial order with exact `u64` Pascal rows.
pub const MAX_BINOMIAL_ORDER: usize = 30;

/// Row `order` of Pascal's triangle, accumulated in exact integers.
pub fn binomial_row(order: usize) -> Result<Vec<u64>> {
    if order > MAX_BINOMIAL_ORDER {
        return Err(Error::config(format!(
            "binomial order {order} exceeds the supported maximum {MAX_BINOMIAL_ORDER}"
        )));
    }
    let mut row = vec![1u64];
    for _ in 0..order {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(1);
        for pair in row.windows(2) {
            next.push(pair[0] + pair[1]);
        }
        next.push(1);
        row = next;
    }
    Ok(row)
}

/// Normalised binomial weights `2^-K C(K, k)`; they sum to exactly one.
pub fn binomial_weights(order: usize) -> Result<Vec<f64>> {
    let scale = (-(order as f64)).exp2();
    Ok(binomial_row(order)?
        .into_iter()
        .map(|c| c as f64 * scale)
        .collect())
}

/// `Δ^(K) x_i` via the closed binomial form.
pub fn finite_difference(series: &[f64], order: usize, index: usize) -> Result<f64> {
    check_window(series.len(), order, index)?;
    let coeffs = binomial_row(order)?;
    let mut acc = 0.0;
    for (k, &c) in coeffs.iter().enumerate() {
        let term = c as f64 * series[index + order - k];
        if k % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    Ok(acc)
}

fn check_window(len: usize, order: usize, index: usize) -> Result<()> {
    if index + order >= len {
        return Err(Error::OutOfRange(format!(
            "difference of order {order} at index {index} needs {} samples, series has {len}",
            index + order + 1
        )));
    }
    Ok(())
}

/// All differences `Δ^(K) x_i` for `K <= max_order`, built by the
/// recursive definition `Δ^(K) x_i = Δ^(K-1) x_{i+1} - Δ^(K-1) x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceTable {
    base: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl DifferenceTable {
    pub fn new(base_series: Vec<f64>, max_order: usize) -> Result<Self> {
        if max_order >= base_series.len() {
            return Err(Error::OutOfRange(format!(
                "order {max_order} needs at least {} samples, series has {}",
                max_order + 1,
                base_series.len()
            )));
        }
        let mut rows = vec![base_series.clone()];
        for k in 1..=max_order {
            let prev = &rows[k - 1];
            let next: Vec<f64> = prev.windows(2).map(|w| w[1] - w[0]).collect();
            rows.push(next);
        }
        Ok(Self {
            base: base_series,
            rows,
        })
    }

    pub fn base_series(&self) -> &[f64] {
        &self.base
    }

    pub fn max_order(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn get(&self, order: usize, index: usize) -> Option<f64> {
        self.rows.get(order)?.get(index).copied()
    }

    pub fn row(&self, order: usize) -> Option<&[f64]> {
        self.rows.get(order).map(Vec::as_slice)
    }
}

/// Depth (mm) of a moving fronto-parallel surface over frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthTrajectory {
    Linear {
        z0: f64,
        velocity: f64,
    },
    Sinusoid {
        center: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    Series {
        depths: Vec<f64>,
    },
}

impl DepthTrajectory {
    pub fn depth_at(&self, frame: usize) -> Result<f64> {
        let t = frame as f64;
        Ok(match self {
            DepthTrajectory::Linear { z0, velocity } => z0 + velocity * t,
            DepthTrajectory::Sinusoid {
                center,
                amplitude,
                period,
                phase,
            } => {
                if period.is_finite() && *period > 0.0 {
                    center + amplitude * (std::f64::consts::TAU * t / period + phase).sin()
                } else {
                    center + amplitude * phase.sin()
                }
            }
            DepthTrajectory::Series { depths } => *depths.get(frame).ok_or_else(|| {
                Error::OutOfRange(format!(
                    "depth series has {} samples, frame {frame} requested",
                    depths.len()
                ))
            })?,
        })
    }

    /// Depths for frames `0..count`, checked against `[z_min, z_max]`.
    pub fn sample(&self, count: usize, z_min: f64, z_max: f64) -> Result<Vec<f64>> {
        (0..count)
            .map(|i| {
                let z = self.depth_at(i)?;
                if !(z_min..=z_max).contains(&z) {
                    return Err(Error::Geometry(format!(
                        "trajectory depth {z:.3} mm at frame {i} leaves [{z_min}, {z_max}]"
                    )));
                }
                Ok(z)
            })
            .collect()
    }
}

/// Per-frame phase offset generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionProfile {
    /// Explicit offsets, passed through unchanged.
    UniformSeries { offsets: Vec<f64> },
    /// Constant velocity in rad/frame.
    Linear { velocity: f64 },
    /// `a [sin(2π i / P + ψ) - sin ψ]`; an infinite (or `null`) period is static.
    Sinusoid {
        amplitude: f64,
        #[serde(deserialize_with = "period_or_infinite", default = "infinite")]
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Offsets seen at main-camera column `pixel_x` while a fronto-parallel
    /// plane follows `trajectory`.
    Geometric {
        trajectory: DepthTrajectory,
        rig: Box<Rig>,
        pixel_x: f64,
    },
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn period_or_infinite<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Offsets `x_0 .. x_{count-1}`.
pub fn sample_offsets(profile: &MotionProfile, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::config("offset count must be at least 1"));
    }
    match profile {
        MotionProfile::UniformSeries { offsets } => {
            if offsets.len() < count {
                return Err(Error::NotEnoughFrames {
                    needed: count,
                    got: offsets.len(),
                });
            }
            Ok(offsets[..count].to_vec())
        }
        MotionProfile::Linear { velocity } => Ok((0..count).map(|i| velocity * i as f64).collect()),
        MotionProfile::Sinusoid {
            amplitude,
            period,
            phase,
        } => {
            if !period.is_finite() || *period == 0.0 {
                return Ok(vec![0.0; count]);
            }
            let base = phase.sin();
            Ok((0..count)
                .map(|i| {
                    amplitude * ((std::f64::consts::TAU * i as f64 / period + phase).sin() - base)
                })
                .collect())
        }
        MotionProfile::Geometric {
            trajectory,
            rig,
            pixel_x,
        } => {
            let g = &rig.geometry;
            let depths = trajectory.sample(count, g.z_min, g.z_max)?;
            let phases = depths
                .iter()
                .map(|&z| rig.main_pixel_phase_on_plane(*pixel_x, z))
                .collect::<Result<Vec<_>>>()?;
            let p0 = phases[0];
            Ok(phases.into_iter().map(|p| p - p0).collect())
        }
    }
}

impl MotionProfile {
    /// Parses the compact CLI form: `linear:<v>`, `sin:<a>:<period>[:<phase>]`,
    /// `series:<x0>,<x1>,...`.
    pub fn parse_compact(spec: &str) -> Result<Self> {
        let num = |s: &str| -> Result<f64> {
            let s = s.trim();
            if s.eq_ignore_ascii_case("inf") {
                return Ok(f64::INFINITY);
            }
            s.parse::<f64>()
                .map_err(|_| Error::config(format!("bad number '{s}' in profile '{spec}'")))
        };
        let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
        match kind {
            "linear" => Ok(MotionProfile::Linear { velocity: num(rest)? }),
            "sin" | "sinusoid" => {
                let parts: Vec<&str> = rest.split(':').collect();
                if parts.len() < 2 || parts.len() > 3 {
                    return Err(Error::config(format!(
                        "sinusoid profile needs <amplitude>:<period>[:<phase>], got '{spec}'"
                    )));
                }
                Ok(MotionProfile::Sinusoid {
                    amplitude: num(parts[0])?,
                    period: num(parts[1])?,
                    phase: parts.get(2).map(|p| num(p)).transpose()?.unwrap_or(0.0),
                })
            }
            "series" => Ok(MotionProfile::UniformSeries {
                offsets: rest
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(num)
                    .collect::<Result<_>>()?,
            }),
            _ => Err(Error::config(format!("unknown motion profile '{spec}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn recursive(series: &[f64], order: usize, index: usize) -> f64 {
        if order == 0 {
            series[index]
        } else {
            recursive(series, order - 1, index + 1) - recursive(series, order - 1, index)
        }
    }

    #[test]
    fn pascal_rows() {
        assert_eq!(binomial_row(0).unwrap(), vec![1]);
        assert_eq!(binomial_row(4).unwrap(), vec![1, 4, 6, 4, 1]);
        assert_eq!(binomial_row(30).unwrap()[15], 155_117_520);
        assert!(binomial_row(31).is_err());
        for k in 0..=30 {
            let s: f64 = binomial_weights(k).unwrap().iter().sum();
            assert_eq!(s, 1.0, "order {k}");
        }
    }

    #[test]
    fn difference_examples() {
        assert_eq!(finite_difference(&[0.0, 1.0, 4.0], 2, 0).unwrap(), 2.0);
        let lin = sample_offsets(&MotionProfile::Linear { velocity: 0.01 }, 12).unwrap();
        for i in 0..10 {
            assert!(finite_difference(&lin, 2, i).unwrap().abs() < 1e-15);
        }
        assert_eq!(finite_difference(&[3.5, 1.0], 0, 0).unwrap(), 3.5);
        assert!(finite_difference(&[0.0, 1.0, 4.0], 2, 1).is_err());
        assert!(finite_difference(&[0.0, 1.0, 4.0], 3, 0).is_err());
    }

    #[test]
    fn closed_form_matches_five_nested_differences() {
        let series = [0.3, -1.2, 0.7, 2.2, -0.4, 0.9, 1.5, -2.0];
        for i in 0..3 {
            let expected = recursive(&series, 5, i);
            assert!((finite_difference(&series, 5, i).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_sequences() {
        // Δ^K of i^K / K! is 1; Δ^K of a degree K-1 polynomial is 0.
        for k in 1..=8usize {
            let fact: f64 = (1..=k).map(|v| v as f64).product();
            let s: Vec<f64> = (0..20).map(|i| (i as f64).powi(k as i32) / fact).collect();
            let lower: Vec<f64> = (0..20)
                .map(|i| {
                    let t = i as f64 * 0.1;
                    (0..k).map(|p| (p as f64 + 1.0) * t.powi(p as i32)).sum()
                })
                .collect();
            for i in 0..(20 - k) {
                assert!((finite_difference(&s, k, i).unwrap() - 1.0).abs() < 1e-6);
                assert!(finite_difference(&lower, k, i).unwrap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn table_matches_closed_form() {
        let series: Vec<f64> = (0..16).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.01).collect();
        let table = DifferenceTable::new(series.clone(), 10).unwrap();
        assert_eq!(table.max_order(), 10);
        for k in 0..=10 {
            for i in 0..series.len() - k {
                let a = table.get(k, i).unwrap();
                let b = finite_difference(&series, k, i).unwrap();
                assert!((a - b).abs() < 1e-12, "K={k} i={i}");
            }
        }
        assert!(DifferenceTable::new(vec![0.0; 3], 3).is_err());
    }

    #[test]
    fn offset_examples() {
        let lin = sample_offsets(&MotionProfile::Linear { velocity: 0.01 }, 4).unwrap();
        assert_eq!(lin, vec![0.0, 0.01, 0.02, 0.03]);

        let stat = MotionProfile::Sinusoid {
            amplitude: 0.05,
            period: f64::INFINITY,
            phase: 0.3,
        };
        assert_eq!(sample_offsets(&stat, 5).unwrap(), vec![0.0; 5]);

        let series = MotionProfile::UniformSeries {
            offsets: vec![0.0, 0.2, 0.1],
        };
        assert_eq!(sample_offsets(&series, 3).unwrap(), vec![0.0, 0.2, 0.1]);
        assert!(sample_offsets(&series, 4).is_err());
        assert!(sample_offsets(&series, 0).is_err());

        let sin = MotionProfile::Sinusoid {
            amplitude: 0.1,
            period: 40.0,
            phase: 1.0,
        };
        let xs = sample_offsets(&sin, 100).unwrap();
        assert_eq!(xs[0], 0.0);
        assert!(xs.iter().all(|x| x.abs() <= 0.2 + 1e-12));
    }

    #[test]
    fn compact_profiles() {
        assert_eq!(
            MotionProfile::parse_compact("linear:0.02").unwrap(),
            MotionProfile::Linear { velocity: 0.02 }
        );
        assert_eq!(
            MotionProfile::parse_compact("sin:0.1:inf").unwrap(),
            MotionProfile::Sinusoid {
                amplitude: 0.1,
                period: f64::INFINITY,
                phase: 0.0
            }
        );
        assert_eq!(
            MotionProfile::parse_compact("series:0,0.5").unwrap(),
            MotionProfile::UniformSeries {
                offsets: vec![0.0, 0.5]
            }
        );
        assert!(MotionProfile::parse_compact("zigzag:1").is_err());
        assert!(MotionProfile::parse_compact("sin:0.1").is_err());
    }

    #[test]
    fn sinusoid_null_period_is_static() {
        let p: MotionProfile =
            serde_json::from_str(r#"{"kind":"sinusoid","amplitude":0.05,"period":null}"#).unwrap();
        assert_eq!(sample_offsets(&p, 3).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn geometric_profile_checks_depth_range() {
        let rig = Rig::desk();
        let ok = MotionProfile::Geometric {
            trajectory: DepthTrajectory::Linear {
                z0: 450.0,
                velocity: 0.5,
            },
            rig: Box::new(rig.clone()),
            pixel_x: 80.0,
        };
        let xs = sample_offsets(&ok, 20).unwrap();
        assert_eq!(xs[0], 0.0);
        // A fronto-parallel plane moving at constant speed gives nearly linear offsets.
        let d1 = xs[1] - xs[0];
        assert!(d1.abs() > 0.01);
        assert!((xs[19] - xs[18] - d1).abs() < 0.05 * d1.abs());

        let bad = MotionProfile::Geometric {
            trajectory: DepthTrajectory::Linear {
                z0: 495.0,
                velocity: 1.0,
            },
            rig: Box::new(rig),
            pixel_x: 80.0,
        };
        assert!(matches!(sample_offsets(&bad, 20), Err(Error::Geometry(_))));
    }

    proptest! {
        #[test]
        fn closed_and_recursive_agree(series in prop::collection::vec(-1.0f64..1.0, 12..20), k in 0usize..=10) {
            let table = DifferenceTable::new(series.clone(), k).unwrap();
            for i in 0..series.len() - k {
                let closed = finite_difference(&series, k, i).unwrap();
                prop_assert!((closed - table.get(k, i).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn difference_is_linear(
            xs in prop::collection::vec(-1.0f64..1.0, 10),
            ys in prop::collection::vec(-1.0f64..1.0, 10),
            a in -3.0f64..3.0, b in -3.0f64..3.0, k in 0usize..6,
        ) {
            let zs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            for i in 0..10 - k {
                let lhs = finite_difference(&zs, k, i).unwrap();
                let rhs = a * finite_difference(&xs, k, i).unwrap() + b * finite_difference(&ys, k, i).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-10);
            }
        }
    }
}
