//! Branch-light four-quadrant arctangent for the per-pixel phase kernel.
//!
//! Octant reduction to `[0, π/4]`, one more fold to `|x| <= 0.66`, then the
//! classic double-precision rational fit for `atan`. Agrees with
//! `f64::atan2` to a few ulp and compiles to selects rather than branches.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

const P: [f64; 5] = [
    -8.750_608_600_031_904e-1,
    -1.615_753_718_733_365e1,
    -7.500_855_792_314_705e1,
    -1.228_866_684_490_136e2,
    -6.485_021_904_942_025e1,
];
const Q: [f64; 5] = [
    2.485_846_490_142_306e1,
    1.650_270_098_316_988e2,
    4.328_810_604_912_903e2,
    4.853_903_996_359_137e2,
    1.945_506_571_482_614e2,
];

/// `atan(x)` for `|x| <= 0.66`.
#[inline(always)]
fn atan_core(x: f64) -> f64 {
    let z = x * x;
    let p = (((P[0] * z + P[1]) * z + P[2]) * z + P[3]) * z + P[4];
    let q = ((((z + Q[0]) * z + Q[1]) * z + Q[2]) * z + Q[3]) * z + Q[4];
    x + x * (z * p / q)
}

/// `atan2(s, c)` in `[0, 2π)`. Returns 0 when both inputs are zero.
#[inline(always)]
pub(crate) fn phase_angle(s: f64, c: f64) -> f64 {
    let a = s.abs();
    let b = c.abs();
    let swap = a > b;
    let lo = if swap { b } else { a };
    let hi = if swap { a } else { b };
    let fold = lo > 0.66 * hi;
    let num = if fold { lo - hi } else { lo };
    let den = if fold { lo + hi } else { hi };
    let den = if den == 0.0 { 1.0 } else { den };
    let mut t = atan_core(num / den) + if fold { FRAC_PI_4 } else { 0.0 };
    t = if swap { FRAC_PI_2 - t } else { t };
    t = if c < 0.0 { PI - t } else { t };
    t = if s < 0.0 { TAU - t } else { t };
    if t >= TAU {
        0.0
    } else {
        t
    }
}
