//! Binomial self-compensation: fusing successive phase frames with a
//! wrap-aware circular midpoint, layer by layer.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::fringe::{ImageFrame, PhaseSteps};
use crate::grid::Grid;
use crate::kinematics::binomial_weights;
use crate::phase::{datum_correct, datum_shift, phase_kernel, wrapped_phase, PhaseFrame, PhaseOptions};

/// Circular midpoint of two wrapped phases.
///
/// Plain average when the operands are within π of each other, otherwise the
/// average moved by π. The result lies in `[0, 2π)`.
#[inline]
pub fn oplus(a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    if (a - b).abs() <= PI {
        m
    } else {
        let v = m + PI;
        if v >= TAU {
            v - TAU
        } else {
            v
        }
    }
}

fn check_stack(frames: &[PhaseFrame]) -> Result<(usize, usize)> {
    let first = frames.first().ok_or(Error::NotEnoughFrames { needed: 1, got: 0 })?;
    let dims = first.phase.dims();
    let class = first.datum_class().ok_or_else(|| {
        Error::Datum(format!(
            "frame starting at {} is not datum-corrected",
            first.start_index
        ))
    })?;
    for (j, f) in frames.iter().enumerate() {
        if f.order_k != 0 {
            return Err(Error::Datum(format!(
                "expected raw phase frames, got order {}",
                f.order_k
            )));
        }
        if f.datum_class() != Some(class) {
            return Err(Error::Datum(format!(
                "frame starting at {} does not share the datum of frame {}",
                f.start_index, first.start_index
            )));
        }
        if f.start_index != first.start_index + j {
            return Err(Error::NonConsecutive {
                expected: first.start_index + j,
                got: f.start_index,
            });
        }
        if f.phase.dims() != dims || f.valid.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "phase frame {} is {}x{}, expected {}x{}",
                f.start_index,
                f.width(),
                f.height(),
                dims.0,
                dims.1
            )));
        }
    }
    Ok(dims)
}

fn output_frame(
    first: &PhaseFrame,
    k: usize,
    w: usize,
    h: usize,
    phase: Vec<f64>,
    valid: Vec<bool>,
) -> Result<PhaseFrame> {
    Ok(PhaseFrame {
        phase: Grid::from_vec(w, h, phase)?,
        valid: Grid::from_vec(w, h, valid)?,
        start_index: first.start_index,
        datum_index: first.datum_index,
        order_k: k,
    })
}

/// Order-K compensated phase from `K + 1` consecutive datum-corrected raw
/// frames: `φ_i(k+1) = φ_i(k) ⊕ φ_{i+1}(k)` until one frame remains.
pub fn bsc_pyramid(frames: &[PhaseFrame]) -> Result<PhaseFrame> {
    let (w, h) = check_stack(frames)?;
    let k = frames.len() - 1;
    let inputs: Vec<&[f64]> = frames.iter().map(|f| f.phase.as_slice()).collect();
    let masks: Vec<&[bool]> = frames.iter().map(|f| f.valid.as_slice()).collect();
    let mut phase = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    crate::par::rows_mut2(&mut phase, &mut valid, w, |y, prow, vrow| {
        let mut level = vec![0.0; k + 1];
        for x in 0..prow.len() {
            let idx = y * w + x;
            if !masks.iter().all(|m| m[idx]) {
                prow[x] = 0.0;
                vrow[x] = false;
                continue;
            }
            for (slot, input) in level.iter_mut().zip(&inputs) {
                *slot = input[idx];
            }
            for top in (1..=k).rev() {
                for i in 0..top {
                    level[i] = oplus(level[i], level[i + 1]);
                }
            }
            prow[x] = level[0];
            vrow[x] = true;
        }
    });
    output_frame(&frames[0], k, w, h, phase, valid)
}

/// Order-K binomially weighted sum `2^-K Σ C(K,k) φ_{i+k}` of `K + 1`
/// frames. Only meaningful when no pixel wraps inside the stack; a pixel
/// whose values span more than π is reported as an error.
pub fn bsc_direct(frames: &[PhaseFrame], k: usize) -> Result<PhaseFrame> {
    if frames.len() != k + 1 {
        return Err(Error::NotEnoughFrames {
            needed: k + 1,
            got: frames.len(),
        });
    }
    let (w, h) = check_stack(frames)?;
    let weights = binomial_weights(k)?;
    let mut phase = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if !frames.iter().all(|f| f.valid.as_slice()[idx]) {
                continue;
            }
            let values = frames.iter().map(|f| f.phase.as_slice()[idx]);
            let (lo, hi) = values
                .clone()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi - lo > PI {
                return Err(Error::WrapEvent { x, y, range: hi - lo });
            }
            let v: f64 = values.zip(&weights).map(|(p, wk)| p * wk).sum();
            phase[idx] = if v >= TAU { v - TAU } else { v };
            valid[idx] = true;
        }
    }
    output_frame(&frames[0], k, w, h, phase, valid)
}

/// Compensates a whole captured sequence. Returns one order-K frame for
/// each run of `K + N` consecutive images.
pub fn compensate_batch(
    frames: &[ImageFrame],
    steps: PhaseSteps,
    k: usize,
    options: &PhaseOptions,
) -> Result<Vec<PhaseFrame>> {
    let n = steps.count();
    if frames.len() < n + k {
        return Err(Error::NotEnoughFrames {
            needed: n + k,
            got: frames.len(),
        });
    }
    let raw = frames
        .windows(n)
        .map(|win| {
            let p = wrapped_phase(win, steps, options)?;
            datum_correct(&p, win[0].frame_index)
        })
        .collect::<Result<Vec<_>>>()?;
    raw.windows(k + 1).map(bsc_pyramid).collect()
}

/// Frame-by-frame compensation: after `N + K - 1` warm-up pushes every new
/// image yields one order-K phase frame.
///
/// Only the last `N` images and one running phase frame per pyramid level
/// are kept, and all buffers are reused across pushes.
#[derive(Debug, Clone)]
pub struct StreamState {
    steps: PhaseSteps,
    k: usize,
    options: PhaseOptions,
    width: usize,
    height: usize,
    next_index: Option<usize>,
    images: Vec<Vec<f64>>,
    pushed: usize,
    raw_count: usize,
    raw: Vec<f64>,
    raw_valid: Vec<bool>,
    /// Latest frame of each level, stored row by row: row `y` of level `l`
    /// starts at `(y * K + l) * width`.
    levels: Vec<f64>,
    level_valid: Vec<bool>,
    /// Output buffers used until the pyramid is full.
    warm: Vec<f64>,
    warm_valid: Vec<bool>,
}

impl StreamState {
    pub fn new(steps: PhaseSteps, k: usize, options: PhaseOptions) -> Result<Self> {
        options.validate()?;
        Ok(Self {
            steps,
            k,
            options,
            width: 0,
            height: 0,
            next_index: None,
            images: Vec::new(),
            pushed: 0,
            raw_count: 0,
            raw: Vec::new(),
            raw_valid: Vec::new(),
            levels: Vec::new(),
            level_valid: Vec::new(),
            warm: Vec::new(),
            warm_valid: Vec::new(),
        })
    }

    pub fn steps(&self) -> PhaseSteps {
        self.steps
    }

    pub fn order(&self) -> usize {
        self.k
    }

    /// Pushes needed before the first output.
    pub fn warm_up(&self) -> usize {
        self.steps.count() + self.k
    }

    /// Forgets all buffered frames.
    pub fn reset(&mut self) {
        self.next_index = None;
        self.pushed = 0;
        self.raw_count = 0;
    }

    /// Pushes the next captured image; returns the compensated frame once
    /// enough images have arrived.
    pub fn push(&mut self, frame: &ImageFrame) -> Result<Option<PhaseFrame>> {
        let mut out = PhaseFrame {
            phase: Grid::filled(0, 0, 0.0),
            valid: Grid::filled(0, 0, false),
            start_index: 0,
            datum_index: None,
            order_k: self.k,
        };
        Ok(self.push_into(frame, &mut out)?.then_some(out))
    }

    /// Like [`push`](Self::push) but writes into `out`, reusing its
    /// allocation. Returns whether `out` now holds a new frame.
    pub fn push_into(&mut self, frame: &ImageFrame, out: &mut PhaseFrame) -> Result<bool> {
        let n = self.steps.count();
        let (w, h) = frame.intensity.dims();
        match self.next_index {
            Some(expected) if frame.frame_index != expected => {
                return Err(Error::NonConsecutive {
                    expected,
                    got: frame.frame_index,
                });
            }
            Some(_) if (w, h) != (self.width, self.height) => {
                return Err(Error::DimensionMismatch(format!(
                    "frame {} is {}x{}, stream is {}x{}",
                    frame.frame_index, w, h, self.width, self.height
                )));
            }
            Some(_) => {}
            None => self.start(w, h),
        }
        self.next_index = Some(frame.frame_index + 1);

        let slot = frame.frame_index % n;
        self.images[slot].copy_from_slice(frame.intensity.as_slice());
        self.pushed += 1;
        if self.pushed < n {
            return Ok(false);
        }

        let start = frame.frame_index + 1 - n;
        let images: Vec<&[f64]> = (start..start + n)
            .map(|i| self.images[i % n].as_slice())
            .collect();
        phase_kernel(
            self.steps,
            &images,
            self.options.modulation_threshold,
            Some(datum_shift(start)),
            &mut self.raw,
            &mut self.raw_valid,
            w,
        );

        let r = self.raw_count;
        self.raw_count += 1;
        let k = self.k;
        let ready = r >= k;
        if ready {
            if out.phase.dims() != (w, h) {
                out.phase = Grid::filled(w, h, 0.0);
                out.valid = Grid::filled(w, h, false);
            }
            out.start_index = start - k;
            out.datum_index = Some(start - k);
            out.order_k = k;
        }
        let (cur, cur_valid) = if ready {
            (out.phase.as_mut_slice(), out.valid.as_mut_slice())
        } else {
            (self.warm.as_mut_slice(), self.warm_valid.as_mut_slice())
        };
        let rows = LevelRows {
            raw: &self.raw,
            raw_valid: &self.raw_valid,
            width: w,
            k,
            depth: r.min(k),
        };
        rows.advance(&mut self.levels, &mut self.level_valid, cur, cur_valid);
        Ok(ready)
    }

    fn start(&mut self, w: usize, h: usize) {
        let n = self.steps.count();
        let px = w * h;
        self.width = w;
        self.height = h;
        self.images = vec![vec![0.0; px]; n];
        self.raw = vec![0.0; px];
        self.raw_valid = vec![false; px];
        // One spare level when K = 0 keeps the row chunking uniform.
        self.levels = vec![0.0; px * self.k.max(1)];
        self.level_valid = vec![false; px * self.k.max(1)];
        self.warm = vec![0.0; px];
        self.warm_valid = vec![false; px];
        self.pushed = 0;
        self.raw_count = 0;
    }
}

/// Pushes one raw phase frame through the running pyramid, one image row
/// at a time. `cur` receives the top of the pyramid.
struct LevelRows<'a> {
    raw: &'a [f64],
    raw_valid: &'a [bool],
    width: usize,
    k: usize,
    /// Levels already holding a frame.
    depth: usize,
}

impl LevelRows<'_> {
    fn advance(&self, levels: &mut [f64], level_valid: &mut [bool], cur: &mut [f64], cur_valid: &mut [bool]) {
        let (w, span) = (self.width, self.width * self.k.max(1));
        let row = |y: usize, l: &mut [f64], lv: &mut [bool], c: &mut [f64], cv: &mut [bool]| {
            #[cfg(target_arch = "x86_64")]
            if std::is_x86_feature_detected!("avx2") {
                // SAFETY: the feature was just detected on this CPU.
                unsafe { self.row_avx2(y, l, lv, c, cv) };
                return;
            }
            self.row(y, l, lv, c, cv);
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            levels
                .par_chunks_mut(span)
                .zip(level_valid.par_chunks_mut(span))
                .zip(cur.par_chunks_mut(w).zip(cur_valid.par_chunks_mut(w)))
                .enumerate()
                .for_each(|(y, ((l, lv), (c, cv)))| row(y, l, lv, c, cv));
        }
        #[cfg(not(feature = "parallel"))]
        levels
            .chunks_mut(span)
            .zip(level_valid.chunks_mut(span))
            .zip(cur.chunks_mut(w).zip(cur_valid.chunks_mut(w)))
            .enumerate()
            .for_each(|(y, ((l, lv), (c, cv)))| row(y, l, lv, c, cv));
    }

    #[inline(always)]
    fn row(&self, y: usize, l: &mut [f64], lv: &mut [bool], c: &mut [f64], cv: &mut [bool]) {
        let w = self.width;
        let (c, cv) = (&mut c[..w], &mut cv[..w]);
        c.copy_from_slice(&self.raw[y * w..(y + 1) * w]);
        cv.copy_from_slice(&self.raw_valid[y * w..(y + 1) * w]);
        for level in 0..self.depth {
            let p = &mut l[level * w..(level + 1) * w];
            let pv = &mut lv[level * w..(level + 1) * w];
            for x in 0..w {
                let prev = p[x];
                p[x] = c[x];
                c[x] = oplus(prev, c[x]);
            }
            for x in 0..w {
                let prev = pv[x];
                pv[x] = cv[x];
                cv[x] &= prev;
            }
        }
        if self.depth < self.k {
            l[self.depth * w..(self.depth + 1) * w].copy_from_slice(c);
            lv[self.depth * w..(self.depth + 1) * w].copy_from_slice(cv);
        }
        for x in 0..w {
            c[x] = if cv[x] { c[x] } else { 0.0 };
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn row_avx2(&self, y: usize, l: &mut [f64], lv: &mut [bool], c: &mut [f64], cv: &mut [bool]) {
        self.row(y, l, lv, c, cv)
    }
}
