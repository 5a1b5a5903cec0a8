//! Multi-dimensional FFT passes over flat row-major complex buffers.
//!
//! Forward passes are unnormalized. A full inverse carries the 1/N factor;
//! the single-axis inverse used by the derivative kernels leaves it out so
//! callers can fold normalization into a later coefficient multiply.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;

/// Columns gathered per tile when transforming a strided axis.
const TILE_COLS: usize = 64;

pub(crate) struct SpectralEngine {
    planner: FftPlanner<f64>,
    scratch: Vec<Complex64>,
    tile: Vec<Complex64>,
}

impl SpectralEngine {
    pub fn new() -> Self {
        SpectralEngine {
            planner: FftPlanner::new(),
            scratch: Vec::new(),
            tile: Vec::new(),
        }
    }

    /// In-place unnormalized transform along every axis.
    pub fn forward(&mut self, shape: &[usize], data: &mut [Complex64]) {
        for axis in 0..shape.len() {
            self.axis_pass(shape, axis, None, data, None, true);
        }
    }

    /// In-place inverse along every axis, 1/N applied at the end.
    #[cfg(test)]
    pub fn inverse_normalized(&mut self, shape: &[usize], data: &mut [Complex64]) {
        for axis in 0..shape.len() {
            self.axis_pass(shape, axis, None, data, None, false);
        }
        let n: usize = shape.iter().product();
        let s = 1.0 / n as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    /// dst = inverse transform along `axis` of src scaled by `scale[j]` at
    /// position j along that axis. Unnormalized; src and dst must not alias.
    pub fn axis_inverse_scaled(
        &mut self,
        shape: &[usize],
        axis: usize,
        src: &[Complex64],
        dst: &mut [Complex64],
        scale: &[f64],
    ) {
        self.axis_pass(shape, axis, Some(src), dst, Some(scale), false);
    }

    fn axis_pass(
        &mut self,
        shape: &[usize],
        axis: usize,
        src: Option<&[Complex64]>,
        data: &mut [Complex64],
        scale: Option<&[f64]>,
        forward: bool,
    ) {
        let n = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        debug_assert_eq!(data.len(), outer * n * inner);

        if n == 1 {
            let w = scale.map(|s| s[0]).unwrap_or(1.0);
            match src {
                Some(s) => {
                    for (d, v) in data.iter_mut().zip(s) {
                        *d = v * w;
                    }
                }
                None if w != 1.0 => {
                    for d in data.iter_mut() {
                        *d *= w;
                    }
                }
                None => {}
            }
            return;
        }

        let plan = if forward {
            self.planner.plan_fft_forward(n)
        } else {
            self.planner.plan_fft_inverse(n)
        };
        let need = plan.get_inplace_scratch_len();
        if self.scratch.len() < need {
            self.scratch.resize(need, Complex64::default());
        }
        let mut scratch = std::mem::take(&mut self.scratch);

        if inner == 1 {
            // Contiguous runs of length n; copy/scale then batch-process.
            match src {
                Some(s) => match scale {
                    Some(sc) => {
                        for (dchunk, schunk) in data.chunks_exact_mut(n).zip(s.chunks_exact(n)) {
                            for j in 0..n {
                                dchunk[j] = schunk[j] * sc[j];
                            }
                        }
                    }
                    None => data.copy_from_slice(s),
                },
                None => {
                    if let Some(sc) = scale {
                        for chunk in data.chunks_exact_mut(n) {
                            for j in 0..n {
                                chunk[j] *= sc[j];
                            }
                        }
                    }
                }
            }
            plan.process_with_scratch(data, &mut scratch);
        } else {
            // Strided axis: gather transposed tiles of TILE_COLS columns,
            // transform them contiguously, scatter back.
            if self.tile.len() < TILE_COLS * n {
                self.tile.resize(TILE_COLS * n, Complex64::default());
            }
            let mut tile = std::mem::take(&mut self.tile);
            for o in 0..outer {
                let base = o * n * inner;
                let mut i0 = 0;
                while i0 < inner {
                    let b = TILE_COLS.min(inner - i0);
                    for j in 0..n {
                        let start = base + j * inner + i0;
                        let w = scale.map(|s| s[j]).unwrap_or(1.0);
                        match src {
                            Some(s) => {
                                for (t, v) in s[start..start + b].iter().enumerate() {
                                    tile[t * n + j] = v * w;
                                }
                            }
                            None => {
                                for t in 0..b {
                                    tile[t * n + j] = data[start + t] * w;
                                }
                            }
                        }
                    }
                    plan.process_with_scratch(&mut tile[..b * n], &mut scratch);
                    for j in 0..n {
                        let dst = &mut data[base + j * inner + i0..base + j * inner + i0 + b];
                        for (t, d) in dst.iter_mut().enumerate() {
                            *d = tile[t * n + j];
                        }
                    }
                    i0 += b;
                }
            }
            self.tile = tile;
        }
        self.scratch = scratch;
    }
}

thread_local! {
    static ENGINE: RefCell<SpectralEngine> = RefCell::new(SpectralEngine::new());
}

/// Run `f` with the thread's cached engine (plans and scratch are reused).
pub(crate) fn with_engine<R>(f: impl FnOnce(&mut SpectralEngine) -> R) -> R {
    ENGINE.with(|e| f(&mut e.borrow_mut()))
}
