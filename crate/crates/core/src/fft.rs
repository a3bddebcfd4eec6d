//! Thin helpers over rustfft used by the ramp filter and the
//! cross-correlation registration.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub(crate) fn plan_pair(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(len), planner.plan_fft_inverse(len))
}

/// In-place 2D FFT over a row-major complex grid. Unnormalized, like the
/// underlying 1D transforms; a forward+inverse round trip gains nx*ny.
pub(crate) fn fft_2d(data: &mut [Complex<f64>], nx: usize, ny: usize, inverse: bool) {
    assert_eq!(data.len(), nx * ny);
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(nx)
    } else {
        planner.plan_fft_forward(nx)
    };
    let col_fft = if inverse {
        planner.plan_fft_inverse(ny)
    } else {
        planner.plan_fft_forward(ny)
    };
    for row in data.chunks_exact_mut(nx) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); ny];
    for x in 0..nx {
        for y in 0..ny {
            column[y] = data[y * nx + x];
        }
        col_fft.process(&mut column);
        for y in 0..ny {
            data[y * nx + x] = column[y];
        }
    }
}
