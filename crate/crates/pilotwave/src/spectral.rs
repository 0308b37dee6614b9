//! Fourier machinery on flattened grid data: per-axis transforms, spectral
//! derivatives, and mode symbols for the kinetic term.
//!
//! Data layout matches [`crate::grid::WaveFunction`]: points row-major with
//! axis 0 slowest, spin index fastest. All transforms are periodic; the
//! Nyquist mode is zeroed for odd-order derivatives (its sign is ambiguous)
//! and kept for even-order symbols.

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

use crate::grid::{Axis, Grid};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, dir))
}

/// Physical wavenumber of Fourier mode `m` on a periodic axis, second half
/// of the spectrum folded to negative frequencies.
pub fn wavenumber(axis: &Axis, m: usize) -> f64 {
    let n = axis.n;
    let dk = 2.0 * std::f64::consts::PI / axis.length();
    let signed = if m <= n / 2 {
        m as f64
    } else {
        m as f64 - n as f64
    };
    signed * dk
}

fn line_geometry(grid: &Grid, spin_dim: usize, axis: usize) -> (usize, usize, usize) {
    let n = grid.axis(axis).n;
    let inner = grid.point_stride(axis) * spin_dim;
    let outer = grid.len() * spin_dim / (n * inner);
    (n, inner, outer)
}

/// In-place FFT along one axis of flattened spinor data.
pub fn fft_axis(
    data: &mut [Complex64],
    grid: &Grid,
    spin_dim: usize,
    axis: usize,
    direction: FftDirection,
) {
    let (n, inner, outer) = line_geometry(grid, spin_dim, axis);
    let fft = plan(n, direction);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let inv_n = 1.0 / n as f64;
    for o in 0..outer {
        let block = o * n * inner;
        for r in 0..inner {
            let base = block + r;
            for (j, l) in line.iter_mut().enumerate() {
                *l = data[base + j * inner];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            if direction == FftDirection::Inverse {
                for (j, l) in line.iter().enumerate() {
                    data[base + j * inner] = l * inv_n;
                }
            } else {
                for (j, l) in line.iter().enumerate() {
                    data[base + j * inner] = *l;
                }
            }
        }
    }
}

/// Multiply Fourier-space data by a per-mode symbol along one axis.
pub fn apply_mode_symbol(
    data: &mut [Complex64],
    grid: &Grid,
    spin_dim: usize,
    axis: usize,
    symbol: &[Complex64],
) {
    let (n, inner, outer) = line_geometry(grid, spin_dim, axis);
    debug_assert_eq!(symbol.len(), n);
    for o in 0..outer {
        let block = o * n * inner;
        for (j, s) in symbol.iter().enumerate() {
            let base = block + j * inner;
            for r in 0..inner {
                data[base + r] *= s;
            }
        }
    }
}

/// Symbol i*k for the first derivative (Nyquist zeroed).
pub fn derivative_symbol(axis: &Axis) -> Vec<Complex64> {
    (0..axis.n)
        .map(|m| {
            if axis.n % 2 == 0 && m == axis.n / 2 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, wavenumber(axis, m))
            }
        })
        .collect()
}

/// Spectral gradient along one axis.
pub fn gradient_axis(
    amps: &[Complex64],
    grid: &Grid,
    spin_dim: usize,
    axis: usize,
) -> Vec<Complex64> {
    let mut data = amps.to_vec();
    fft_axis(&mut data, grid, spin_dim, axis, FftDirection::Forward);
    apply_mode_symbol(&mut data, grid, spin_dim, axis, &derivative_symbol(grid.axis(axis)));
    fft_axis(&mut data, grid, spin_dim, axis, FftDirection::Inverse);
    data
}

/// Periodic central-difference gradient along one axis (the cross-check
/// mode for the spectral derivative).
pub fn gradient_axis_central(
    amps: &[Complex64],
    grid: &Grid,
    spin_dim: usize,
    axis: usize,
) -> Vec<Complex64> {
    let (n, inner, outer) = line_geometry(grid, spin_dim, axis);
    let h2 = 2.0 * grid.axis(axis).spacing();
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    for o in 0..outer {
        let block = o * n * inner;
        for j in 0..n {
            let plus = block + ((j + 1) % n) * inner;
            let minus = block + ((j + n - 1) % n) * inner;
            let here = block + j * inner;
            for r in 0..inner {
                out[here + r] = (amps[plus + r] - amps[minus + r]) / h2;
            }
        }
    }
    out
}

/// Spectral Laplacian, summed over all axes.
pub fn laplacian(amps: &[Complex64], grid: &Grid, spin_dim: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    for axis in 0..grid.dims() {
        let ax = grid.axis(axis);
        let symbol: Vec<Complex64> = (0..ax.n)
            .map(|m| {
                let k = wavenumber(ax, m);
                Complex64::new(-k * k, 0.0)
            })
            .collect();
        let mut data = amps.to_vec();
        fft_axis(&mut data, grid, spin_dim, axis, FftDirection::Forward);
        apply_mode_symbol(&mut data, grid, spin_dim, axis, &symbol);
        fft_axis(&mut data, grid, spin_dim, axis, FftDirection::Inverse);
        for (a, b) in out.iter_mut().zip(&data) {
            *a += b;
        }
    }
    out
}

/// Spectral Laplacian of a real field (returns the real part; the imaginary
/// part is rounding noise for real input).
pub fn laplacian_real(field: &[f64], grid: &Grid) -> Vec<f64> {
    let amps: Vec<Complex64> = field.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    laplacian(&amps, grid, 1).iter().map(|c| c.re).collect()
}

/// Spectral first derivative of a real scalar field along one axis.
pub fn derivative_real(field: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let amps: Vec<Complex64> = field.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    gradient_axis(&amps, grid, 1, axis).iter().map(|c| c.re).collect()
}

/// Spectral second derivative of a real scalar field along one axis.
pub fn second_derivative_real(field: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let ax = grid.axis(axis);
    let symbol: Vec<Complex64> = (0..ax.n)
        .map(|m| {
            let k = wavenumber(ax, m);
            Complex64::new(-k * k, 0.0)
        })
        .collect();
    let mut data: Vec<Complex64> = field.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    fft_axis(&mut data, grid, 1, axis, FftDirection::Forward);
    apply_mode_symbol(&mut data, grid, 1, axis, &symbol);
    fft_axis(&mut data, grid, 1, axis, FftDirection::Inverse);
    data.iter().map(|c| c.re).collect()
}
