//! Ready-made initial states: Gaussian packets, plane waves, superpositions,
//! spinor products, and harmonic-oscillator ground states.
//!
//! Every constructor that claims to return a state normalizes numerically on
//! the grid, so the norm invariant holds to 1e-12 even though the periodic
//! box truncates analytic tails.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, Units, WaveFunction};

/// Product Gaussian packet centered at `center` with width `sigma` per axis
/// and momentum `momentum` per axis:
/// prod_i exp(-(x_i - c_i)^2 / (4 sigma_i^2) + i k_i x_i), normalized.
pub fn gaussian(grid: &Grid, center: &[f64], sigma: &[f64], momentum: &[f64]) -> Result<WaveFunction> {
    let d = grid.dims();
    if center.len() != d || sigma.len() != d || momentum.len() != d {
        return Err(Error::GridMismatch(format!(
            "gaussian parameters must have {d} components"
        )));
    }
    if sigma.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Config("gaussian widths must be positive".into()));
    }
    let mut amps = Vec::with_capacity(grid.len());
    let mut q = vec![0.0; d];
    for p in 0..grid.len() {
        grid.node_coords(p, &mut q);
        let mut log_env = 0.0;
        let mut phase = 0.0;
        for i in 0..d {
            let dx = q[i] - center[i];
            log_env -= dx * dx / (4.0 * sigma[i] * sigma[i]);
            phase += momentum[i] * q[i];
        }
        amps.push(Complex64::from_polar(log_env.exp(), phase));
    }
    WaveFunction::from_amplitudes(grid.clone(), 1, 0.0, amps)?.normalized()
}

/// Periodic plane wave with integer mode numbers per axis, k_i = 2 pi m_i / L_i.
pub fn plane_wave(grid: &Grid, modes: &[i64]) -> Result<WaveFunction> {
    let d = grid.dims();
    if modes.len() != d {
        return Err(Error::GridMismatch(format!(
            "plane wave needs {d} mode numbers"
        )));
    }
    let norm = 1.0 / grid.volume().sqrt();
    let mut amps = Vec::with_capacity(grid.len());
    let mut q = vec![0.0; d];
    for p in 0..grid.len() {
        grid.node_coords(p, &mut q);
        let mut phase = 0.0;
        for i in 0..d {
            let k = 2.0 * std::f64::consts::PI * modes[i] as f64 / grid.axis(i).length();
            phase += k * q[i];
        }
        amps.push(Complex64::from_polar(norm, phase));
    }
    WaveFunction::from_amplitudes(grid.clone(), 1, 0.0, amps)
}

/// Linear combination sum_j c_j psi_j. The result is NOT renormalized; call
/// [`WaveFunction::normalized`] when a unit state is wanted.
pub fn superpose(terms: &[(Complex64, &WaveFunction)]) -> Result<WaveFunction> {
    let (_, first) = terms
        .first()
        .ok_or_else(|| Error::Scenario("superposition of zero terms".into()))?;
    for (_, t) in &terms[1..] {
        first.same_shape(t)?;
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); first.amplitudes().len()];
    for (c, t) in terms {
        for (a, b) in amps.iter_mut().zip(t.amplitudes()) {
            *a += c * b;
        }
    }
    WaveFunction::from_amplitudes(first.grid().clone(), first.spin_dim(), first.time(), amps)
}

/// Tensor product of a spin vector with a scalar spatial state,
/// `sum_s coeffs[s] |s> (x) spatial`. Normalized.
pub fn spinor_product(coeffs: &[Complex64], spatial: &WaveFunction) -> Result<WaveFunction> {
    if spatial.spin_dim() != 1 {
        return Err(Error::SpinorNotSupported {
            spin_dim: spatial.spin_dim(),
        });
    }
    let s = coeffs.len();
    if s < 2 {
        return Err(Error::SpinDimMismatch(
            "spinor product needs at least two spin components".into(),
        ));
    }
    let mut amps = Vec::with_capacity(spatial.grid().len() * s);
    for a in spatial.amplitudes() {
        for c in coeffs {
            amps.push(c * a);
        }
    }
    WaveFunction::from_amplitudes(spatial.grid().clone(), s, spatial.time(), amps)?.normalized()
}

/// Tensor product of two scalar states on the product grid, axes of `a`
/// first. Carries `a`'s clock. Not renormalized: the product of two unit
/// states is a unit state.
pub fn tensor_product(a: &WaveFunction, b: &WaveFunction) -> Result<WaveFunction> {
    if a.spin_dim() != 1 || b.spin_dim() != 1 {
        return Err(Error::SpinorNotSupported {
            spin_dim: a.spin_dim().max(b.spin_dim()),
        });
    }
    let extents: Vec<(f64, f64, usize)> = a
        .grid()
        .axes()
        .iter()
        .chain(b.grid().axes())
        .map(|ax| (ax.lo, ax.hi, ax.n))
        .collect();
    let grid = Grid::new(&extents)?;
    let mut amps = Vec::with_capacity(a.grid().len() * b.grid().len());
    for &ai in a.amplitudes() {
        for &bj in b.amplitudes() {
            amps.push(ai * bj);
        }
    }
    WaveFunction::from_amplitudes(grid, 1, a.time(), amps)
}

/// Ground state of the isotropic-frequency harmonic well
/// Vhat = (omega^2/2) sum_i mu_i (x_i - c_i)^2: a product Gaussian with
/// sigma_i^2 = 1/(2 mu_i omega).
pub fn harmonic_ground_state(
    grid: &Grid,
    units: &Units,
    omega: f64,
    center: &[f64],
) -> Result<WaveFunction> {
    units.check_dims(grid)?;
    if !(omega > 0.0) {
        return Err(Error::Config("omega must be positive".into()));
    }
    let sigma: Vec<f64> = (0..grid.dims())
        .map(|i| (1.0 / (2.0 * units.mu(i) * omega)).sqrt())
        .collect();
    let momentum = vec![0.0; grid.dims()];
    gaussian(grid, center, &sigma, &momentum)
}
