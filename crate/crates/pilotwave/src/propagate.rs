//! Time evolution: i d(psi)/dt = [-(1/2 mu) Laplacian + Vhat + g B.sigma] psi
//! in naturalized units (Vhat = V/hbar carries 1/time).
//!
//! Two steppers are provided. The split-operator method applies
//! exp(-i Vhat dt/2) . exp(-i k^2 dt / 2 mu) . exp(-i Vhat dt/2) with the
//! kinetic factor exact in Fourier space; it is unconditionally unitary.
//! Crank-Nicolson applies the Cayley form (1 + i H dt/2)^-1 (1 - i H dt/2)
//! with a matrix-free fixed-point solve preconditioned by the exact inverse
//! of the kinetic-plus-mean-potential part. Both are second order in dt and
//! exactly linear.
//!
//! Spinor wave functions (spin_dim = 2) couple to a magnetic field through
//! the Pauli term g B.sigma, applied as an exact pointwise 2x2 unitary and
//! fused into the potential half-steps of the Strang splitting.

use num_complex::Complex64;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::grid::{Grid, Units, WaveFunction};
use crate::spectral;

/// Scalar potential Vhat on the grid, plus an optional Pauli coupling.
#[derive(Clone, Debug)]
pub struct PotentialSpec {
    grid: Grid,
    vhat: Vec<f64>,
    magnetic: Option<Magnetic>,
}

/// Magnetic field B(q) (one 3-vector per grid point) with coupling g >= 0.
#[derive(Clone, Debug)]
pub struct Magnetic {
    pub b: Vec<[f64; 3]>,
    pub g: f64,
}

impl PotentialSpec {
    pub fn free(grid: &Grid) -> PotentialSpec {
        PotentialSpec {
            grid: grid.clone(),
            vhat: vec![0.0; grid.len()],
            magnetic: None,
        }
    }

    pub fn from_fn(grid: &Grid, f: impl FnMut(&[f64]) -> f64) -> Result<PotentialSpec> {
        let vhat = grid.sample_scalar(f);
        PotentialSpec::from_field(grid, vhat)
    }

    pub fn from_field(grid: &Grid, vhat: Vec<f64>) -> Result<PotentialSpec> {
        if vhat.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "potential holds {} values, grid has {} points",
                vhat.len(),
                grid.len()
            )));
        }
        if vhat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("potential must be finite".into()));
        }
        Ok(PotentialSpec {
            grid: grid.clone(),
            vhat,
            magnetic: None,
        })
    }

    pub fn with_magnetic(mut self, b: Vec<[f64; 3]>, g: f64) -> Result<PotentialSpec> {
        if b.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "magnetic field holds {} vectors, grid has {} points",
                b.len(),
                self.grid.len()
            )));
        }
        if !(g >= 0.0) || b.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Config(
                "coupling must be >= 0 and the field finite".into(),
            ));
        }
        self.magnetic = Some(Magnetic { b, g });
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn vhat(&self) -> &[f64] {
        &self.vhat
    }

    pub fn magnetic(&self) -> Option<&Magnetic> {
        self.magnetic.as_ref()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    SplitOperator,
    CrankNicolson,
}

/// A configured stepper. `step` is a pure function: it returns a new
/// snapshot advanced by `dt` and never mutates its input.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub method: Method,
    pub dt: f64,
    pub units: Units,
    cn_tol: f64,
    cn_max_iter: usize,
}

impl Propagator {
    pub fn new(method: Method, dt: f64, units: Units) -> Result<Propagator> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::IncompatibleTimestep(format!(
                "dt must be positive and finite, got {dt}"
            )));
        }
        Ok(Propagator {
            method,
            dt,
            units,
            // Tight default so norm error from the iterative solve stays
            // below 1e-10 even accumulated over 1e3 steps.
            cn_tol: 1e-13,
            cn_max_iter: 500,
        })
    }

    /// Override the Crank-Nicolson solve tolerance (must be <= 1e-10).
    pub fn with_cn_tolerance(mut self, tol: f64) -> Result<Propagator> {
        if !(tol > 0.0 && tol <= 1e-10) {
            return Err(Error::Config(format!(
                "CN solve tolerance must be in (0, 1e-10], got {tol}"
            )));
        }
        self.cn_tol = tol;
        Ok(self)
    }

    /// Same method, units, and solver settings with a different dt.
    pub fn with_dt(&self, dt: f64) -> Result<Propagator> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::IncompatibleTimestep(format!(
                "dt must be positive and finite, got {dt}"
            )));
        }
        let mut p = self.clone();
        p.dt = dt;
        Ok(p)
    }

    /// Accuracy-motivated default step: 0.4 * mu * h^2 * (2/pi^2), minimized
    /// over thawed axes. Infinite if every axis is frozen.
    pub fn default_dt(grid: &Grid, units: &Units) -> f64 {
        let mut dt = f64::INFINITY;
        for i in 0..grid.dims() {
            if units.inv_mu(i) > 0.0 {
                let h = grid.axis(i).spacing();
                dt = dt.min(0.4 * units.mu(i) * h * h * (2.0 / std::f64::consts::PI.powi(2)));
            }
        }
        dt
    }
}

/// Advance by one step of `prop.dt`.
pub fn step(psi: &WaveFunction, pot: &PotentialSpec, prop: &Propagator) -> Result<WaveFunction> {
    if psi.grid() != pot.grid() {
        return Err(Error::GridMismatch(
            "wave function and potential live on different grids".into(),
        ));
    }
    prop.units.check_dims(psi.grid())?;
    if pot.magnetic().is_some() && psi.spin_dim() != 2 {
        return Err(Error::SpinDimMismatch(format!(
            "Pauli coupling needs spin_dim 2, got {}",
            psi.spin_dim()
        )));
    }
    let norm_before = psi.norm_squared().sqrt();
    let mut amps = psi.amplitudes().to_vec();
    match prop.method {
        Method::SplitOperator => split_step(&mut amps, psi, pot, prop),
        Method::CrankNicolson => cn_step(&mut amps, psi, pot, prop)?,
    }
    let out = WaveFunction::from_parts_unchecked(
        psi.grid().clone(),
        psi.spin_dim(),
        psi.time() + prop.dt,
        amps,
    );
    let drift = (out.norm_squared().sqrt() - norm_before).abs();
    if !(drift <= 1e-6) {
        return Err(Error::UnstableStep { drift });
    }
    Ok(out)
}

/// Multiply by the exact phase exp(-i vhat tau) pointwise: the evolution
/// under a pure potential for time tau (the impulsive-coupling limit).
pub fn apply_potential_phase(psi: &WaveFunction, vhat: &[f64], tau: f64) -> Result<WaveFunction> {
    if vhat.len() != psi.grid().len() {
        return Err(Error::GridMismatch(
            "phase field does not match the grid".into(),
        ));
    }
    let s = psi.spin_dim();
    let mut amps = psi.amplitudes().to_vec();
    for (p, &v) in vhat.iter().enumerate() {
        let phase = Complex64::cis(-v * tau);
        for a in &mut amps[p * s..(p + 1) * s] {
            *a *= phase;
        }
    }
    Ok(WaveFunction::from_parts_unchecked(
        psi.grid().clone(),
        s,
        psi.time(),
        amps,
    ))
}

/// Exact pointwise spin rotation exp(-i g dt B.sigma) applied to a spinor
/// state: (a, b) -> cos(theta) (a, b) - i sin(theta) (n.sigma) (a, b) with
/// theta = g dt |B| and n = B/|B|.
pub fn pauli_substep(psi: &WaveFunction, b: &[[f64; 3]], g: f64, dt: f64) -> Result<WaveFunction> {
    if psi.spin_dim() != 2 {
        return Err(Error::SpinDimMismatch(format!(
            "pauli_substep needs spin_dim 2, got {}",
            psi.spin_dim()
        )));
    }
    if b.len() != psi.grid().len() {
        return Err(Error::GridMismatch(
            "magnetic field does not match the grid".into(),
        ));
    }
    let mut amps = psi.amplitudes().to_vec();
    apply_pauli(&mut amps, b, g * dt);
    Ok(WaveFunction::from_parts_unchecked(
        psi.grid().clone(),
        2,
        psi.time(),
        amps,
    ))
}

fn apply_pauli(amps: &mut [Complex64], b: &[[f64; 3]], angle_per_field: f64) {
    for (p, bv) in b.iter().enumerate() {
        let mag = (bv[0] * bv[0] + bv[1] * bv[1] + bv[2] * bv[2]).sqrt();
        if mag == 0.0 {
            continue;
        }
        let theta = angle_per_field * mag;
        let (sin, cos) = theta.sin_cos();
        let nx = bv[0] / mag;
        let ny = bv[1] / mag;
        let nz = bv[2] / mag;
        let up = amps[2 * p];
        let dn = amps[2 * p + 1];
        let isin = Complex64::new(0.0, -sin);
        let off_up = Complex64::new(nx, -ny);
        let off_dn = Complex64::new(nx, ny);
        amps[2 * p] = cos * up + isin * (nz * up + off_up * dn);
        amps[2 * p + 1] = cos * dn + isin * (off_dn * up - nz * dn);
    }
}

fn apply_scalar_phase(amps: &mut [Complex64], vhat: &[f64], spin_dim: usize, tau: f64) {
    for (p, &v) in vhat.iter().enumerate() {
        let phase = Complex64::cis(-v * tau);
        for a in &mut amps[p * spin_dim..(p + 1) * spin_dim] {
            *a *= phase;
        }
    }
}

fn potential_half(amps: &mut [Complex64], psi: &WaveFunction, pot: &PotentialSpec, half_dt: f64) {
    apply_scalar_phase(amps, pot.vhat(), psi.spin_dim(), half_dt);
    if let Some(m) = pot.magnetic() {
        apply_pauli(amps, &m.b, m.g * half_dt);
    }
}

fn kinetic_full(amps: &mut [Complex64], psi: &WaveFunction, prop: &Propagator) {
    let grid = psi.grid();
    for axis in 0..grid.dims() {
        let inv_mu = prop.units.inv_mu(axis);
        if inv_mu == 0.0 {
            continue;
        }
        let ax = grid.axis(axis);
        let symbol: Vec<Complex64> = (0..ax.n)
            .map(|m| {
                let k = spectral::wavenumber(ax, m);
                Complex64::cis(-k * k * prop.dt * 0.5 * inv_mu)
            })
            .collect();
        spectral::fft_axis(amps, grid, psi.spin_dim(), axis, FftDirection::Forward);
        spectral::apply_mode_symbol(amps, grid, psi.spin_dim(), axis, &symbol);
        spectral::fft_axis(amps, grid, psi.spin_dim(), axis, FftDirection::Inverse);
    }
}

fn split_step(amps: &mut [Complex64], psi: &WaveFunction, pot: &PotentialSpec, prop: &Propagator) {
    potential_half(amps, psi, pot, prop.dt * 0.5);
    kinetic_full(amps, psi, prop);
    potential_half(amps, psi, pot, prop.dt * 0.5);
}

/// Apply H = T + Vhat (+ g B.sigma) to `x`.
fn apply_h(
    x: &[Complex64],
    psi: &WaveFunction,
    pot: &PotentialSpec,
    prop: &Propagator,
) -> Vec<Complex64> {
    let grid = psi.grid();
    let s = psi.spin_dim();
    // kinetic part, one axis at a time
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    for axis in 0..grid.dims() {
        let inv_mu = prop.units.inv_mu(axis);
        if inv_mu == 0.0 {
            continue;
        }
        let ax = grid.axis(axis);
        let symbol: Vec<Complex64> = (0..ax.n)
            .map(|m| {
                let k = spectral::wavenumber(ax, m);
                Complex64::new(k * k * 0.5 * inv_mu, 0.0)
            })
            .collect();
        let mut data = x.to_vec();
        spectral::fft_axis(&mut data, grid, s, axis, FftDirection::Forward);
        spectral::apply_mode_symbol(&mut data, grid, s, axis, &symbol);
        spectral::fft_axis(&mut data, grid, s, axis, FftDirection::Inverse);
        for (o, d) in out.iter_mut().zip(&data) {
            *o += d;
        }
    }
    for (p, &v) in pot.vhat().iter().enumerate() {
        for r in 0..s {
            out[p * s + r] += v * x[p * s + r];
        }
    }
    if let Some(m) = pot.magnetic() {
        for (p, bv) in m.b.iter().enumerate() {
            let up = x[2 * p];
            let dn = x[2 * p + 1];
            let bx = Complex64::new(bv[0], 0.0);
            let by = Complex64::new(0.0, bv[1]);
            out[2 * p] += m.g * (bv[2] * up + (bx - by) * dn);
            out[2 * p + 1] += m.g * ((bx + by) * up - bv[2] * dn);
        }
    }
    out
}

/// Pointwise multiply by (Vhat - vbar) + g B.sigma.
fn apply_v_centered(
    x: &[Complex64],
    pot: &PotentialSpec,
    spin_dim: usize,
    vbar: f64,
) -> Vec<Complex64> {
    let s = spin_dim;
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    for (p, &v) in pot.vhat().iter().enumerate() {
        for r in 0..s {
            out[p * s + r] = (v - vbar) * x[p * s + r];
        }
    }
    if let Some(m) = pot.magnetic() {
        for (p, bv) in m.b.iter().enumerate() {
            let up = x[2 * p];
            let dn = x[2 * p + 1];
            let bx = Complex64::new(bv[0], 0.0);
            let by = Complex64::new(0.0, bv[1]);
            out[2 * p] += m.g * (bv[2] * up + (bx - by) * dn);
            out[2 * p + 1] += m.g * ((bx + by) * up - bv[2] * dn);
        }
    }
    out
}

fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn cn_step(
    amps: &mut [Complex64],
    psi: &WaveFunction,
    pot: &PotentialSpec,
    prop: &Propagator,
) -> Result<()> {
    let grid = psi.grid();
    let s = psi.spin_dim();
    let kappa = 0.5 * prop.dt;
    let vbar = pot.vhat().iter().sum::<f64>() / grid.len() as f64;

    // b = (1 - i kappa H) psi
    let hpsi = apply_h(amps, psi, pot, prop);
    let ik = Complex64::new(0.0, kappa);
    let b: Vec<Complex64> = amps
        .iter()
        .zip(&hpsi)
        .map(|(a, h)| a - ik * h)
        .collect();
    let b_norm = norm2(&b);

    // Preconditioner M = 1 + i kappa (T + vbar), inverted exactly in
    // Fourier space. kfield holds the kinetic symbol per mode point.
    let mut kfield = vec![0.0f64; grid.len()];
    for axis in 0..grid.dims() {
        let inv_mu = prop.units.inv_mu(axis);
        if inv_mu == 0.0 {
            continue;
        }
        let ax = grid.axis(axis);
        let stride = grid.point_stride(axis);
        for (p, kf) in kfield.iter_mut().enumerate() {
            let m = (p / stride) % ax.n;
            let k = spectral::wavenumber(ax, m);
            *kf += 0.5 * k * k * inv_mu;
        }
    }
    let inv_m: Vec<Complex64> = kfield
        .iter()
        .map(|&kv| Complex64::new(1.0, 0.0) / Complex64::new(1.0, kappa * (kv + vbar)))
        .collect();
    let apply_minv = |data: &mut Vec<Complex64>| {
        for axis in 0..grid.dims() {
            spectral::fft_axis(data, grid, s, axis, FftDirection::Forward);
        }
        for (p, im) in inv_m.iter().enumerate() {
            for r in 0..s {
                data[p * s + r] *= im;
            }
        }
        for axis in 0..grid.dims() {
            spectral::fft_axis(data, grid, s, axis, FftDirection::Inverse);
        }
    };

    // Fixed point x <- M^-1 (b - i kappa (V - vbar) x). The residual of the
    // new iterate is exactly i kappa (V - vbar)(x_old - x_new).
    let mut x = b.clone();
    apply_minv(&mut x);
    let mut iterations = 0;
    loop {
        let vx = apply_v_centered(&x, pot, s, vbar);
        let mut x_next: Vec<Complex64> = b.iter().zip(&vx).map(|(bb, v)| bb - ik * v).collect();
        apply_minv(&mut x_next);
        let diff: Vec<Complex64> = x.iter().zip(&x_next).map(|(a, c)| a - c).collect();
        let vdiff = apply_v_centered(&diff, pot, s, vbar);
        let residual = kappa * norm2(&vdiff) / b_norm;
        x = x_next;
        iterations += 1;
        if residual <= prop.cn_tol {
            break;
        }
        if iterations >= prop.cn_max_iter {
            return Err(Error::SolveDiverged {
                residual,
                iterations,
            });
        }
    }
    amps.copy_from_slice(&x);
    Ok(())
}

/// Apply `step` n times. Equivalent to `evolve_observed` with no observer.
pub fn evolve(
    psi: &WaveFunction,
    pot: &PotentialSpec,
    prop: &Propagator,
    n_steps: usize,
) -> Result<WaveFunction> {
    evolve_observed(psi, pot, prop, n_steps, usize::MAX, |_, _| {})
}

/// Apply `step` n times, invoking the observer at step 0 and after every
/// step whose index is a multiple of `stride` (n = 100, stride = 10 gives
/// exactly 11 snapshots including t = 0).
pub fn evolve_observed(
    psi: &WaveFunction,
    pot: &PotentialSpec,
    prop: &Propagator,
    n_steps: usize,
    stride: usize,
    mut observer: impl FnMut(usize, &WaveFunction),
) -> Result<WaveFunction> {
    let stride = stride.max(1);
    observer(0, psi);
    let mut current = psi.clone();
    for i in 1..=n_steps {
        current = step(&current, pot, prop)?;
        if i % stride == 0 {
            observer(i, &current);
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{density, inner_product, sample_density, Grid, Units};
    use crate::packets;
    use approx::assert_relative_eq;

    fn grid_1d() -> Grid {
        Grid::new(&[(-10.0, 10.0, 512)]).unwrap()
    }

    fn units_1d() -> Units {
        Units::uniform(1.0, 1).unwrap()
    }

    #[test]
    fn plane_wave_acquires_the_dispersion_phase() {
        let g = grid_1d();
        let psi = packets::plane_wave(&g, &[5]).unwrap();
        let k = 2.0 * std::f64::consts::PI * 5.0 / 20.0;
        let dt = 1e-3;
        let prop = Propagator::new(Method::SplitOperator, dt, units_1d()).unwrap();
        let pot = PotentialSpec::free(&g);
        let out = step(&psi, &pot, &prop).unwrap();
        let expected_phase = Complex64::cis(-k * k * dt / 2.0);
        for (a, b) in psi.amplitudes().iter().zip(out.amplitudes()) {
            assert!((a * expected_phase - b).norm() < 1e-12);
        }
        let rho0 = density(&psi);
        let rho1 = density(&out);
        for (r0, r1) in rho0.iter().zip(&rho1) {
            assert_relative_eq!(r0, r1, epsilon = 1e-12);
        }
    }

    #[test]
    fn harmonic_ground_state_density_is_stationary() {
        let g = grid_1d();
        let units = units_1d();
        let omega = 1.0;
        let psi = packets::harmonic_ground_state(&g, &units, omega, &[0.0]).unwrap();
        let pot = PotentialSpec::from_fn(&g, |q| 0.5 * omega * omega * q[0] * q[0]).unwrap();
        let dt = Propagator::default_dt(&g, &units);
        let prop = Propagator::new(Method::SplitOperator, dt, units).unwrap();
        let rho0 = density(&psi);
        let out = evolve(&psi, &pot, &prop, 1000).unwrap();
        let rho1 = density(&out);
        let max_drift = rho0
            .iter()
            .zip(&rho1)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_drift < 1e-8, "density drift {max_drift}");
    }

    /// Oracle: free-packet spreading sigma(t) = sigma0 sqrt(1 + (t/(2 mu sigma0^2))^2),
    /// derived from the closed-form Gaussian evolution.
    #[test]
    fn free_gaussian_width_doubles_on_schedule() {
        let g = Grid::new(&[(-16.0, 16.0, 512)]).unwrap();
        let units = units_1d();
        let psi = packets::gaussian(&g, &[0.0], &[1.0], &[0.0]).unwrap();
        let pot = PotentialSpec::free(&g);
        let dt = 1e-3;
        let prop = Propagator::new(Method::SplitOperator, dt, units).unwrap();
        let t = 2.0;
        let out = evolve(&psi, &pot, &prop, (t / dt).round() as usize).unwrap();
        let rho = density(&out);
        let h = g.axis(0).spacing();
        let var: f64 = rho
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let x = g.axis(0).node(j);
                x * x * r * h
            })
            .sum();
        let sigma_t = (1.0f64 + (t / 2.0) * (t / 2.0)).sqrt();
        assert_relative_eq!(var.sqrt(), sigma_t, max_relative = 0.01);
        assert_relative_eq!(var.sqrt(), 2.0f64.sqrt(), max_relative = 0.01);
    }

    #[test]
    fn both_methods_preserve_norm_over_many_steps() {
        let g = Grid::new(&[(-10.0, 10.0, 256)]).unwrap();
        let units = units_1d();
        let psi = packets::gaussian(&g, &[1.0], &[0.9], &[1.0]).unwrap();
        let pot = PotentialSpec::from_fn(&g, |q| 0.5 * q[0] * q[0]).unwrap();
        for method in [Method::SplitOperator, Method::CrankNicolson] {
            let prop = Propagator::new(method, 5e-4, units.clone()).unwrap();
            let out = evolve(&psi, &pot, &prop, 1000).unwrap();
            let drift = (inner_product(&out, &out).unwrap().re - 1.0).abs();
            assert!(drift < 1e-10, "{method:?} norm drift {drift}");
        }
    }

    #[test]
    fn time_reversal_by_conjugation() {
        let g = Grid::new(&[(-10.0, 10.0, 256)]).unwrap();
        let units = units_1d();
        let psi = packets::gaussian(&g, &[0.5], &[0.8], &[2.0]).unwrap();
        let pot = PotentialSpec::from_fn(&g, |q| (q[0] * 0.7).cos()).unwrap();
        let conj = |w: &WaveFunction| {
            WaveFunction::from_amplitudes(
                w.grid().clone(),
                w.spin_dim(),
                w.time(),
                w.amplitudes().iter().map(|a| a.conj()).collect(),
            )
            .unwrap()
        };
        for method in [Method::SplitOperator, Method::CrankNicolson] {
            let prop = Propagator::new(method, 1e-3, units.clone()).unwrap();
            let forward = evolve(&psi, &pot, &prop, 5).unwrap();
            let back = evolve(&conj(&forward), &pot, &prop, 5).unwrap();
            let recovered = conj(&back);
            let err = psi
                .amplitudes()
                .iter()
                .zip(recovered.amplitudes())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-8, "{method:?} reversal error {err}");
        }
    }

    #[test]
    fn steppers_are_linear_maps() {
        let g = Grid::new(&[(-10.0, 10.0, 256)]).unwrap();
        let units = units_1d();
        let psi = packets::gaussian(&g, &[0.0], &[1.0], &[1.0]).unwrap();
        let phi = packets::gaussian(&g, &[-1.0], &[0.7], &[-2.0]).unwrap();
        let pot = PotentialSpec::from_fn(&g, |q| 0.3 * q[0] * q[0]).unwrap();
        let a = Complex64::new(0.6, 0.2);
        let b = Complex64::new(-0.3, 0.5);
        let combo = packets::superpose(&[(a, &psi), (b, &phi)]).unwrap();
        for method in [Method::SplitOperator, Method::CrankNicolson] {
            let prop = Propagator::new(method, 1e-3, units.clone()).unwrap();
            let lhs = step(&combo, &pot, &prop);
            // the combo is not normalized; step only checks drift, which is
            // scale-invariant in relative terms, so feed it through directly
            let lhs = lhs.unwrap();
            let s_psi = step(&psi, &pot, &prop).unwrap();
            let s_phi = step(&phi, &pot, &prop).unwrap();
            let rhs = packets::superpose(&[(a, &s_psi), (b, &s_phi)]).unwrap();
            let err = lhs
                .amplitudes()
                .iter()
                .zip(rhs.amplitudes())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-10, "{method:?} linearity defect {err}");
        }
    }

    /// Richardson-style self-convergence: halving dt must shrink the
    /// solution difference by about 2^2 for both second-order schemes.
    #[test]
    fn second_order_in_dt() {
        let g = Grid::new(&[(-10.0, 10.0, 256)]).unwrap();
        let units = units_1d();
        let psi = packets::gaussian(&g, &[1.5], &[0.8], &[0.0]).unwrap();
        let pot = PotentialSpec::from_fn(&g, |q| 0.5 * q[0] * q[0]).unwrap();
        let t_final = 0.4;
        for method in [Method::SplitOperator, Method::CrankNicolson] {
            let mut sols = Vec::new();
            for dt in [4e-3, 2e-3, 1e-3] {
                let prop = Propagator::new(method, dt, units.clone()).unwrap();
                let n = (t_final / dt).round() as usize;
                sols.push(evolve(&psi, &pot, &prop, n).unwrap());
            }
            let err01: f64 = sols[0]
                .amplitudes()
                .iter()
                .zip(sols[1].amplitudes())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let err12: f64 = sols[1]
                .amplitudes()
                .iter()
                .zip(sols[2].amplitudes())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let order = (err01 / err12).log2();
            assert!(
                order > 1.8 && order < 2.2,
                "{method:?} self-convergence order {order}"
            );
        }
    }

    #[test]
    fn uniform_bz_rotates_spinor_phase_only() {
        let g = Grid::new(&[(-10.0, 10.0, 128)]).unwrap();
        let phi = packets::gaussian(&g, &[0.0], &[1.0], &[0.0]).unwrap();
        let up = packets::spinor_product(
            &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            &phi,
        )
        .unwrap();
        let bz = 2.0;
        let b = vec![[0.0, 0.0, bz]; g.len()];
        let g_coupling = 0.7;
        let dt = 0.05;
        let out = pauli_substep(&up, &b, g_coupling, dt).unwrap();
        let expect = Complex64::cis(-g_coupling * bz * dt);
        for p in 0..g.len() {
            assert!((out.amp(p, 0) - expect * up.amp(p, 0)).norm() < 1e-12);
            assert!(out.amp(p, 1).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_field_is_identity() {
        let g = Grid::new(&[(-10.0, 10.0, 128)]).unwrap();
        let phi = packets::gaussian(&g, &[0.0], &[1.0], &[0.0]).unwrap();
        let c = Complex64::new(0.6, 0.0);
        let d = Complex64::new(0.0, 0.8);
        let psi = packets::spinor_product(&[c, d], &phi).unwrap();
        let b = vec![[0.0, 0.0, 0.0]; g.len()];
        let out = pauli_substep(&psi, &b, 1.0, 0.1).unwrap();
        for (a, x) in psi.amplitudes().iter().zip(out.amplitudes()) {
            assert_eq!(a, x);
        }
    }

    #[test]
    fn transverse_field_rabi_half_period_flips_spin() {
        let g = Grid::new(&[(-10.0, 10.0, 128)]).unwrap();
        let phi = packets::gaussian(&g, &[0.0], &[1.0], &[0.0]).unwrap();
        let up = packets::spinor_product(
            &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            &phi,
        )
        .unwrap();
        let bx = 1.0;
        let b = vec![[bx, 0.0, 0.0]; g.len()];
        // g dt Bx = pi/2 rotates |up> to -i |down>
        let out = pauli_substep(&up, &b, std::f64::consts::FRAC_PI_2, 1.0).unwrap();
        let up_mass: f64 = (0..g.len()).map(|p| out.amp(p, 0).norm_sqr()).sum();
        assert!(up_mass < 1e-24, "up probability should vanish, got {up_mass}");
        for p in 0..g.len() {
            let expect = Complex64::new(0.0, -1.0) * up.amp(p, 0);
            assert!((out.amp(p, 1) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn evolve_zero_steps_is_identity_and_observer_counts() {
        let g = Grid::new(&[(-10.0, 10.0, 128)]).unwrap();
        let psi = packets::gaussian(&g, &[0.0], &[1.0], &[0.0]).unwrap();
        let pot = PotentialSpec::free(&g);
        let prop = Propagator::new(Method::SplitOperator, 1e-3, units_1d()).unwrap();
        let out = evolve(&psi, &pot, &prop, 0).unwrap();
        assert_eq!(psi.amplitudes(), out.amplitudes());

        let mut snaps = Vec::new();
        evolve_observed(&psi, &pot, &prop, 100, 10, |i, w| snaps.push((i, w.time())))
            .unwrap();
        assert_eq!(snaps.len(), 11);
        assert_eq!(snaps[0].0, 0);
        assert_eq!(snaps[10].0, 100);
    }

    #[test]
    fn frozen_axis_does_not_move() {
        let g = Grid::new(&[(-8.0, 8.0, 64), (-8.0, 8.0, 64)]).unwrap();
        let units = Units::per_axis(vec![f64::INFINITY, 1.0]).unwrap();
        let psi = packets::gaussian(&g, &[1.0, 0.0], &[0.7, 0.7], &[0.0, 0.0]).unwrap();
        let pot = PotentialSpec::free(&g);
        let prop = Propagator::new(Method::SplitOperator, 1e-2, units).unwrap();
        let out = evolve(&psi, &pot, &prop, 50).unwrap();
        // x-marginal unchanged; y-marginal spreads
        let rho0 = density(&psi);
        let rho1 = density(&out);
        let mx0 = crate::statistics::marginal(&g, &rho0, 0);
        let mx1 = crate::statistics::marginal(&g, &rho1, 0);
        for (a, b) in mx0.iter().zip(&mx1) {
            assert!((a - b).abs() < 1e-12);
        }
        let my0 = crate::statistics::marginal(&g, &rho0, 1);
        let my1 = crate::statistics::marginal(&g, &rho1, 1);
        let change: f64 = my0.iter().zip(&my1).map(|(a, b)| (a - b).abs()).sum();
        assert!(change > 1e-3, "thawed axis should evolve");
    }

    #[test]
    fn cn_rejects_loose_tolerance_and_diverging_solves_error_out() {
        let g = Grid::new(&[(-10.0, 10.0, 128)]).unwrap();
        let units = units_1d();
        let prop = Propagator::new(Method::CrankNicolson, 1e-3, units.clone()).unwrap();
        assert!(prop.clone().with_cn_tolerance(1e-9).is_err());
        assert!(prop.with_cn_tolerance(1e-12).is_ok());

        // A potential so stiff at this dt that the fixed point cannot
        // contract: expect SolveDiverged, not a wrong answer.
        let psi = packets::gaussian(&g, &[0.0], &[1.0], &[0.0]).unwrap();
        let pot = PotentialSpec::from_fn(&g, |q| 5e4 * q[0] * q[0]).unwrap();
        let prop = Propagator::new(Method::CrankNicolson, 0.5, units).unwrap();
        match step(&psi, &pot, &prop) {
            Err(Error::SolveDiverged { .. }) => {}
            other => panic!("expected SolveDiverged, got {other:?}"),
        }
    }

    #[test]
    fn equivariance_smoke_sampling_after_evolution() {
        // Advecting is covered in `trajectory`; here just confirm the evolved
        // density is a valid sampling target (norm within 1e-6).
        let g = Grid::new(&[(-16.0, 16.0, 512)]).unwrap();
        let psi = packets::gaussian(&g, &[0.0], &[1.0], &[0.0]).unwrap();
        let pot = PotentialSpec::free(&g);
        let prop = Propagator::new(Method::SplitOperator, 1e-3, units_1d()).unwrap();
        let out = evolve(&psi, &pot, &prop, 500).unwrap();
        let ens = sample_density(&out, 100, 3).unwrap();
        assert_eq!(ens.len(), 100);
    }
}
