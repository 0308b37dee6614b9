//! The guiding equation. The probability current J_i = (1/mu_i) Im(psi* d_i psi)
//! and the velocity field v = J/rho choreograph the particle motion; this
//! module computes both on the grid and evaluates the velocity at arbitrary
//! configurations by interpolation.
//!
//! Nodes of the wave function need a guard: the field uses a soft floor
//! (v = J/rho only where rho >= eps_rho * max(rho), v = J/(rho + floor)
//! below it) and a hard speed cap. Equivariance keeps actual trajectories
//! away from exact nodes, so the guard only matters for numerical strays;
//! both knobs are configurable.
//!
//! For spinor wave functions the numerator and denominator are spinor inner
//! products, giving a single velocity field for both components: the
//! configuration does not carry a spin coordinate.

use crate::error::{Error, Result};
use crate::grid::{density, Grid, Units, WaveFunction};
use crate::spectral;

/// Node regularization: relative density floor and hard speed cap.
#[derive(Clone, Copy, Debug)]
pub struct GuidanceParams {
    pub eps_rho: f64,
    pub v_cap: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        GuidanceParams {
            eps_rho: 1e-12,
            v_cap: f64::INFINITY,
        }
    }
}

impl GuidanceParams {
    /// Cap tied to the trajectory step: 10 box diagonals per dt_traj.
    pub fn for_grid(grid: &Grid, dt_traj: f64) -> GuidanceParams {
        GuidanceParams {
            eps_rho: 1e-12,
            v_cap: 10.0 * grid.box_diagonal() / dt_traj,
        }
    }
}

/// Probability current J (one d-vector per point, axis index fastest) with
/// its matching density. J is exactly zero wherever rho is exactly zero.
#[derive(Clone, Debug)]
pub struct CurrentField {
    grid: Grid,
    j: Vec<f64>,
    rho: Vec<f64>,
    time: f64,
}

impl CurrentField {
    pub fn from_parts(grid: &Grid, j: Vec<f64>, rho: Vec<f64>, time: f64) -> Result<CurrentField> {
        if j.len() != grid.len() * grid.dims() || rho.len() != grid.len() {
            return Err(Error::GridMismatch(
                "current field shapes do not match the grid".into(),
            ));
        }
        if j.iter().chain(rho.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Config("current field must be finite".into()));
        }
        Ok(CurrentField {
            grid: grid.clone(),
            j,
            rho,
            time,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// J at a point, axis-indexed slice of length d.
    pub fn j_at(&self, point: usize) -> &[f64] {
        let d = self.grid.dims();
        &self.j[point * d..(point + 1) * d]
    }

    pub fn j(&self) -> &[f64] {
        &self.j
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn time(&self) -> f64 {
        self.time
    }
}

fn current_impl(psi: &WaveFunction, units: &Units, spectral_mode: bool) -> Result<CurrentField> {
    let grid = psi.grid();
    units.check_dims(grid)?;
    let d = grid.dims();
    let s = psi.spin_dim();
    let rho = density(psi);
    let mut j = vec![0.0f64; grid.len() * d];
    for axis in 0..d {
        let inv_mu = units.inv_mu(axis);
        if inv_mu == 0.0 {
            continue;
        }
        let grad = if spectral_mode {
            spectral::gradient_axis(psi.amplitudes(), grid, s, axis)
        } else {
            spectral::gradient_axis_central(psi.amplitudes(), grid, s, axis)
        };
        for p in 0..grid.len() {
            let mut im = 0.0;
            for r in 0..s {
                let a = psi.amp(p, r);
                im += (a.conj() * grad[p * s + r]).im;
            }
            j[p * d + axis] = inv_mu * im;
        }
    }
    // An exact node carries no current; keep the invariant exact rather
    // than trusting Im() rounding.
    for p in 0..grid.len() {
        if rho[p] == 0.0 {
            for i in 0..d {
                j[p * d + i] = 0.0;
            }
        }
    }
    CurrentField::from_parts(grid, j, rho, psi.time())
}

/// Probability current via spectral differentiation.
pub fn current(psi: &WaveFunction, units: &Units) -> Result<CurrentField> {
    current_impl(psi, units, true)
}

/// Cross-check variant using periodic central differences.
pub fn current_central(psi: &WaveFunction, units: &Units) -> Result<CurrentField> {
    current_impl(psi, units, false)
}

/// The guidance velocity on grid nodes plus everything needed to evaluate
/// it off-grid. Immutable snapshot; safe to share across threads.
#[derive(Clone, Debug)]
pub struct VelocityField {
    grid: Grid,
    v: Vec<f64>,
    j: Vec<f64>,
    rho: Vec<f64>,
    floor: f64,
    params: GuidanceParams,
    time: f64,
}

fn regularized_ratio(j: &[f64], rho: f64, floor: f64, v_cap: f64, out: &mut [f64]) {
    let denom = if rho >= floor { rho } else { rho + floor };
    let mut norm2 = 0.0;
    for (o, &ji) in out.iter_mut().zip(j) {
        let vi = ji / denom;
        *o = vi;
        norm2 += vi * vi;
    }
    let speed = norm2.sqrt();
    if speed > v_cap {
        let scale = v_cap / speed;
        for o in out.iter_mut() {
            *o *= scale;
        }
    }
}

impl VelocityField {
    pub fn from_current(cf: &CurrentField, params: GuidanceParams) -> VelocityField {
        let grid = cf.grid().clone();
        let d = grid.dims();
        let max_rho = cf.rho.iter().cloned().fold(0.0f64, f64::max);
        let floor = params.eps_rho * max_rho;
        let mut v = vec![0.0f64; cf.j.len()];
        for p in 0..grid.len() {
            let (head, tail) = v.split_at_mut(p * d);
            let _ = head;
            regularized_ratio(
                &cf.j[p * d..(p + 1) * d],
                cf.rho[p],
                floor,
                params.v_cap,
                &mut tail[..d],
            );
        }
        VelocityField {
            grid,
            v,
            j: cf.j.clone(),
            rho: cf.rho.clone(),
            floor,
            params,
            time: cf.time,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn v_at_node(&self, point: usize) -> &[f64] {
        let d = self.grid.dims();
        &self.v[point * d..(point + 1) * d]
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn params(&self) -> GuidanceParams {
        self.params
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Velocity at an arbitrary configuration in the box: J and rho are
    /// interpolated separately (multilinear, periodic wrap) and the ratio
    /// regularized exactly as on the nodes.
    pub fn velocity_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.grid.dims();
        debug_assert_eq!(out.len(), d);
        for (i, (&x, a)) in q.iter().zip(self.grid.axes()).enumerate() {
            if !(x >= a.lo && x < a.hi) {
                return Err(Error::OutOfBox {
                    axis: i,
                    coordinate: x,
                });
            }
        }
        // per-axis lower node index and fractional offset
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for i in 0..d {
            let a = self.grid.axis(i);
            let s = (q[i] - a.lo) / a.spacing();
            let j0 = s.floor() as usize;
            // q < hi guarantees j0 <= n-1, but guard against rounding
            base[i] = j0.min(a.n - 1);
            frac[i] = (s - base[i] as f64).clamp(0.0, 1.0);
        }
        let mut j_acc = [0.0f64; 3];
        let mut rho_acc = 0.0f64;
        let corners = 1usize << d;
        for c in 0..corners {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for i in 0..d {
                let a = self.grid.axis(i);
                if c >> i & 1 == 1 {
                    w *= frac[i];
                    idx[i] = (base[i] + 1) % a.n;
                } else {
                    w *= 1.0 - frac[i];
                    idx[i] = base[i];
                }
            }
            if w == 0.0 {
                continue;
            }
            let p = self.grid.flat_index(&idx[..d]);
            rho_acc += w * self.rho[p];
            for i in 0..d {
                j_acc[i] += w * self.j[p * d + i];
            }
        }
        regularized_ratio(&j_acc[..d], rho_acc, self.floor, self.params.v_cap, out);
        Ok(())
    }

    pub fn velocity_at(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.grid.dims()];
        self.velocity_into(q, &mut out)?;
        Ok(out)
    }
}

/// Guidance velocity field v = J/rho with node regularization.
pub fn velocity_field(
    psi: &WaveFunction,
    units: &Units,
    params: GuidanceParams,
) -> Result<VelocityField> {
    Ok(VelocityField::from_current(&current(psi, units)?, params))
}

/// Alternative route: v_i = (1/mu_i) Im(d_i psi / psi), computed by complex
/// division instead of the current/density ratio. Scalar wave functions
/// only; agrees with `velocity_field` wherever rho is above the floor.
pub fn velocity_field_log(
    psi: &WaveFunction,
    units: &Units,
    params: GuidanceParams,
) -> Result<VelocityField> {
    if psi.spin_dim() != 1 {
        return Err(Error::SpinorNotSupported {
            spin_dim: psi.spin_dim(),
        });
    }
    let grid = psi.grid();
    units.check_dims(grid)?;
    let d = grid.dims();
    let rho = density(psi);
    let max_rho = rho.iter().cloned().fold(0.0f64, f64::max);
    let floor = params.eps_rho * max_rho;
    let mut v = vec![0.0f64; grid.len() * d];
    let mut j = vec![0.0f64; grid.len() * d];
    for axis in 0..d {
        let inv_mu = units.inv_mu(axis);
        if inv_mu == 0.0 {
            continue;
        }
        let grad = spectral::gradient_axis(psi.amplitudes(), grid, 1, axis);
        for p in 0..grid.len() {
            let a = psi.amp(p, 0);
            let log_deriv = if rho[p] >= floor {
                grad[p] / a
            } else {
                grad[p] * a.conj() / (rho[p] + floor)
            };
            let vi = inv_mu * log_deriv.im;
            v[p * d + axis] = vi;
            j[p * d + axis] = vi * rho[p];
        }
    }
    for p in 0..grid.len() {
        let (head, tail) = v.split_at_mut(p * d);
        let _ = head;
        let vp = &mut tail[..d];
        let mut norm2 = 0.0;
        for x in vp.iter() {
            norm2 += x * x;
        }
        let speed = norm2.sqrt();
        if speed > params.v_cap {
            let scale = params.v_cap / speed;
            for x in vp.iter_mut() {
                *x *= scale;
            }
        }
    }
    Ok(VelocityField {
        grid: grid.clone(),
        v,
        j,
        rho,
        floor,
        params,
        time: psi.time(),
    })
}

/// Pointwise residual of the discrete continuity equation,
/// (rho_next - rho_prev)/dt + div J_mid. Second order in dt when J_mid is
/// taken from the midpoint wave function.
pub fn continuity_residual(
    grid: &Grid,
    rho_prev: &[f64],
    rho_next: &[f64],
    mid: &CurrentField,
    dt: f64,
) -> Result<Vec<f64>> {
    if rho_prev.len() != grid.len() || rho_next.len() != grid.len() || mid.grid() != grid {
        return Err(Error::GridMismatch(
            "continuity inputs do not share a grid".into(),
        ));
    }
    let d = grid.dims();
    let mut residual: Vec<f64> = rho_prev
        .iter()
        .zip(rho_next)
        .map(|(a, b)| (b - a) / dt)
        .collect();
    for axis in 0..d {
        let comp: Vec<f64> = (0..grid.len()).map(|p| mid.j[p * d + axis]).collect();
        let div = spectral::derivative_real(&comp, grid, axis);
        for (r, dv) in residual.iter_mut().zip(&div) {
            *r += dv;
        }
    }
    Ok(residual)
}
