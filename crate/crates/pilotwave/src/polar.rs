//! Polar decomposition psi = R e^{iS}, the quantum potential
//! U = -sum_k (1/2 mu_k) (d_k^2 R)/R, the modified Hamilton-Jacobi residual
//! dS/dt + |grad S|^2/(2 mu) + Vhat + U, and the Newtonian (second-order)
//! consistency check.
//!
//! Everything here is diagnostic: the dynamics always runs on `guidance`.
//! The decomposition only exists for scalar wave functions, and the phase S
//! is only defined where the density is meaningfully nonzero, so each field
//! carries a mask (density below 1e-10 of max, plus the corners of any
//! plaquette with nonzero phase winding: no single-valued S exists around a
//! vortex). S is unwrapped by flood fill from the maximum-density point;
//! disconnected off-mask islands are unwrapped independently, so S is
//! defined up to a separate additive constant per island.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::grid::{Grid, Units, WaveFunction};
use crate::spectral;

/// Relative density floor below which the phase is masked.
pub const MASK_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct PolarField {
    grid: Grid,
    r: Vec<f64>,
    s: Vec<f64>,
    mask: Vec<bool>,
    vortex_count: usize,
    time: f64,
}

impl PolarField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// true = phase undefined there (low density or vortex corner).
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn vortex_count(&self) -> usize {
        self.vortex_count
    }

    pub fn time(&self) -> f64 {
        self.time
    }
}

/// Decompose a scalar wave function into R, unwrapped S, and a mask.
pub fn polar_decompose(psi: &WaveFunction) -> Result<PolarField> {
    if psi.spin_dim() != 1 {
        return Err(Error::SpinorNotSupported {
            spin_dim: psi.spin_dim(),
        });
    }
    let grid = psi.grid().clone();
    let len = grid.len();
    let r: Vec<f64> = psi.amplitudes().iter().map(|a| a.norm()).collect();
    let arg: Vec<f64> = psi.amplitudes().iter().map(|a| a.arg()).collect();
    let rho_max = r.iter().map(|x| x * x).fold(0.0f64, f64::max);
    let floor = MASK_FLOOR * rho_max;
    let mut mask: Vec<bool> = r.iter().map(|x| x * x < floor).collect();

    // Nonzero winding around a plaquette means no continuous phase exists
    // there; mask the corners before unwrapping.
    let vortex_count = mask_vortices(&grid, &arg, &mut mask);

    // Flood fill from the density maximum (per connected component).
    let mut s = arg.clone();
    let mut visited = vec![false; len];
    let mut queue = VecDeque::new();
    loop {
        let mut seed = None;
        let mut best = 0.0;
        for p in 0..len {
            if !mask[p] && !visited[p] && r[p] > best {
                best = r[p];
                seed = Some(p);
            }
        }
        let Some(seed) = seed else { break };
        visited[seed] = true;
        queue.push_back(seed);
        let mut idx = vec![0usize; grid.dims()];
        while let Some(p) = queue.pop_front() {
            grid.unflatten(p, &mut idx);
            for axis in 0..grid.dims() {
                let stride = grid.point_stride(axis);
                let j = idx[axis];
                for (ok, q) in [
                    (j > 0, p.wrapping_sub(stride)),
                    (j + 1 < grid.axis(axis).n, p + stride),
                ] {
                    if !ok || visited[q] || mask[q] {
                        continue;
                    }
                    s[q] = arg[q] + TAU * ((s[p] - arg[q]) / TAU).round();
                    visited[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    Ok(PolarField {
        grid,
        r,
        s,
        mask,
        vortex_count,
        time: psi.time(),
    })
}

fn principal(x: f64) -> f64 {
    let mut y = x % TAU;
    if y > PI {
        y -= TAU;
    } else if y <= -PI {
        y += TAU;
    }
    y
}

fn mask_vortices(grid: &Grid, arg: &[f64], mask: &mut [bool]) -> usize {
    let d = grid.dims();
    if d < 2 {
        return 0;
    }
    let mut count = 0;
    let mut idx = vec![0usize; d];
    for a in 0..d {
        for b in (a + 1)..d {
            let sa = grid.point_stride(a);
            let sb = grid.point_stride(b);
            for p in 0..grid.len() {
                grid.unflatten(p, &mut idx);
                if idx[a] + 1 >= grid.axis(a).n || idx[b] + 1 >= grid.axis(b).n {
                    continue;
                }
                let corners = [p, p + sa, p + sa + sb, p + sb];
                if corners.iter().any(|&c| mask[c]) {
                    continue;
                }
                let winding: f64 = (0..4)
                    .map(|i| principal(arg[corners[(i + 1) % 4]] - arg[corners[i]]))
                    .sum();
                if winding.abs() > PI {
                    for &c in &corners {
                        mask[c] = true;
                    }
                    count += 1;
                }
            }
        }
    }
    count
}

/// Mask-aware derivative of a scalar field along one axis: central where
/// both neighbors are live, second-order one-sided at mask or box edges,
/// first-order if only one usable neighbor, zero if isolated. Exact for
/// fields quadratic in the coordinate.
fn masked_derivative(field: &[f64], mask: &[bool], grid: &Grid, axis: usize) -> Vec<f64> {
    let stride = grid.point_stride(axis);
    let n = grid.axis(axis).n;
    let h = grid.axis(axis).spacing();
    let mut out = vec![0.0f64; field.len()];
    let mut idx = vec![0usize; grid.dims()];
    for p in 0..field.len() {
        if mask[p] {
            continue;
        }
        grid.unflatten(p, &mut idx);
        let j = idx[axis];
        let live = |q: usize| -> bool { !mask[q] };
        let left = j > 0 && live(p - stride);
        let right = j + 1 < n && live(p + stride);
        out[p] = if left && right {
            (field[p + stride] - field[p - stride]) / (2.0 * h)
        } else if right && j + 2 < n && live(p + 2 * stride) {
            (-3.0 * field[p] + 4.0 * field[p + stride] - field[p + 2 * stride]) / (2.0 * h)
        } else if left && j >= 2 && live(p - 2 * stride) {
            (3.0 * field[p] - 4.0 * field[p - stride] + field[p - 2 * stride]) / (2.0 * h)
        } else if right {
            (field[p + stride] - field[p]) / h
        } else if left {
            (field[p] - field[p - stride]) / h
        } else {
            0.0
        };
    }
    out
}

/// Gradient of S, one d-vector per point (axis fastest), zero on the mask.
pub fn grad_s(pf: &PolarField) -> Vec<f64> {
    let d = pf.grid.dims();
    let mut out = vec![0.0f64; pf.grid.len() * d];
    for axis in 0..d {
        let ds = masked_derivative(&pf.s, &pf.mask, &pf.grid, axis);
        for p in 0..pf.grid.len() {
            out[p * d + axis] = ds[p];
        }
    }
    out
}

/// Quantum potential U = -sum_k (1/2 mu_k)(d_k^2 R)/R, zero on the mask.
/// The Laplacian is spectral; frozen axes (infinite mu) contribute nothing.
pub fn quantum_potential(pf: &PolarField, units: &Units) -> Result<Vec<f64>> {
    units.check_dims(&pf.grid)?;
    let mut acc = vec![0.0f64; pf.grid.len()];
    for axis in 0..pf.grid.dims() {
        let inv_mu = units.inv_mu(axis);
        if inv_mu == 0.0 {
            continue;
        }
        let d2 = spectral::second_derivative_real(&pf.r, &pf.grid, axis);
        for (a, x) in acc.iter_mut().zip(&d2) {
            *a -= 0.5 * inv_mu * x;
        }
    }
    Ok(acc
        .iter()
        .zip(&pf.r)
        .zip(&pf.mask)
        .map(|((a, r), m)| if *m { 0.0 } else { a / r })
        .collect())
}

/// Residual of the modified Hamilton-Jacobi equation, centered between two
/// snapshots: (S2 - S1)/dt + mean of [|grad S|^2/(2 mu) + Vhat + U].
#[derive(Clone, Debug)]
pub struct HjReport {
    pub residual: Vec<f64>,
    /// Joint mask: true where the residual is undefined.
    pub mask: Vec<bool>,
    pub max_abs: f64,
    pub l2: f64,
}

pub fn hj_residual(
    first: &PolarField,
    second: &PolarField,
    vhat: &[f64],
    units: &Units,
) -> Result<HjReport> {
    if first.grid != second.grid || vhat.len() != first.grid.len() {
        return Err(Error::GridMismatch(
            "HJ residual needs two snapshots and a potential on one grid".into(),
        ));
    }
    let dt = second.time - first.time;
    if !(dt > 0.0) {
        return Err(Error::IncompatibleTimestep(format!(
            "snapshots must be time-ordered, got dt = {dt}"
        )));
    }
    let len = first.grid.len();
    let mask: Vec<bool> = (0..len).map(|p| first.mask[p] || second.mask[p]).collect();

    // The two unwrappings may differ by a global 2 pi multiple; align by
    // majority vote, then flag residual jumps > pi as inconsistencies.
    let mut votes: std::collections::HashMap<i64, usize> = std::collections::HashMap::new();
    for p in 0..len {
        if !mask[p] {
            let m = ((second.s[p] - first.s[p]) / TAU).round() as i64;
            *votes.entry(m).or_insert(0) += 1;
        }
    }
    let checked = votes.values().sum::<usize>();
    if checked == 0 {
        return Err(Error::GridMismatch("no jointly unmasked points".into()));
    }
    let offset = *votes.iter().max_by_key(|(_, c)| **c).unwrap().0 as f64 * TAU;
    let violations = (0..len)
        .filter(|&p| !mask[p] && (second.s[p] - first.s[p] - offset).abs() > PI)
        .count();
    if violations * 1000 > checked {
        return Err(Error::UnwrapInconsistent {
            violations,
            checked,
        });
    }

    let spatial = |pf: &PolarField| -> Result<Vec<f64>> {
        let gs = grad_s(pf);
        let u = quantum_potential(pf, units)?;
        let d = pf.grid.dims();
        Ok((0..len)
            .map(|p| {
                let mut kin = 0.0;
                for i in 0..d {
                    kin += 0.5 * units.inv_mu(i) * gs[p * d + i] * gs[p * d + i];
                }
                kin + vhat[p] + u[p]
            })
            .collect())
    };
    let sp1 = spatial(first)?;
    let sp2 = spatial(second)?;
    let mut residual = vec![0.0f64; len];
    let mut max_abs = 0.0f64;
    let mut l2 = 0.0f64;
    for p in 0..len {
        if mask[p] {
            continue;
        }
        let r = (second.s[p] - offset - first.s[p]) / dt + 0.5 * (sp1[p] + sp2[p]);
        residual[p] = r;
        max_abs = max_abs.max(r.abs());
        l2 += r * r;
    }
    let l2 = (l2 * first.grid.cell_volume()).sqrt();
    Ok(HjReport {
        residual,
        mask,
        max_abs,
        l2,
    })
}

/// The configuration-space force -(1/mu) grad(Vhat + U) on grid nodes,
/// evaluable off-grid by multilinear interpolation. Masked nodes carry
/// zero force.
#[derive(Clone, Debug)]
pub struct ForceField {
    grid: Grid,
    f: Vec<f64>,
    time: f64,
}

pub fn total_force(pf: &PolarField, vhat: &[f64], units: &Units) -> Result<ForceField> {
    if vhat.len() != pf.grid.len() {
        return Err(Error::GridMismatch(
            "potential does not match the polar field's grid".into(),
        ));
    }
    let u = quantum_potential(pf, units)?;
    let total: Vec<f64> = vhat.iter().zip(&u).map(|(v, uu)| v + uu).collect();
    let d = pf.grid.dims();
    let mut f = vec![0.0f64; pf.grid.len() * d];
    for axis in 0..d {
        let dv = masked_derivative(&total, &pf.mask, &pf.grid, axis);
        let inv_mu = units.inv_mu(axis);
        for p in 0..pf.grid.len() {
            f[p * d + axis] = -inv_mu * dv[p];
        }
    }
    Ok(ForceField {
        grid: pf.grid.clone(),
        f,
        time: pf.time,
    })
}

impl ForceField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn force_at_node(&self, point: usize) -> &[f64] {
        let d = self.grid.dims();
        &self.f[point * d..(point + 1) * d]
    }

    pub fn force_at(&self, q: &[f64]) -> Result<Vec<f64>> {
        let d = self.grid.dims();
        for (i, (&x, a)) in q.iter().zip(self.grid.axes()).enumerate() {
            if !(x >= a.lo && x < a.hi) {
                return Err(Error::OutOfBox {
                    axis: i,
                    coordinate: x,
                });
            }
        }
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for i in 0..d {
            let a = self.grid.axis(i);
            let s = (q[i] - a.lo) / a.spacing();
            let j0 = (s.floor() as usize).min(a.n - 1);
            base[i] = j0;
            frac[i] = (s - j0 as f64).clamp(0.0, 1.0);
        }
        let mut out = vec![0.0f64; d];
        for c in 0..(1usize << d) {
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
            for i in 0..d {
                out[i] += w * self.f[p * d + i];
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonianReport {
    pub max_deviation: f64,
    pub mean_deviation: f64,
    pub compared: usize,
}

/// Compare finite-difference acceleration along a recorded trajectory with
/// the force field -(1/mu) grad(Vhat + U) at the recorded times. `points`
/// is flat (one configuration of length `dims` per time); `forces` holds
/// one field per recorded time. Times must be uniformly spaced.
pub fn newtonian_check(
    times: &[f64],
    points: &[f64],
    dims: usize,
    forces: &[ForceField],
) -> Result<NewtonianReport> {
    if times.len() < 3 {
        return Err(Error::Config(
            "Newtonian check needs at least three recorded times".into(),
        ));
    }
    if points.len() != times.len() * dims || forces.len() != times.len() {
        return Err(Error::GridMismatch(
            "trajectory, times, and force fields do not line up".into(),
        ));
    }
    let dt = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs() {
            return Err(Error::IncompatibleTimestep(
                "Newtonian check needs uniformly spaced times".into(),
            ));
        }
    }
    let mut max_dev = 0.0f64;
    let mut sum_dev = 0.0f64;
    let mut compared = 0usize;
    for i in 1..times.len() - 1 {
        let q = &points[i * dims..(i + 1) * dims];
        let force = forces[i].force_at(q)?;
        for k in 0..dims {
            let acc = (points[(i + 1) * dims + k] - 2.0 * points[i * dims + k]
                + points[(i - 1) * dims + k])
                / (dt * dt);
            let dev = (acc - force[k]).abs();
            max_dev = max_dev.max(dev);
            sum_dev += dev;
        }
        compared += 1;
    }
    Ok(NewtonianReport {
        max_deviation: max_dev,
        mean_deviation: sum_dev / (compared * dims) as f64,
        compared,
    })
}

/// Rough deviation-from-classical measure: the rho-weighted mean of |U|
/// over the rho-weighted mean of (|grad S|^2/2mu + |U| + (Vhat - min Vhat)).
/// Ranges over [0, 1]; only ordering claims are meaningful. The
/// normalization is this crate's own convention.
pub fn classicality_metric(pf: &PolarField, vhat: &[f64], units: &Units) -> Result<f64> {
    if vhat.len() != pf.grid.len() {
        return Err(Error::GridMismatch(
            "potential does not match the polar field's grid".into(),
        ));
    }
    let u = quantum_potential(pf, units)?;
    let gs = grad_s(pf);
    let d = pf.grid.dims();
    let vmin = vhat.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for p in 0..pf.grid.len() {
        if pf.mask[p] {
            continue;
        }
        let rho = pf.r[p] * pf.r[p];
        let mut kin = 0.0;
        for i in 0..d {
            kin += 0.5 * units.inv_mu(i) * gs[p * d + i] * gs[p * d + i];
        }
        num += rho * u[p].abs();
        den += rho * (kin + u[p].abs() + (vhat[p] - vmin) + 1e-300);
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}
