//! Rectangular periodic grids, wave functions on them, and density sampling.
//!
//! Configuration space is discretized on a d-dimensional box with power-of-two
//! point counts per axis (the spectral propagator requires it). The topology is
//! periodic; scenario designers keep wave-packet support away from the box
//! edges. All quantities are kept in naturalized units: hbar = 1 and particle
//! masses enter as mu = m/hbar with units of time/length^2.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hard cap on total grid points unless overridden via [`Grid::with_budget`].
pub const DEFAULT_POINT_BUDGET: usize = 1 << 24;

/// One spatial axis of the box: nodes at `lo + j*h` for `j in 0..n`, `hi` excluded
/// (it is identified with `lo` by periodicity).
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn node(&self, j: usize) -> f64 {
        self.lo + j as f64 * self.spacing()
    }
}

/// A d-dimensional rectangular grid, d in {1, 2, 3}.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    len: usize,
}

impl Grid {
    pub fn new(extents: &[(f64, f64, usize)]) -> Result<Grid> {
        Grid::with_budget(extents, DEFAULT_POINT_BUDGET)
    }

    pub fn with_budget(extents: &[(f64, f64, usize)], budget: usize) -> Result<Grid> {
        if extents.is_empty() || extents.len() > 3 {
            return Err(Error::InvalidExtent(format!(
                "dimension must be 1..=3, got {}",
                extents.len()
            )));
        }
        let mut axes = Vec::with_capacity(extents.len());
        let mut len: usize = 1;
        for &(lo, hi, n) in extents {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::InvalidExtent(format!(
                    "bounds must satisfy lo < hi, got [{lo}, {hi}]"
                )));
            }
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::InvalidExtent(format!(
                    "point count must be a power of two >= 8, got {n}"
                )));
            }
            len = len
                .checked_mul(n)
                .ok_or_else(|| Error::InvalidExtent("point count overflow".into()))?;
            axes.push(Axis { lo, hi, n });
        }
        if len > budget {
            return Err(Error::BudgetExceeded {
                points: len,
                budget,
            });
        }
        Ok(Grid { axes, len })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(Axis::length).product()
    }

    pub fn box_diagonal(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| a.length() * a.length())
            .sum::<f64>()
            .sqrt()
    }

    /// Number of points by which the flat index advances when axis `i`'s
    /// node index advances by one (row-major layout, axis 0 slowest).
    pub fn point_stride(&self, i: usize) -> usize {
        self.axes[i + 1..].iter().map(|a| a.n).product()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims());
        let mut flat = 0;
        for (a, &j) in self.axes.iter().zip(idx) {
            debug_assert!(j < a.n);
            flat = flat * a.n + j;
        }
        flat
    }

    pub fn unflatten(&self, flat: usize, idx: &mut [usize]) {
        let mut rem = flat;
        for (i, a) in self.axes.iter().enumerate().rev() {
            idx[i] = rem % a.n;
            rem /= a.n;
        }
    }

    /// Coordinates of the node with the given flat index.
    pub fn node_coords(&self, flat: usize, q: &mut [f64]) {
        let mut rem = flat;
        for (i, a) in self.axes.iter().enumerate().rev() {
            q[i] = a.node(rem % a.n);
            rem /= a.n;
        }
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dims()
            && self
                .axes
                .iter()
                .zip(q)
                .all(|(a, &x)| x >= a.lo && x < a.hi)
    }

    /// Evaluate `f` at every node and collect into a flat real field.
    pub fn sample_scalar(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut q = vec![0.0; self.dims()];
        (0..self.len)
            .map(|p| {
                self.node_coords(p, &mut q);
                f(&q)
            })
            .collect()
    }
}

/// Naturalized masses per axis. An infinite mass freezes that axis: its
/// kinetic term and guidance velocity vanish identically.
#[derive(Clone, Debug, PartialEq)]
pub struct Units {
    mu: Vec<f64>,
}

impl Units {
    pub fn uniform(mu: f64, dims: usize) -> Result<Units> {
        Units::per_axis(vec![mu; dims])
    }

    pub fn per_axis(mu: Vec<f64>) -> Result<Units> {
        if mu.is_empty() || mu.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::Config(format!(
                "masses must be positive, got {mu:?}"
            )));
        }
        Ok(Units { mu })
    }

    pub fn dims(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self, axis: usize) -> f64 {
        self.mu[axis]
    }

    /// 1/mu with the infinite-mass convention 1/inf = 0.
    pub fn inv_mu(&self, axis: usize) -> f64 {
        let m = self.mu[axis];
        if m.is_infinite() {
            0.0
        } else {
            1.0 / m
        }
    }

    pub fn check_dims(&self, grid: &Grid) -> Result<()> {
        if self.dims() != grid.dims() {
            return Err(Error::GridMismatch(format!(
                "units cover {} axes, grid has {}",
                self.dims(),
                grid.dims()
            )));
        }
        Ok(())
    }
}

/// A wave function sampled on a grid. Amplitudes are stored flat with the
/// spin index varying fastest, so spinor contractions are local per point.
/// Values are immutable snapshots once constructed.
#[derive(Clone, Debug)]
pub struct WaveFunction {
    grid: Grid,
    spin_dim: usize,
    time: f64,
    amps: Vec<Complex64>,
}

impl WaveFunction {
    pub fn from_amplitudes(
        grid: Grid,
        spin_dim: usize,
        time: f64,
        amps: Vec<Complex64>,
    ) -> Result<WaveFunction> {
        if spin_dim == 0 {
            return Err(Error::SpinDimMismatch("spin_dim must be >= 1".into()));
        }
        if amps.len() != grid.len() * spin_dim {
            return Err(Error::GridMismatch(format!(
                "amplitude buffer holds {} values, grid x spin needs {}",
                amps.len(),
                grid.len() * spin_dim
            )));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Scenario("non-finite amplitude".into()));
        }
        Ok(WaveFunction {
            grid,
            spin_dim,
            time,
            amps,
        })
    }

    pub(crate) fn from_parts_unchecked(
        grid: Grid,
        spin_dim: usize,
        time: f64,
        amps: Vec<Complex64>,
    ) -> WaveFunction {
        WaveFunction {
            grid,
            spin_dim,
            time,
            amps,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amp(&self, point: usize, spin: usize) -> Complex64 {
        self.amps[point * self.spin_dim + spin]
    }

    /// Squared L2 norm \<psi,psi\> (cell-volume weighted).
    pub fn norm_squared(&self) -> f64 {
        let cell = self.grid.cell_volume();
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * cell
    }

    pub fn normalized(&self) -> Result<WaveFunction> {
        let n2 = self.norm_squared();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::NotNormalized { defect: f64::NAN });
        }
        let scale = 1.0 / n2.sqrt();
        let amps = self.amps.iter().map(|a| a * scale).collect();
        Ok(WaveFunction {
            grid: self.grid.clone(),
            spin_dim: self.spin_dim,
            time: self.time,
            amps,
        })
    }

    pub fn same_shape(&self, other: &WaveFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("grids differ".into()));
        }
        if self.spin_dim != other.spin_dim {
            return Err(Error::SpinDimMismatch(format!(
                "{} vs {}",
                self.spin_dim, other.spin_dim
            )));
        }
        Ok(())
    }
}

/// Sesquilinear inner product, conjugate-linear in the first argument.
pub fn inner_product(a: &WaveFunction, b: &WaveFunction) -> Result<Complex64> {
    a.same_shape(b)?;
    let cell = a.grid().cell_volume();
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
        acc += x.conj() * y;
    }
    Ok(acc * cell)
}

/// Position-space density rho(q) = sum over spin components of |psi|^2.
pub fn density(psi: &WaveFunction) -> Vec<f64> {
    let s = psi.spin_dim();
    let n = psi.grid().len();
    let amps = psi.amplitudes();
    let mut rho = vec![0.0; n];
    for (p, r) in rho.iter_mut().enumerate() {
        let base = p * s;
        *r = amps[base..base + s].iter().map(|a| a.norm_sqr()).sum();
    }
    rho
}

/// Integrate a real field over the grid (midpoint rule, exact for the
/// periodic trigonometric interpolant).
pub fn integrate(grid: &Grid, field: &[f64]) -> f64 {
    debug_assert_eq!(field.len(), grid.len());
    field.iter().sum::<f64>() * grid.cell_volume()
}

/// An ensemble of configurations, stored flat (`dims` coordinates per member).
#[derive(Clone, Debug)]
pub struct Ensemble {
    dims: usize,
    positions: Vec<f64>,
    rng_seed: u64,
}

impl Ensemble {
    pub fn from_positions(dims: usize, positions: Vec<f64>, rng_seed: u64) -> Result<Ensemble> {
        if dims == 0 || positions.is_empty() || positions.len() % dims != 0 {
            return Err(Error::Scenario(format!(
                "ensemble needs a positive multiple of {dims} coordinates"
            )));
        }
        Ok(Ensemble {
            dims,
            positions,
            rng_seed,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn member(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dims..(i + 1) * self.dims]
    }

    /// Flat coordinate storage, `dims` values per member.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dims)
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }
}

/// Draw `n` i.i.d. configurations from |psi|^2 by inverse-CDF lookup on the
/// flattened cell-probability vector, with positions jittered uniformly
/// within their cell. Cells are centered on the nodes (midpoint rule, so the
/// sampled law matches smooth densities to second order in h); jitter that
/// falls below the box wraps periodically to the top. Deterministic and
/// bit-exact for a given seed.
pub fn sample_density(psi: &WaveFunction, n: usize, seed: u64) -> Result<Ensemble> {
    let defect = (psi.norm_squared() - 1.0).abs();
    if !(defect <= 1e-6) {
        return Err(Error::NotNormalized { defect });
    }
    if n == 0 {
        return Err(Error::Scenario("cannot sample an empty ensemble".into()));
    }
    let grid = psi.grid();
    let rho = density(psi);
    let mut cum = Vec::with_capacity(rho.len());
    let mut total = 0.0;
    for r in &rho {
        total += r.max(0.0);
        cum.push(total);
    }
    let dims = grid.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n * dims);
    let mut idx = vec![0usize; dims];
    for _ in 0..n {
        let u = rng.gen::<f64>() * total;
        let cell = cum.partition_point(|&c| c <= u).min(rho.len() - 1);
        grid.unflatten(cell, &mut idx);
        for (a, &j) in grid.axes().iter().zip(&idx) {
            let jitter: f64 = rng.gen();
            let mut x = a.node(j) + (jitter - 0.5) * a.spacing();
            if x < a.lo {
                x += a.length();
            } else if x >= a.hi {
                x -= a.length();
            }
            positions.push(x);
        }
    }
    Ensemble::from_positions(dims, positions, seed)
}
