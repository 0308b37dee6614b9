//! Subsystems of a two-part toy universe: conditional and effective wave
//! functions, the conditional probability formula, emergent collapse, and
//! the law-of-large-numbers equilibrium check.
//!
//! The composite configuration is written q = (x, y) with x the subsystem
//! and y the environment. The subsystem's wave function is not postulated;
//! it is read off the universal one, psi(x) = Psi(x, Y), at the actual
//! environment configuration Y. When Psi splits into a product branch plus
//! a remainder with disjoint y-support, that conditional slice is stable
//! (an effective wave function) and collapse falls out of the dynamics.

use std::collections::VecDeque;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{inner_product, sample_density, Grid, WaveFunction};
use crate::observables::{ExperimentSpec, PovSetup};
use crate::packets;
use crate::propagate;

/// Default gap threshold: y-marginal cells below this fraction of the peak
/// separate branches.
pub const DEFAULT_GAP_DELTA: f64 = 1e-6;

/// A branch restriction counts as a product when the second singular value
/// is below this fraction of the first.
pub const RANK_RATIO_TOL: f64 = 1e-4;

/// Conditional slices below this fraction of the largest slice are null.
pub const NULL_SLICE_REL: f64 = 1e-14;

/// Environment bins with fewer samples than this are excluded from the
/// conditional-probability comparison.
pub const MIN_BIN_COUNT: usize = 100;

const NORM_TOL: f64 = 1e-6;

/// A normalized scalar wave function on a product grid, with the leading
/// `sys_axes` axes declared as the subsystem and the rest as environment.
#[derive(Clone, Debug)]
pub struct Composite {
    psi: WaveFunction,
    sys_axes: usize,
    sys_grid: Grid,
    env_grid: Grid,
}

impl Composite {
    pub fn new(psi: WaveFunction, sys_axes: usize) -> Result<Composite> {
        if psi.spin_dim() != 1 {
            return Err(Error::SpinorNotSupported {
                spin_dim: psi.spin_dim(),
            });
        }
        let dims = psi.grid().dims();
        if sys_axes == 0 || sys_axes >= dims {
            return Err(Error::Scenario(format!(
                "system axes must leave at least one environment axis (got {sys_axes} of {dims})"
            )));
        }
        let defect = (psi.norm_squared() - 1.0).abs();
        if !(defect <= NORM_TOL) {
            return Err(Error::NotNormalized { defect });
        }
        let extents = |axes: &[crate::grid::Axis]| -> Vec<(f64, f64, usize)> {
            axes.iter().map(|a| (a.lo, a.hi, a.n)).collect()
        };
        let sys_grid = Grid::new(&extents(&psi.grid().axes()[..sys_axes]))?;
        let env_grid = Grid::new(&extents(&psi.grid().axes()[sys_axes..]))?;
        Ok(Composite {
            psi,
            sys_axes,
            sys_grid,
            env_grid,
        })
    }

    pub fn psi(&self) -> &WaveFunction {
        &self.psi
    }

    pub fn sys_axes(&self) -> usize {
        self.sys_axes
    }

    pub fn sys_grid(&self) -> &Grid {
        &self.sys_grid
    }

    pub fn env_grid(&self) -> &Grid {
        &self.env_grid
    }

    fn check_env_point(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.env_grid.dims() {
            return Err(Error::GridMismatch(format!(
                "environment point has {} coordinates, expected {}",
                y.len(),
                self.env_grid.dims()
            )));
        }
        for (e, ax) in self.env_grid.axes().iter().enumerate() {
            if !(y[e] >= ax.lo && y[e] < ax.hi) {
                return Err(Error::OutOfBox {
                    axis: self.sys_axes + e,
                    coordinate: y[e],
                });
            }
        }
        Ok(())
    }

    /// Cell index of an in-box environment point (cells are centered on
    /// nodes; the top half-cell wraps onto the first node).
    fn env_cell(&self, y: &[f64]) -> usize {
        let mut idx = vec![0usize; self.env_grid.dims()];
        for (e, ax) in self.env_grid.axes().iter().enumerate() {
            let j = ((y[e] - ax.lo) / ax.spacing() + 0.5).floor() as usize;
            idx[e] = j % ax.n;
        }
        self.env_grid.flat_index(&idx)
    }

    /// Marginal density of the environment, one value per env node.
    fn env_marginal(&self) -> Vec<f64> {
        let env_len = self.env_grid.len();
        let dvx = self.sys_grid.cell_volume();
        let amps = self.psi.amplitudes();
        let mut rho = vec![0.0; env_len];
        for (p, a) in amps.iter().enumerate() {
            rho[p % env_len] += a.norm_sqr();
        }
        for r in &mut rho {
            *r *= dvx;
        }
        rho
    }
}

/// The conditional wave function psi(x) of the subsystem at environment
/// configuration Y: the slice Psi(x, Y), multilinearly interpolated between
/// environment nodes, returned normalized together with the normalization
/// constant removed from it.
pub fn conditional_wf(comp: &Composite, y: &[f64]) -> Result<(WaveFunction, f64)> {
    comp.check_env_point(y)?;
    let env = &comp.env_grid;
    let env_len = env.len();

    // Interpolation corners: one (flat env index, weight) pair per vertex
    // of the env cell spanned by the node lattice around y.
    let mut corners: Vec<(usize, f64)> = vec![(0, 1.0)];
    for (e, ax) in env.axes().iter().enumerate() {
        let stride = env.point_stride(e);
        let t = (y[e] - ax.lo) / ax.spacing();
        let i0 = t.floor() as usize;
        let f = t - i0 as f64;
        let i0 = i0.min(ax.n - 1);
        let i1 = (i0 + 1) % ax.n;
        let mut next = Vec::with_capacity(corners.len() * 2);
        for &(base, w) in &corners {
            next.push((base + i0 * stride, w * (1.0 - f)));
            if f > 0.0 {
                next.push((base + i1 * stride, w * f));
            }
        }
        corners = next;
    }

    let amps = comp.psi.amplitudes();
    let sys_len = comp.sys_grid.len();
    let mut slice = vec![Complex64::new(0.0, 0.0); sys_len];
    for (flat_y, w) in &corners {
        for (x, s) in slice.iter_mut().enumerate() {
            *s += *w * amps[x * env_len + flat_y];
        }
    }

    let dvx = comp.sys_grid.cell_volume();
    let norm = (slice.iter().map(|c| c.norm_sqr()).sum::<f64>() * dvx).sqrt();
    let mut max_sq = 0.0f64;
    for flat_y in 0..env_len {
        let s: f64 = (0..sys_len)
            .map(|x| amps[x * env_len + flat_y].norm_sqr())
            .sum();
        max_sq = max_sq.max(s);
    }
    let max = (max_sq * dvx).sqrt();
    if !(norm > NULL_SLICE_REL * max) {
        return Err(Error::NullSlice { norm, max });
    }
    for s in &mut slice {
        *s /= norm;
    }
    let psi = WaveFunction::from_amplitudes(comp.sys_grid.clone(), 1, comp.psi.time(), slice)?;
    Ok((psi, norm))
}

/// Whether the conditional wave function at Y is also an effective one.
#[derive(Clone, Debug)]
pub struct EffectiveWfReport {
    pub exists: bool,
    /// The x-factor of Y's branch (leading singular vector, phase-aligned
    /// to the conditional slice) when it exists.
    pub psi: Option<WaveFunction>,
    /// Mass of Psi off the product-plus-disjoint form: the part of Y's
    /// branch not captured by the rank-1 factor, plus all sub-threshold
    /// gap mass.
    pub off_form_mass: f64,
    /// Distance between Y's branch and the nearest other branch
    /// (infinite when the marginal has a single component).
    pub separation_margin: f64,
    /// Second-to-first singular value ratio of the branch restriction.
    pub singular_ratio: f64,
    /// Mass of Y's marginal component.
    pub component_mass: f64,
    /// |<psi_eff, psi_cond>|; 1 when the branch truly factorizes.
    pub conditional_overlap: f64,
}

/// Decide whether the conditional wave function at Y is an effective wave
/// function: cluster the y-marginal into components separated by gaps where
/// the density falls below `delta` times its peak (components are connected
/// through axis neighbors, box treated as non-periodic), then test Y's
/// component for rank-1 factorization.
pub fn effective_wf(comp: &Composite, y: &[f64], delta: f64) -> Result<EffectiveWfReport> {
    comp.check_env_point(y)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Scenario(format!(
            "gap threshold must lie in (0, 1), got {delta}"
        )));
    }
    let env = &comp.env_grid;
    let env_len = env.len();
    let dvy = env.cell_volume();
    let rho = comp.env_marginal();
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let threshold = delta * peak;

    // Connected components of the active set.
    let mut label = vec![-1i32; env_len];
    let mut n_comp = 0i32;
    for start in 0..env_len {
        if rho[start] < threshold || label[start] >= 0 {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        label[start] = n_comp;
        while let Some(cell) = queue.pop_front() {
            for a in 0..env.dims() {
                let stride = env.point_stride(a);
                let j = (cell / stride) % env.axis(a).n;
                for nb in [
                    (j > 0).then(|| cell - stride),
                    (j + 1 < env.axis(a).n).then(|| cell + stride),
                ]
                .into_iter()
                .flatten()
                {
                    if rho[nb] >= threshold && label[nb] < 0 {
                        label[nb] = n_comp;
                        queue.push_back(nb);
                    }
                }
            }
        }
        n_comp += 1;
    }

    let mut comp_mass = vec![0.0f64; n_comp as usize];
    for (cell, &l) in label.iter().enumerate() {
        if l >= 0 {
            comp_mass[l as usize] += rho[cell] * dvy;
        }
    }
    let total_mass: f64 = rho.iter().sum::<f64>() * dvy;
    let gap_mass = (total_mass - comp_mass.iter().sum::<f64>()).max(0.0);

    let y_cell = comp.env_cell(y);
    if label[y_cell] < 0 {
        // Y sits in a gap: a conditional slice may still exist, but there
        // is no branch to factorize.
        return Ok(EffectiveWfReport {
            exists: false,
            psi: None,
            off_form_mass: gap_mass,
            separation_margin: 0.0,
            singular_ratio: 1.0,
            component_mass: 0.0,
            conditional_overlap: 0.0,
        });
    }
    let y_label = label[y_cell];
    let cells: Vec<usize> = (0..env_len).filter(|&c| label[c] == y_label).collect();
    let m_y = comp_mass[y_label as usize];

    // Restriction of Psi to the branch, scaled so plain singular values
    // are in mass units.
    let sys_len = comp.sys_grid.len();
    let amps = comp.psi.amplitudes();
    let scale = (comp.sys_grid.cell_volume() * dvy).sqrt();
    let nc = cells.len();
    let mut a = vec![Complex64::new(0.0, 0.0); sys_len * nc];
    for (ci, &cell) in cells.iter().enumerate() {
        for x in 0..sys_len {
            a[x * nc + ci] = amps[x * env_len + cell] * scale;
        }
    }
    let (sigma1_sq, u1, v1) = leading_singular_pair(&a, sys_len, nc, None);
    let sigma2_sq = if nc > 1 {
        leading_singular_pair(&a, sys_len, nc, Some(&v1)).0
    } else {
        0.0
    };
    let singular_ratio = if sigma1_sq > 0.0 {
        (sigma2_sq.max(0.0) / sigma1_sq).sqrt()
    } else {
        1.0
    };
    let exists = singular_ratio < RANK_RATIO_TOL;

    let mut psi_eff = None;
    let mut conditional_overlap = 0.0;
    if sigma1_sq > 0.0 {
        let dvx = comp.sys_grid.cell_volume();
        let eff_amps: Vec<Complex64> = u1.iter().map(|c| c / dvx.sqrt()).collect();
        let mut eff =
            WaveFunction::from_amplitudes(comp.sys_grid.clone(), 1, comp.psi.time(), eff_amps)?;
        match conditional_wf(comp, y) {
            Ok((cond, _)) => {
                let ip = inner_product(&eff, &cond)?;
                conditional_overlap = ip.norm();
                if conditional_overlap > 0.0 {
                    // Align the arbitrary singular-vector phase with the slice.
                    let phase = ip / conditional_overlap;
                    let aligned: Vec<Complex64> =
                        eff.amplitudes().iter().map(|c| c * phase).collect();
                    eff = WaveFunction::from_amplitudes(
                        comp.sys_grid.clone(),
                        1,
                        comp.psi.time(),
                        aligned,
                    )?;
                }
            }
            Err(Error::NullSlice { .. }) => {}
            Err(e) => return Err(e),
        }
        psi_eff = Some(eff);
    }

    let separation_margin = if n_comp <= 1 {
        f64::INFINITY
    } else {
        let mut others = Vec::new();
        let mut q = vec![0.0; env.dims()];
        for (cell, &l) in label.iter().enumerate() {
            if l >= 0 && l != y_label {
                env.node_coords(cell, &mut q);
                others.push(q.clone());
            }
        }
        let mut best = f64::INFINITY;
        for &cell in &cells {
            env.node_coords(cell, &mut q);
            for o in &others {
                let d2: f64 = q.iter().zip(o).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(d2);
            }
        }
        best.sqrt()
    };

    Ok(EffectiveWfReport {
        exists,
        psi: if exists { psi_eff } else { None },
        off_form_mass: (m_y - sigma1_sq).max(0.0) + gap_mass,
        separation_margin,
        singular_ratio,
        component_mass: m_y,
        conditional_overlap,
    })
}

/// Leading singular pair of the x-by-c matrix `a` by power iteration on
/// a* a, optionally deflated against a known right vector.
fn leading_singular_pair(
    a: &[Complex64],
    rows: usize,
    cols: usize,
    deflate: Option<&[Complex64]>,
) -> (f64, Vec<Complex64>, Vec<Complex64>) {
    let apply = |v: &[Complex64], u: &mut Vec<Complex64>, w: &mut Vec<Complex64>| {
        for (x, uu) in u.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..cols {
                acc += a[x * cols + c] * v[c];
            }
            *uu = acc;
        }
        for (c, ww) in w.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for x in 0..rows {
                acc += a[x * cols + c].conj() * u[x];
            }
            *ww = acc;
        }
    };
    // Projected twice per call: one pass leaves an O(1) relative residual
    // along the deflated direction when the iterate is nearly parallel to
    // it, which would pin the Rayleigh quotient near sigma1^2.
    let project = |v: &mut [Complex64]| {
        if let Some(d) = deflate {
            for _ in 0..2 {
                let ip: Complex64 = d.iter().zip(v.iter()).map(|(p, q)| p.conj() * q).sum();
                for (vv, dd) in v.iter_mut().zip(d) {
                    *vv -= ip * dd;
                }
            }
        }
    };

    // Column norms make a deterministic start that overlaps the leading
    // vector for the smooth kernels used here. The deflated pass instead
    // starts from a fixed pseudorandom vector: the kernel often has a
    // parity symmetry, and a symmetric start would confine the iteration
    // to one parity class and skip the true second singular vector.
    let mut v: Vec<Complex64> = if deflate.is_some() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0f1e2d3c);
        (0..cols)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect()
    } else {
        (0..cols)
            .map(|c| {
                let s: f64 = (0..rows).map(|x| a[x * cols + c].norm_sqr()).sum();
                Complex64::new(s.sqrt(), 0.0)
            })
            .collect()
    };
    let mut u = vec![Complex64::new(0.0, 0.0); rows];
    let mut w = vec![Complex64::new(0.0, 0.0); cols];
    let mut sigma_sq = 0.0f64;
    for _ in 0..2000 {
        project(&mut v);
        let nv = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if nv < 1e-150 {
            return (0.0, u, v);
        }
        for c in &mut v {
            *c /= nv;
        }
        apply(&v, &mut u, &mut w);
        let next: f64 = v
            .iter()
            .zip(&w)
            .map(|(p, q)| (p.conj() * q).re)
            .sum::<f64>()
            .max(0.0);
        let done = (next - sigma_sq).abs() <= 1e-13 * next.max(1e-300);
        sigma_sq = next;
        std::mem::swap(&mut v, &mut w);
        if done {
            break;
        }
    }
    std::mem::swap(&mut v, &mut w); // undo the last swap: v holds the iterate
    let su = u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if su > 0.0 {
        for c in &mut u {
            *c /= su;
        }
    }
    (sigma_sq, u, v)
}

/// Per-bin result of the conditional probability comparison.
#[derive(Clone, Debug)]
pub struct BinReport {
    /// Flat environment-bin index.
    pub index: usize,
    pub count: usize,
    /// Sample centroid the conditional wave function was evaluated at.
    pub centroid: Vec<f64>,
    /// L1 distance between the bin's empirical x-histogram and
    /// |psi_cond|^2 integrated over the same x-bins.
    pub l1: f64,
}

#[derive(Clone, Debug)]
pub struct ConditionalCheckReport {
    pub bins: Vec<BinReport>,
    /// (bin index, count) for non-empty bins below the sample floor.
    pub underflow: Vec<(usize, usize)>,
    pub mean_l1: f64,
    pub samples: usize,
}

/// The fundamental conditional probability formula, empirically: sample
/// (X, Y) pairs from |Psi|^2, coarse-grain Y into `env_bins` equal-width
/// bins per axis, and compare each bin's X-distribution (histogrammed into
/// `x_bins` equal-width bins per system axis) against the conditional wave
/// function evaluated at the bin's sample centroid.
pub fn conditional_probability_check(
    comp: &Composite,
    env_bins: &[usize],
    x_bins: &[usize],
    n: usize,
    seed: u64,
) -> Result<ConditionalCheckReport> {
    if env_bins.len() != comp.env_grid.dims() || env_bins.iter().any(|&b| b == 0) {
        return Err(Error::Scenario(
            "need a positive bin count per environment axis".into(),
        ));
    }
    if x_bins.len() != comp.sys_grid.dims() || x_bins.iter().any(|&b| b == 0) {
        return Err(Error::Scenario(
            "need a positive bin count per system axis".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Scenario("need at least one sample".into()));
    }
    let k = comp.sys_axes;
    let total_env_bins: usize = env_bins.iter().product();
    let total_x_bins: usize = x_bins.iter().product();

    let bin_of = |coords: &[f64], axes: &[crate::grid::Axis], counts: &[usize]| -> usize {
        let mut flat = 0;
        for (i, ax) in axes.iter().enumerate() {
            let b = ((coords[i] - ax.lo) / ax.length() * counts[i] as f64).floor() as usize;
            flat = flat * counts[i] + b.min(counts[i] - 1);
        }
        flat
    };

    let ensemble = sample_density(&comp.psi, n, seed)?;
    let mut counts = vec![0usize; total_env_bins];
    let mut centroids = vec![0.0f64; total_env_bins * comp.env_grid.dims()];
    let mut hists = vec![0u64; total_env_bins * total_x_bins];
    for member in ensemble.iter() {
        let (x, y) = member.split_at(k);
        let eb = bin_of(y, comp.env_grid.axes(), env_bins);
        let xb = bin_of(x, comp.sys_grid.axes(), x_bins);
        counts[eb] += 1;
        hists[eb * total_x_bins + xb] += 1;
        for (i, &yi) in y.iter().enumerate() {
            centroids[eb * comp.env_grid.dims() + i] += yi;
        }
    }

    let mut bins = Vec::new();
    let mut underflow = Vec::new();
    for eb in 0..total_env_bins {
        if counts[eb] == 0 {
            continue;
        }
        if counts[eb] < MIN_BIN_COUNT {
            underflow.push((eb, counts[eb]));
            continue;
        }
        let centroid: Vec<f64> = (0..comp.env_grid.dims())
            .map(|i| centroids[eb * comp.env_grid.dims() + i] / counts[eb] as f64)
            .collect();
        let (cond, _) = conditional_wf(comp, &centroid)?;
        let predicted = binned_density(&cond, x_bins);
        let l1: f64 = (0..total_x_bins)
            .map(|xb| {
                let emp = hists[eb * total_x_bins + xb] as f64 / counts[eb] as f64;
                (emp - predicted[xb]).abs()
            })
            .sum();
        bins.push(BinReport {
            index: eb,
            count: counts[eb],
            centroid,
            l1,
        });
    }
    if bins.is_empty() {
        return Err(Error::BinUnderflow {
            min_count: MIN_BIN_COUNT,
        });
    }
    let mean_l1 = bins.iter().map(|b| b.l1).sum::<f64>() / bins.len() as f64;
    Ok(ConditionalCheckReport {
        bins,
        underflow,
        mean_l1,
        samples: n,
    })
}

/// Integrate a scalar density into equal-width bins per axis, splitting
/// node cells across bin edges the same way jittered sampling does.
fn binned_density(psi: &WaveFunction, bins: &[usize]) -> Vec<f64> {
    let grid = psi.grid();
    let total: usize = bins.iter().product();
    // Per axis, per node: list of (bin, overlap fraction) of the node cell.
    let mut splits: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(grid.dims());
    for (i, ax) in grid.axes().iter().enumerate() {
        let h = ax.spacing();
        let width = ax.length() / bins[i] as f64;
        let mut per_node = Vec::with_capacity(ax.n);
        for j in 0..ax.n {
            let node = ax.node(j);
            let c_lo = (node - 0.5 * h).max(ax.lo);
            let c_hi = (node + 0.5 * h).min(ax.hi);
            let mut parts = Vec::with_capacity(2);
            let b_lo = ((c_lo - ax.lo) / width).floor() as usize;
            let b_hi = (((c_hi - ax.lo) / width).ceil() as usize).min(bins[i]);
            for b in b_lo..b_hi.max(b_lo + 1) {
                let lo = ax.lo + b as f64 * width;
                let hi = lo + width;
                let overlap = (c_hi.min(hi) - c_lo.max(lo)).max(0.0);
                if overlap > 0.0 {
                    parts.push((b.min(bins[i] - 1), overlap / h));
                }
            }
            per_node.push(parts);
        }
        splits.push(per_node);
    }

    let dv = grid.cell_volume();
    let mut out = vec![0.0; total];
    let mut idx = vec![0usize; grid.dims()];
    for (p, a) in psi.amplitudes().iter().enumerate() {
        let mass = a.norm_sqr() * dv;
        if mass == 0.0 {
            continue;
        }
        grid.unflatten(p, &mut idx);
        // Expand the per-axis splits into product cells.
        let mut targets: Vec<(usize, f64)> = vec![(0, mass)];
        for (i, &j) in idx.iter().enumerate() {
            let mut next = Vec::with_capacity(targets.len() * 2);
            for &(flat, w) in &targets {
                for &(b, frac) in &splits[i][j] {
                    next.push((flat * bins[i] + b, w * frac));
                }
            }
            targets = next;
        }
        for (flat, w) in targets {
            out[flat] += w;
        }
    }
    out
}

/// A labeled partition of a one-dimensional box into contiguous intervals.
#[derive(Clone, Debug)]
pub struct EventPartition {
    labels: Vec<String>,
    edges: Vec<f64>,
}

impl EventPartition {
    /// `edges` are the interior boundaries, strictly increasing; interval
    /// `i` is [edge_{i-1}, edge_i).
    pub fn new(labels: Vec<String>, edges: Vec<f64>) -> Result<EventPartition> {
        if labels.len() != edges.len() + 1 {
            return Err(Error::Scenario(
                "need exactly one more label than interior edges".into(),
            ));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Scenario(
                "event edges must be finite and strictly increasing".into(),
            ));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Scenario(format!("duplicate event label '{l}'")));
            }
        }
        Ok(EventPartition { labels, edges })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn classify(&self, x: f64) -> usize {
        self.edges.partition_point(|&e| e <= x)
    }

    /// Born weights of the events: |psi|^2 mass per interval, with node
    /// cells split across edges exactly as jittered sampling splits them.
    pub fn born_weights(&self, psi: &WaveFunction) -> Result<Vec<f64>> {
        if psi.grid().dims() != 1 {
            return Err(Error::GridMismatch(
                "event partition lives on a one-dimensional box".into(),
            ));
        }
        let ax = psi.grid().axis(0);
        let h = ax.spacing();
        let mut w = vec![0.0; self.labels.len()];
        let mut add_segment = |lo: f64, hi: f64, mass_per_len: f64| {
            for i in 0..self.labels.len() {
                let e_lo = if i == 0 { ax.lo } else { self.edges[i - 1] };
                let e_hi = if i == self.labels.len() - 1 {
                    ax.hi
                } else {
                    self.edges[i]
                };
                let overlap = (hi.min(e_hi) - lo.max(e_lo)).max(0.0);
                w[i] += mass_per_len * overlap;
            }
        };
        for (j, a) in psi.amplitudes().iter().enumerate() {
            let density = a.norm_sqr();
            let node = ax.node(j);
            let c_lo = node - 0.5 * h;
            let c_hi = node + 0.5 * h;
            if c_lo < ax.lo {
                // The first node's lower half-cell wraps to the top of the box.
                add_segment(ax.lo, c_hi, density);
                add_segment(ax.hi - (ax.lo - c_lo), ax.hi, density);
            } else {
                add_segment(c_lo, c_hi.min(ax.hi), density);
            }
        }
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        Ok(w)
    }
}

#[derive(Clone, Debug)]
pub struct LlnReport {
    pub labels: Vec<String>,
    /// Exact Born weights of the events.
    pub weights: Vec<f64>,
    pub counts: Vec<u64>,
    /// Empirical frequency across the M subsystems.
    pub frequencies: Vec<f64>,
    pub subsystems: usize,
    pub max_abs_deviation: f64,
}

/// Law of large numbers inside one universe: the effective wave function of
/// M identical subsystems is the product psi(x_1)...psi(x_M), so a single
/// universal configuration, sampled once from the product density, already
/// shows Born frequencies across its subsystems. One draw per factor, on
/// its own deterministic RNG stream.
pub fn lln_quantum_equilibrium(
    psi: &WaveFunction,
    events: &EventPartition,
    subsystems: usize,
    seed: u64,
) -> Result<LlnReport> {
    if psi.spin_dim() != 1 {
        return Err(Error::SpinorNotSupported {
            spin_dim: psi.spin_dim(),
        });
    }
    if psi.grid().dims() != 1 {
        return Err(Error::GridMismatch(
            "the factor wave function must be one-dimensional".into(),
        ));
    }
    let defect = (psi.norm_squared() - 1.0).abs();
    if !(defect <= NORM_TOL) {
        return Err(Error::NotNormalized { defect });
    }
    if subsystems == 0 {
        return Err(Error::Scenario("need at least one subsystem".into()));
    }

    let ax = psi.grid().axis(0);
    let h = ax.spacing();
    let mut cum = Vec::with_capacity(ax.n);
    let mut acc = 0.0;
    for a in psi.amplitudes() {
        acc += a.norm_sqr() * h;
        cum.push(acc);
    }
    let total = acc;

    let classes: Vec<usize> = (0..subsystems)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let u: f64 = rng.gen::<f64>() * total;
            let cell = cum.partition_point(|&c| c <= u).min(ax.n - 1);
            let jitter: f64 = rng.gen::<f64>() - 0.5;
            let mut x = ax.node(cell) + jitter * h;
            if x < ax.lo {
                x += ax.length();
            } else if x >= ax.hi {
                x -= ax.length();
            }
            events.classify(x)
        })
        .collect();

    let mut counts = vec![0u64; events.labels.len()];
    for c in classes {
        counts[c] += 1;
    }
    let weights = events.born_weights(psi)?;
    let frequencies: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / subsystems as f64)
        .collect();
    let max_abs_deviation = frequencies
        .iter()
        .zip(&weights)
        .map(|(f, w)| (f - w).abs())
        .fold(0.0, f64::max);
    Ok(LlnReport {
        labels: events.labels.clone(),
        weights,
        counts,
        frequencies,
        subsystems,
        max_abs_deviation,
    })
}

/// Before/after record of one post-selected measurement.
#[derive(Clone, Debug)]
pub struct CollapseReport {
    /// Pointer outcome the selected configuration registered.
    pub outcome: String,
    /// The selected composite configuration.
    pub q_selected: Vec<f64>,
    /// Effective-wave-function report of the pre-measurement product state.
    pub before: EffectiveWfReport,
    /// Same report after the measurement, at the selected environment
    /// configuration.
    pub after: EffectiveWfReport,
    /// The textbook collapsed state: P_alpha psi, normalized.
    pub psi_projected: WaveFunction,
    /// |<psi_after, psi_projected>|.
    pub projected_overlap: f64,
}

const COLLAPSE_DRAWS: usize = 256;

/// Run a pointer measurement and watch collapse happen: couple the system
/// to the ready apparatus, evolve, select a configuration whose pointer
/// reads `target` (or the first drawn), and compare the post-measurement
/// effective wave function against the projected system state. The
/// projection postulate here is a consequence, not an input.
pub fn collapse_demo(
    psi: &WaveFunction,
    setup: &PovSetup,
    spec: &ExperimentSpec,
    target: Option<&str>,
    seed: u64,
) -> Result<CollapseReport> {
    if psi.grid() != spec.grid() || spec.spin_dim() != 1 {
        return Err(Error::GridMismatch(
            "the experiment spec must live on the system grid, scalar".into(),
        ));
    }
    let k = psi.grid().dims();
    let composite0 = packets::tensor_product(psi, setup.apparatus)?;
    let comp0 = Composite::new(composite0, k)?;
    let y0 = sample_density(setup.apparatus, 1, seed)?;
    let before = effective_wf(&comp0, y0.member(0), DEFAULT_GAP_DELTA)?;

    let evolved = propagate::evolve(comp0.psi(), setup.pot, setup.prop, setup.n_steps)?;
    let comp_t = Composite::new(evolved, k)?;

    let draws = sample_density(comp_t.psi(), COLLAPSE_DRAWS, seed)?;
    let mut selected: Option<(Vec<f64>, String)> = None;
    for member in draws.iter() {
        let v = setup.pointer.value(member)?;
        let label = &setup.pointer.labels()[v];
        if target.is_none_or(|t| t == label) {
            selected = Some((member.to_vec(), label.clone()));
            break;
        }
    }
    let (q, outcome) = selected.ok_or_else(|| {
        Error::Scenario(format!(
            "outcome '{}' was not drawn in {COLLAPSE_DRAWS} configurations",
            target.unwrap_or("any")
        ))
    })?;

    let after = effective_wf(&comp_t, &q[k..], DEFAULT_GAP_DELTA)?;
    let which = spec
        .outcomes()
        .iter()
        .position(|o| o.label == outcome)
        .ok_or_else(|| {
            Error::Scenario(format!(
                "pointer outcome '{outcome}' has no matching outcome in the experiment spec"
            ))
        })?;
    let psi_projected = spec.apply(which, psi)?.normalized()?;
    let psi_after = match &after.psi {
        Some(p) => p.clone(),
        None => conditional_wf(&comp_t, &q[k..])?.0,
    };
    let projected_overlap = inner_product(&psi_after, &psi_projected)?.norm();
    Ok(CollapseReport {
        outcome,
        q_selected: q,
        before,
        after,
        psi_projected,
        projected_overlap,
    })
}
