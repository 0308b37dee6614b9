//! Statistical verification helpers: Kolmogorov-Smirnov distances against
//! grid densities, histogram distances, and sampling-error bands.

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};

/// One-sample KS statistic for an ascending sample against a CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}

/// Acceptance band for the KS statistic at confidence 1 - alpha:
/// sqrt(ln(2/alpha) / (2n)). At alpha = 0.01 this is 1.6276/sqrt(n).
pub fn ks_band(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Piecewise-linear CDF of a density that is constant within each grid cell.
/// Cells are centered on the nodes, matching [`crate::grid::sample_density`];
/// the sliver of the first cell that hangs below the box (its samples wrap to
/// the top) is ignored, an error bounded by (h/2) times the edge density.
#[derive(Clone, Debug)]
pub struct Cdf1d {
    /// Lower edge of the first node-centered cell, lo - h/2.
    first_edge: f64,
    spacing: f64,
    /// cum[j] = probability mass below edge j; cum has n+1 entries.
    cum: Vec<f64>,
}

impl Cdf1d {
    pub fn from_density(axis: &Axis, rho: &[f64]) -> Result<Cdf1d> {
        if rho.len() != axis.n {
            return Err(Error::GridMismatch(format!(
                "density holds {} cells, axis has {}",
                rho.len(),
                axis.n
            )));
        }
        let mut cum = Vec::with_capacity(axis.n + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for &r in rho {
            acc += r.max(0.0) * axis.spacing();
            cum.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::Scenario("density has no mass".into()));
        }
        for c in &mut cum {
            *c /= acc;
        }
        Ok(Cdf1d {
            first_edge: axis.lo - 0.5 * axis.spacing(),
            spacing: axis.spacing(),
            cum,
        })
    }

    /// CDF of the marginal of a (possibly multi-dimensional) grid density
    /// along `axis`.
    pub fn from_marginal(grid: &Grid, rho: &[f64], axis: usize) -> Result<Cdf1d> {
        let marg = marginal(grid, rho, axis);
        Cdf1d::from_density(grid.axis(axis), &marg)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.first_edge) / self.spacing;
        if t <= 0.0 {
            return 0.0;
        }
        let n = self.cum.len() - 1;
        if t >= n as f64 {
            return 1.0;
        }
        let j = t.floor() as usize;
        let frac = t - j as f64;
        self.cum[j] + frac * (self.cum[j + 1] - self.cum[j])
    }
}

/// Integrate out all axes except `axis` (cell volumes included, so the
/// result is a 1D density in that coordinate).
pub fn marginal(grid: &Grid, rho: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.axis(axis).n;
    let stride = grid.point_stride(axis);
    let other_vol: f64 = grid
        .axes()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != axis)
        .map(|(_, a)| a.spacing())
        .product();
    let mut out = vec![0.0; n];
    for (p, &r) in rho.iter().enumerate() {
        let j = (p / stride) % n;
        out[j] += r;
    }
    for o in &mut out {
        *o *= other_vol;
    }
    out
}

/// L1 distance between two discrete distributions of equal length.
pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Total variation distance (half the L1 distance).
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * l1_distance(p, q)
}

/// Half-width of the k-sigma binomial frequency band around probability p.
pub fn binomial_band(p: f64, n: usize, k_sigma: f64) -> f64 {
    k_sigma * (p * (1.0 - p) / n as f64).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ks_of_exact_quantiles_is_half_spacing() {
        // Sample at the midpoints of n equal probability slots: the empirical
        // CDF brackets the true one within 1/(2n) exactly.
        let n = 100;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert_relative_eq!(d, 0.5 / n as f64, max_relative = 1e-12);
    }

    #[test]
    fn ks_band_matches_closed_form() {
        assert_relative_eq!(ks_band(10_000, 0.01), 1.6276 / 100.0, max_relative = 1e-3);
        assert!(ks_band(100_000, 0.01) < 0.006);
    }

    #[test]
    fn cdf_from_density_is_monotone_and_normalized() {
        let axis = Axis {
            lo: -1.0,
            hi: 1.0,
            n: 16,
        };
        let rho: Vec<f64> = (0..16).map(|i| 1.0 + (i as f64 * 0.7).sin().abs()).collect();
        let cdf = Cdf1d::from_density(&axis, &rho).unwrap();
        assert_eq!(cdf.eval(-2.0), 0.0);
        assert_eq!(cdf.eval(2.0), 1.0);
        let mut prev = 0.0;
        for i in 0..=64 {
            let x = -1.0 + 2.0 * i as f64 / 64.0;
            let v = cdf.eval(x);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        assert_relative_eq!(cdf.eval(1.0 - 1e-12), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn marginal_sums_to_total_mass() {
        let grid = Grid::new(&[(-2.0, 2.0, 16), (-3.0, 3.0, 32)]).unwrap();
        let rho: Vec<f64> = (0..grid.len()).map(|p| (p % 7) as f64 + 0.5).collect();
        let total = crate::grid::integrate(&grid, &rho);
        for axis in 0..2 {
            let m = marginal(&grid, &rho, axis);
            let s: f64 = m.iter().sum::<f64>() * grid.axis(axis).spacing();
            assert_relative_eq!(s, total, max_relative = 1e-12);
        }
    }

    #[test]
    fn distances_are_consistent() {
        let p = [0.5, 0.25, 0.25];
        let q = [0.25, 0.5, 0.25];
        assert_relative_eq!(l1_distance(&p, &q), 0.5);
        assert_relative_eq!(total_variation(&p, &q), 0.25);
    }

    #[test]
    fn binomial_band_of_a_fair_coin() {
        assert_relative_eq!(binomial_band(0.5, 10_000, 3.0), 0.015, max_relative = 1e-12);
        assert_relative_eq!(
            binomial_band(0.36, 10_000, 3.0),
            3.0 * (0.36f64 * 0.64 / 1e4).sqrt(),
            max_relative = 1e-12
        );
    }
}
