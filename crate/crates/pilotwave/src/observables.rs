//! Experiments as bookkeeping: outcome subspaces, outcome statistics,
//! operator assembly, the pointer-variable pipeline, and the Stern-Gerlach
//! and flipped-field scenarios.
//!
//! An experiment here is a finite family of mutually orthogonal projections
//! with real calibration values attached. Everything an "observable" does in
//! textbook usage is reconstructed from that bookkeeping plus the dynamics:
//! probabilities are squared component norms, operators are calibrated sums
//! of the projections, and a full measurement is a unitary pipeline
//! system ⊗ apparatus -> evolved composite -> |Psi|^2 -> pointer statistics.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{
    density, inner_product, sample_density, Ensemble, Grid, Units, WaveFunction,
};
use crate::guidance::GuidanceParams;
use crate::packets;
use crate::propagate::{self, Method, PotentialSpec, Propagator};
use crate::trajectory::{advect, AdvectConfig, IntegratorSpec, Scheme, Trajectory};

/// Tolerance for orthogonality, idempotence, and completeness of a
/// projection family.
pub const SPEC_TOL: f64 = 1e-10;

const NORM_TOL: f64 = 1e-6;

/// One way of projecting a state onto an outcome subspace.
#[derive(Clone, Debug)]
pub enum Projection {
    /// Indicator of a grid region: `true` keeps the point.
    Region(Vec<bool>),
    /// Row-major spin_dim x spin_dim projector acting on the spin index.
    Spin(Vec<Complex64>),
    /// Region indicator tensor spin projector.
    Product(Vec<bool>, Vec<Complex64>),
}

impl Projection {
    /// Region indicator built from a predicate on node coordinates.
    pub fn region(grid: &Grid, mut pred: impl FnMut(&[f64]) -> bool) -> Projection {
        let mut q = vec![0.0; grid.dims()];
        let mask = (0..grid.len())
            .map(|p| {
                grid.node_coords(p, &mut q);
                pred(&q)
            })
            .collect();
        Projection::Region(mask)
    }

    /// Projector onto one spin basis state.
    pub fn spin_basis_state(spin_dim: usize, s: usize) -> Projection {
        let mut m = vec![Complex64::new(0.0, 0.0); spin_dim * spin_dim];
        m[s * spin_dim + s] = Complex64::new(1.0, 0.0);
        Projection::Spin(m)
    }

    fn parts(&self) -> (Option<&[bool]>, Option<&[Complex64]>) {
        match self {
            Projection::Region(m) => (Some(m), None),
            Projection::Spin(mat) => (None, Some(mat)),
            Projection::Product(m, mat) => (Some(m), Some(mat)),
        }
    }
}

/// One outcome: a label, its subspace, and the value the apparatus reports.
#[derive(Clone, Debug)]
pub struct OutcomeSpec {
    pub label: String,
    pub projection: Projection,
    pub calibration: f64,
}

/// A finite family of mutually orthogonal outcome projections.
///
/// The family either resolves the identity within [`SPEC_TOL`] or declares a
/// null outcome that absorbs the completeness deficit (no detection).
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    grid: Grid,
    spin_dim: usize,
    outcomes: Vec<OutcomeSpec>,
    null: Option<(String, f64)>,
    completeness_defect: f64,
}

impl ExperimentSpec {
    pub fn new(grid: &Grid, spin_dim: usize, outcomes: Vec<OutcomeSpec>) -> Result<ExperimentSpec> {
        ExperimentSpec::build(grid, spin_dim, outcomes, None)
    }

    /// Spec whose remainder (identity minus the declared projections) is
    /// reported as a null outcome with the given calibration.
    pub fn with_null(
        grid: &Grid,
        spin_dim: usize,
        outcomes: Vec<OutcomeSpec>,
        null_label: &str,
        null_calibration: f64,
    ) -> Result<ExperimentSpec> {
        ExperimentSpec::build(
            grid,
            spin_dim,
            outcomes,
            Some((null_label.to_string(), null_calibration)),
        )
    }

    fn build(
        grid: &Grid,
        spin_dim: usize,
        outcomes: Vec<OutcomeSpec>,
        null: Option<(String, f64)>,
    ) -> Result<ExperimentSpec> {
        if spin_dim == 0 {
            return Err(Error::SpinDimMismatch("spin_dim must be >= 1".into()));
        }
        if outcomes.is_empty() {
            return Err(Error::IncompleteSpec("no outcomes declared".into()));
        }
        let mut labels: Vec<&str> = outcomes.iter().map(|o| o.label.as_str()).collect();
        if let Some((l, _)) = &null {
            labels.push(l);
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::IncompleteSpec(format!("duplicate label '{l}'")));
            }
        }
        for o in &outcomes {
            if !o.calibration.is_finite() {
                return Err(Error::IncompleteSpec(format!(
                    "calibration for '{}' is not finite",
                    o.label
                )));
            }
            let (mask, mat) = o.projection.parts();
            if let Some(m) = mask {
                if m.len() != grid.len() {
                    return Err(Error::IncompleteSpec(format!(
                        "region mask for '{}' has {} entries, grid has {}",
                        o.label,
                        m.len(),
                        grid.len()
                    )));
                }
            }
            if let Some(m) = mat {
                if m.len() != spin_dim * spin_dim {
                    return Err(Error::IncompleteSpec(format!(
                        "spin matrix for '{}' has {} entries, expected {}",
                        o.label,
                        m.len(),
                        spin_dim * spin_dim
                    )));
                }
                let herm = hermiticity_defect(m, spin_dim);
                let idem = idempotence_defect(m, spin_dim);
                if herm > SPEC_TOL || idem > SPEC_TOL {
                    return Err(Error::IncompleteSpec(format!(
                        "spin matrix for '{}' is not a projector (hermiticity {herm:.3e}, idempotence {idem:.3e})",
                        o.label
                    )));
                }
            }
        }
        for i in 0..outcomes.len() {
            for j in i + 1..outcomes.len() {
                let d = orthogonality_defect(
                    &outcomes[i].projection,
                    &outcomes[j].projection,
                    spin_dim,
                    grid.len(),
                );
                if d > SPEC_TOL {
                    return Err(Error::IncompleteSpec(format!(
                        "projections for '{}' and '{}' overlap (defect {d:.3e})",
                        outcomes[i].label, outcomes[j].label
                    )));
                }
            }
        }
        let completeness_defect = completeness_defect(&outcomes, spin_dim, grid.len());
        Ok(ExperimentSpec {
            grid: grid.clone(),
            spin_dim,
            outcomes,
            null,
            completeness_defect,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn outcomes(&self) -> &[OutcomeSpec] {
        &self.outcomes
    }

    pub fn null(&self) -> Option<(&str, f64)> {
        self.null.as_ref().map(|(l, c)| (l.as_str(), *c))
    }

    /// Max-norm distance of the summed projections from the identity.
    pub fn completeness_defect(&self) -> f64 {
        self.completeness_defect
    }

    pub fn is_complete(&self) -> bool {
        self.completeness_defect <= SPEC_TOL
    }

    /// All labels in report order (declared outcomes, then the null label).
    pub fn labels(&self) -> Vec<String> {
        let mut ls: Vec<String> = self.outcomes.iter().map(|o| o.label.clone()).collect();
        if let Some((l, _)) = &self.null {
            ls.push(l.clone());
        }
        ls
    }

    /// Calibration values in the same order as [`labels`](Self::labels).
    pub fn calibrations(&self) -> Vec<f64> {
        let mut cs: Vec<f64> = self.outcomes.iter().map(|o| o.calibration).collect();
        if let Some((_, c)) = &self.null {
            cs.push(*c);
        }
        cs
    }

    /// Apply the projection of declared outcome `which` to a state.
    pub fn apply(&self, which: usize, psi: &WaveFunction) -> Result<WaveFunction> {
        self.check_state(psi)?;
        let s = self.spin_dim;
        let (mask, mat) = self.outcomes[which].projection.parts();
        let amps = psi.amplitudes();
        let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
        for p in 0..self.grid.len() {
            if mask.map_or(true, |m| m[p]) {
                let base = p * s;
                match mat {
                    None => out[base..base + s].copy_from_slice(&amps[base..base + s]),
                    Some(m) => {
                        for i in 0..s {
                            let mut acc = Complex64::new(0.0, 0.0);
                            for j in 0..s {
                                acc += m[i * s + j] * amps[base + j];
                            }
                            out[base + i] = acc;
                        }
                    }
                }
            }
        }
        WaveFunction::from_amplitudes(self.grid.clone(), s, psi.time(), out)
    }

    fn check_state(&self, psi: &WaveFunction) -> Result<()> {
        if psi.grid() != &self.grid {
            return Err(Error::GridMismatch(
                "state grid does not match the experiment spec".into(),
            ));
        }
        if psi.spin_dim() != self.spin_dim {
            return Err(Error::SpinDimMismatch(format!(
                "state has spin dimension {}, spec expects {}",
                psi.spin_dim(),
                self.spin_dim
            )));
        }
        Ok(())
    }

    fn require_resolution(&self) -> Result<()> {
        if !self.is_complete() && self.null.is_none() {
            return Err(Error::IncompleteSpec(format!(
                "projections do not sum to the identity (defect {:.3e}) and no null outcome is declared",
                self.completeness_defect
            )));
        }
        Ok(())
    }
}

fn hermiticity_defect(m: &[Complex64], s: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..s {
        for j in 0..s {
            worst = worst.max((m[i * s + j] - m[j * s + i].conj()).norm());
        }
    }
    worst
}

fn mat_mul(a: &[Complex64], b: &[Complex64], s: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); s * s];
    for i in 0..s {
        for k in 0..s {
            let aik = a[i * s + k];
            for j in 0..s {
                out[i * s + j] += aik * b[k * s + j];
            }
        }
    }
    out
}

fn idempotence_defect(m: &[Complex64], s: usize) -> f64 {
    let sq = mat_mul(m, m, s);
    sq.iter()
        .zip(m)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

fn masks_intersect(a: Option<&[bool]>, b: Option<&[bool]>, n: usize) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x.iter().zip(y).any(|(&p, &q)| p && q),
        (Some(x), None) | (None, Some(x)) => x.iter().any(|&p| p),
        (None, None) => n > 0,
    }
}

fn orthogonality_defect(a: &Projection, b: &Projection, s: usize, n: usize) -> f64 {
    let (mask_a, mat_a) = a.parts();
    let (mask_b, mat_b) = b.parts();
    if !masks_intersect(mask_a, mask_b, n) {
        return 0.0;
    }
    // On the mask intersection the product acts as mat_a * mat_b (missing
    // matrices are the identity).
    let identity = |s: usize| {
        let mut m = vec![Complex64::new(0.0, 0.0); s * s];
        for i in 0..s {
            m[i * s + i] = Complex64::new(1.0, 0.0);
        }
        m
    };
    let ma = mat_a.map(|m| m.to_vec()).unwrap_or_else(|| identity(s));
    let mb = mat_b.map(|m| m.to_vec()).unwrap_or_else(|| identity(s));
    mat_mul(&ma, &mb, s).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn completeness_defect(outcomes: &[OutcomeSpec], s: usize, n: usize) -> f64 {
    // Points with the same set of active outcomes share the same defect, so
    // compute it once per distinct activity pattern.
    assert!(outcomes.len() <= 64, "more than 64 outcomes are not supported");
    let parts: Vec<(Option<&[bool]>, Option<&[Complex64]>)> =
        outcomes.iter().map(|o| o.projection.parts()).collect();
    let mut seen: HashMap<u64, f64> = HashMap::new();
    let mut worst = 0.0f64;
    for p in 0..n {
        let mut key = 0u64;
        for (i, (mask, _)) in parts.iter().enumerate() {
            if mask.map_or(true, |m| m[p]) {
                key |= 1 << i;
            }
        }
        let defect = *seen.entry(key).or_insert_with(|| {
            let mut sum = vec![Complex64::new(0.0, 0.0); s * s];
            for (i, (_, mat)) in parts.iter().enumerate() {
                if key & (1 << i) == 0 {
                    continue;
                }
                match mat {
                    None => {
                        for d in 0..s {
                            sum[d * s + d] += 1.0;
                        }
                    }
                    Some(m) => {
                        for (acc, v) in sum.iter_mut().zip(m.iter()) {
                            *acc += v;
                        }
                    }
                }
            }
            for d in 0..s {
                sum[d * s + d] -= 1.0;
            }
            sum.iter().map(|c| c.norm()).fold(0.0, f64::max)
        });
        worst = worst.max(defect);
    }
    worst
}

/// Split a state into its outcome components `psi_alpha = P_alpha psi`.
///
/// The components sum back to the state; when the spec declares a null
/// outcome its remainder component comes last, in label order.
pub fn decompose(psi: &WaveFunction, spec: &ExperimentSpec) -> Result<Vec<WaveFunction>> {
    spec.check_state(psi)?;
    spec.require_resolution()?;
    let mut parts = Vec::with_capacity(spec.outcomes.len() + 1);
    for i in 0..spec.outcomes.len() {
        parts.push(spec.apply(i, psi)?);
    }
    if spec.null.is_some() {
        let mut rest: Vec<Complex64> = psi.amplitudes().to_vec();
        for part in &parts {
            for (r, a) in rest.iter_mut().zip(part.amplitudes()) {
                *r -= a;
            }
        }
        parts.push(WaveFunction::from_amplitudes(
            spec.grid.clone(),
            spec.spin_dim,
            psi.time(),
            rest,
        )?);
    }
    Ok(parts)
}

/// Probabilities per outcome label, exact or as empirical frequencies.
#[derive(Clone, Debug)]
pub struct OutcomeDistribution {
    labels: Vec<String>,
    probabilities: Vec<f64>,
    counts: Option<Vec<u64>>,
}

impl OutcomeDistribution {
    /// Exact distribution; probabilities must be nonnegative (up to
    /// roundoff, which is clamped) and sum to 1 within 1e-10.
    pub fn exact(labels: Vec<String>, probabilities: Vec<f64>) -> Result<OutcomeDistribution> {
        if labels.len() != probabilities.len() || labels.is_empty() {
            return Err(Error::Scenario(
                "distribution needs one probability per label".into(),
            ));
        }
        let mut ps = probabilities;
        for p in &mut ps {
            if !(*p >= -SPEC_TOL) {
                return Err(Error::Scenario(format!("negative probability {p}")));
            }
            *p = p.max(0.0);
        }
        let total: f64 = ps.iter().sum();
        if (total - 1.0).abs() > SPEC_TOL {
            return Err(Error::Scenario(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(OutcomeDistribution {
            labels,
            probabilities: ps,
            counts: None,
        })
    }

    /// Empirical frequencies `count / total`; the rational frequencies sum
    /// to one exactly.
    pub fn from_counts(labels: Vec<String>, counts: Vec<u64>) -> Result<OutcomeDistribution> {
        if labels.len() != counts.len() || labels.is_empty() {
            return Err(Error::Scenario("distribution needs one count per label".into()));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Scenario("empirical distribution with no samples".into()));
        }
        let probabilities = counts.iter().map(|&k| k as f64 / total as f64).collect();
        Ok(OutcomeDistribution {
            labels,
            probabilities,
            counts: Some(counts),
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn is_empirical(&self) -> bool {
        self.counts.is_some()
    }

    pub fn probability(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.probabilities[i])
    }

    /// Total-variation distance to another distribution over the same
    /// labels (order-insensitive).
    pub fn total_variation_from(&self, other: &OutcomeDistribution) -> Result<f64> {
        let mut sum = 0.0;
        for (l, p) in self.labels.iter().zip(&self.probabilities) {
            let q = other
                .probability(l)
                .ok_or_else(|| Error::Scenario(format!("label '{l}' missing from comparison")))?;
            sum += (p - q).abs();
        }
        if other.labels.len() != self.labels.len() {
            return Err(Error::Scenario("label sets differ".into()));
        }
        Ok(0.5 * sum)
    }
}

/// Born weights `p_alpha = |P_alpha psi|^2` for a normalized state; the
/// null outcome, if declared, absorbs the remaining mass.
pub fn outcome_probabilities(
    psi: &WaveFunction,
    spec: &ExperimentSpec,
) -> Result<OutcomeDistribution> {
    spec.check_state(psi)?;
    spec.require_resolution()?;
    let defect = (psi.norm_squared() - 1.0).abs();
    if !(defect <= NORM_TOL) {
        return Err(Error::NotNormalized { defect });
    }
    let mut ps = Vec::with_capacity(spec.outcomes.len() + 1);
    for i in 0..spec.outcomes.len() {
        ps.push(spec.apply(i, psi)?.norm_squared());
    }
    if spec.null.is_some() {
        let assigned: f64 = ps.iter().sum();
        ps.push((1.0 - assigned).max(0.0));
    }
    OutcomeDistribution::exact(spec.labels(), ps)
}

/// The calibrated sum `A = sum_alpha lambda_alpha P_alpha`, kept in
/// projector form so its eigenstructure stays readable.
#[derive(Clone, Debug)]
pub struct AssembledOperator {
    spec: ExperimentSpec,
}

impl AssembledOperator {
    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    /// Eigenvalues in label order (calibrations; the null remainder's
    /// calibration last when declared).
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.spec.calibrations()
    }

    pub fn apply(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        self.spec.check_state(psi)?;
        let mut out = vec![Complex64::new(0.0, 0.0); psi.amplitudes().len()];
        let mut assigned = vec![Complex64::new(0.0, 0.0); psi.amplitudes().len()];
        for (i, o) in self.spec.outcomes.iter().enumerate() {
            let part = self.spec.apply(i, psi)?;
            for (k, a) in part.amplitudes().iter().enumerate() {
                out[k] += o.calibration * a;
                assigned[k] += a;
            }
        }
        if let Some((_, c)) = &self.spec.null {
            for ((o, s), a) in out.iter_mut().zip(assigned).zip(psi.amplitudes()) {
                *o += c * (a - s);
            }
        }
        WaveFunction::from_amplitudes(
            self.spec.grid.clone(),
            self.spec.spin_dim,
            psi.time(),
            out,
        )
    }

    /// Real expected value `<psi, A psi>`.
    pub fn expectation(&self, psi: &WaveFunction) -> Result<f64> {
        Ok(inner_product(psi, &self.apply(psi)?)?.re)
    }

    /// Row-major Gram matrix `<b_i, A b_j>` in a declared finite basis.
    pub fn matrix_in_basis(&self, basis: &[WaveFunction]) -> Result<Vec<Complex64>> {
        let n = basis.len();
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let abj = self.apply(&basis[j])?;
            for i in 0..n {
                m[i * n + j] = inner_product(&basis[i], &abj)?;
            }
        }
        Ok(m)
    }
}

/// Assemble the self-adjoint operator encoded by a spec.
pub fn assemble_operator(spec: &ExperimentSpec) -> Result<AssembledOperator> {
    spec.require_resolution()?;
    Ok(AssembledOperator { spec: spec.clone() })
}

/// Total map from a composite configuration to a finite value space: the
/// coarse-grained pointer reading.
pub struct PointerFunction {
    labels: Vec<String>,
    classify: Box<dyn Fn(&[f64]) -> usize + Send + Sync>,
}

impl PointerFunction {
    pub fn new(
        labels: Vec<String>,
        classify: impl Fn(&[f64]) -> usize + Send + Sync + 'static,
    ) -> Result<PointerFunction> {
        if labels.is_empty() {
            return Err(Error::Scenario("pointer function needs at least one value".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Scenario(format!("duplicate pointer value '{l}'")));
            }
        }
        Ok(PointerFunction {
            labels,
            classify: Box::new(classify),
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn value(&self, q: &[f64]) -> Result<usize> {
        let v = (self.classify)(q);
        if v >= self.labels.len() {
            return Err(Error::Scenario(format!(
                "pointer function returned {v}, but only {} values are declared",
                self.labels.len()
            )));
        }
        Ok(v)
    }
}

impl fmt::Debug for PointerFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointerFunction")
            .field("labels", &self.labels)
            .finish_non_exhaustive()
    }
}

/// Fixed apparatus side of a pointer measurement: the ready state, the
/// coupling dynamics on the composite grid, and the pointer map.
pub struct PovSetup<'a> {
    pub apparatus: &'a WaveFunction,
    /// Potential on the composite grid (system axes first).
    pub pot: &'a PotentialSpec,
    /// Propagator whose units cover the composite grid.
    pub prop: &'a Propagator,
    pub n_steps: usize,
    pub pointer: &'a PointerFunction,
}

#[derive(Clone, Debug)]
pub struct PovReport {
    pub exact: OutcomeDistribution,
    pub empirical: OutcomeDistribution,
    pub psi_final: WaveFunction,
}

fn pointer_map(grid: &Grid, pointer: &PointerFunction) -> Result<Vec<usize>> {
    let mut q = vec![0.0; grid.dims()];
    (0..grid.len())
        .map(|p| {
            grid.node_coords(p, &mut q);
            pointer.value(&q)
        })
        .collect()
}

fn masses_by_value(psi: &WaveFunction, map: &[usize], k: usize) -> Vec<f64> {
    let rho = density(psi);
    let mut m = vec![0.0; k];
    for (&label, r) in map.iter().zip(&rho) {
        m[label] += r;
    }
    let dv = psi.grid().cell_volume();
    for v in &mut m {
        *v *= dv;
    }
    m
}

fn pov_evolved(chi: &WaveFunction, setup: &PovSetup) -> Result<WaveFunction> {
    let composite = packets::tensor_product(chi, setup.apparatus)?;
    propagate::evolve(&composite, setup.pot, setup.prop, setup.n_steps)
}

/// The measurement pipeline: system state -> system ⊗ apparatus -> evolved
/// composite -> configuration distribution -> pointer statistics. Returns
/// the exact pushforward of `|Psi_t|^2` through the pointer map alongside an
/// empirical version from `n_samples` configurations.
pub fn pov_pipeline(
    psi: &WaveFunction,
    setup: &PovSetup,
    n_samples: usize,
    seed: u64,
) -> Result<PovReport> {
    let defect = (psi.norm_squared() - 1.0).abs();
    if !(defect <= NORM_TOL) {
        return Err(Error::NotNormalized { defect });
    }
    let final_state = pov_evolved(psi, setup)?;
    let map = pointer_map(final_state.grid(), setup.pointer)?;
    let k = setup.pointer.labels().len();
    let masses = masses_by_value(&final_state, &map, k);
    let exact = OutcomeDistribution::exact(setup.pointer.labels().to_vec(), masses)?;

    let ensemble = sample_density(&final_state, n_samples, seed)?;
    let mut counts = vec![0u64; k];
    for member in ensemble.iter() {
        counts[setup.pointer.value(member)?] += 1;
    }
    let empirical = OutcomeDistribution::from_counts(setup.pointer.labels().to_vec(), counts)?;
    Ok(PovReport {
        exact,
        empirical,
        psi_final: final_state,
    })
}

/// Sesquilinearity audit of the exact pipeline statistics.
#[derive(Clone, Debug)]
pub struct BilinearityReport {
    pub outcome: String,
    /// Gram matrix of the form for the requested outcome, row-major over
    /// the test basis.
    pub b_matrix: Vec<Complex64>,
    pub max_additivity_defect: f64,
    pub max_symmetry_defect: f64,
    /// Smallest diagonal value across all outcomes and basis states.
    pub min_diagonal: f64,
    /// Largest deviation of the outcome-summed diagonal from the state's
    /// squared norm.
    pub max_norm_defect: f64,
}

impl BilinearityReport {
    pub fn max_defect(&self) -> f64 {
        self.max_additivity_defect
            .max(self.max_symmetry_defect)
            .max((-self.min_diagonal).max(0.0))
            .max(self.max_norm_defect)
    }
}

/// Check that the exact pointer masses come from a sesquilinear form: for
/// each outcome the polarization of `Q(chi) = mass(chi)` must be additive,
/// conjugate-symmetric, nonnegative on the diagonal, and sum over outcomes
/// to the squared norm.
pub fn pov_bilinearity_check(
    setup: &PovSetup,
    basis: &[WaveFunction],
    outcome: &str,
) -> Result<BilinearityReport> {
    if basis.len() < 2 {
        return Err(Error::Scenario("bilinearity check needs at least two basis states".into()));
    }
    let outcome_index = setup
        .pointer
        .labels()
        .iter()
        .position(|l| l == outcome)
        .ok_or_else(|| Error::Scenario(format!("unknown outcome '{outcome}'")))?;
    for b in &basis[1..] {
        basis[0].same_shape(b)?;
    }
    let k = setup.pointer.labels().len();
    let nb = basis.len();

    let mut map: Option<Vec<usize>> = None;
    let mut q_masses = |chi: &WaveFunction| -> Result<Vec<f64>> {
        let evolved = pov_evolved(chi, setup)?;
        if map.is_none() {
            map = Some(pointer_map(evolved.grid(), setup.pointer)?);
        }
        Ok(masses_by_value(&evolved, map.as_ref().unwrap(), k))
    };

    // B(psi, phi) per outcome by polarization; conjugate-linear in psi.
    let one = Complex64::new(1.0, 0.0);
    let i_unit = Complex64::new(0.0, 1.0);
    let mut polarize = |psi: &WaveFunction, phi: &WaveFunction| -> Result<Vec<Complex64>> {
        let q_pp = q_masses(&packets::superpose(&[(one, psi), (one, phi)])?)?;
        let q_pm = q_masses(&packets::superpose(&[(one, psi), (-one, phi)])?)?;
        let q_pi = q_masses(&packets::superpose(&[(one, psi), (i_unit, phi)])?)?;
        let q_mi = q_masses(&packets::superpose(&[(one, psi), (-i_unit, phi)])?)?;
        Ok((0..k)
            .map(|o| {
                0.25 * Complex64::new(q_pp[o] - q_pm[o], q_mi[o] - q_pi[o])
            })
            .collect())
    };

    let mut gram = vec![Complex64::new(0.0, 0.0); k * nb * nb];
    for i in 0..nb {
        for j in 0..nb {
            let b = polarize(&basis[i], &basis[j])?;
            for o in 0..k {
                gram[(o * nb + i) * nb + j] = b[o];
            }
        }
    }

    let mut max_symmetry = 0.0f64;
    let mut min_diagonal = f64::INFINITY;
    let mut max_norm_defect = 0.0f64;
    for o in 0..k {
        for i in 0..nb {
            for j in 0..nb {
                let bij = gram[(o * nb + i) * nb + j];
                let bji = gram[(o * nb + j) * nb + i];
                max_symmetry = max_symmetry.max((bij - bji.conj()).norm());
            }
            min_diagonal = min_diagonal.min(gram[(o * nb + i) * nb + i].re);
        }
    }
    for i in 0..nb {
        let total: Complex64 = (0..k).map(|o| gram[(o * nb + i) * nb + i]).sum();
        max_norm_defect =
            max_norm_defect.max((total - basis[i].norm_squared()).norm());
    }

    // Additivity in the first argument against a fixed probe.
    let probe = &basis[0];
    let mut max_additivity = 0.0f64;
    for i in 0..nb {
        for j in i + 1..nb {
            let sum_state = packets::superpose(&[(one, &basis[i]), (one, &basis[j])])?;
            let b_sum = polarize(&sum_state, probe)?;
            for o in 0..k {
                let parts = gram[(o * nb + i) * nb] + gram[(o * nb + j) * nb];
                max_additivity = max_additivity.max((b_sum[o] - parts).norm());
            }
        }
    }

    let b_matrix = gram[(outcome_index * nb * nb)..((outcome_index + 1) * nb * nb)].to_vec();
    Ok(BilinearityReport {
        outcome: outcome.to_string(),
        b_matrix,
        max_additivity_defect: max_additivity,
        max_symmetry_defect: max_symmetry,
        min_diagonal,
        max_norm_defect,
    })
}

/// Which way the magnet is wired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Normal,
    /// Field (and with it the detector calibration) reversed.
    Flipped,
}

/// Beam-splitting scenario on a 1D deflection grid or a 2D
/// (transport, deflection) grid; the deflection axis is always the last.
#[derive(Clone, Debug)]
pub struct SgConfig {
    pub grid: Grid,
    pub units: Units,
    /// Spin-up amplitude of the prepared spinor.
    pub up: Complex64,
    /// Spin-down amplitude.
    pub down: Complex64,
    pub center: Vec<f64>,
    pub sigma: Vec<f64>,
    pub momentum: Vec<f64>,
    /// Uniform field offset along z (pure phase between the components).
    pub b0: f64,
    /// Field gradient along the deflection axis; negative values deflect
    /// spin-up toward positive z.
    pub b1: f64,
    /// Coupling strength of the spin term.
    pub g: f64,
    /// Time spent inside the magnet.
    pub t_field: f64,
    /// Free flight after the magnet, up to readout.
    pub t_drift: f64,
    pub dt: f64,
    pub dt_traj: f64,
    pub scheme: Scheme,
    pub record_stride: usize,
    /// Detector boundary on the deflection axis.
    pub z_split: f64,
    /// Largest tolerated wrong-side mass at readout.
    pub overlap_limit: f64,
}

impl SgConfig {
    /// 1D deflection-axis model sized so the branches sit ~14 sigma apart
    /// at readout.
    pub fn standard_1d(up: Complex64, down: Complex64) -> Result<SgConfig> {
        Ok(SgConfig {
            grid: Grid::new(&[(-28.0, 28.0, 1024)])?,
            units: Units::uniform(1.0, 1)?,
            up,
            down,
            center: vec![0.0],
            sigma: vec![1.0],
            momentum: vec![0.0],
            b0: 0.0,
            b1: -1.0,
            g: 10.0,
            t_field: 0.5,
            t_drift: 2.0,
            dt: 2.5e-3,
            dt_traj: 2.5e-2,
            scheme: Scheme::ExplicitMidpoint,
            record_stride: 10,
            z_split: 0.0,
            overlap_limit: 1e-6,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SgReport {
    /// Calibrated value per trajectory (+1 up, -1 down).
    pub values: Vec<f64>,
    pub empirical: OutcomeDistribution,
    /// Spin-component masses at readout (the Born weights).
    pub exact: OutcomeDistribution,
    pub up_fraction: f64,
    pub mean_value: f64,
    pub cross_mass: f64,
    pub trajectories: Vec<Trajectory>,
    pub psi_final: WaveFunction,
}

fn steps_of(interval: f64, dt_traj: f64) -> Result<usize> {
    if interval == 0.0 {
        return Ok(0);
    }
    let ratio = interval / dt_traj;
    let n = ratio.round();
    if !(interval > 0.0) || n < 1.0 || (ratio - n).abs() > 1e-9 {
        return Err(Error::IncompatibleTimestep(format!(
            "interval {interval} is not a positive multiple of dt_traj = {dt_traj}"
        )));
    }
    Ok(n as usize)
}

fn sg_field_potential(cfg: &SgConfig, sign: f64) -> Result<PotentialSpec> {
    let grid = &cfg.grid;
    let zax = grid.dims() - 1;
    let mut b = Vec::with_capacity(grid.len());
    let mut q = vec![0.0; grid.dims()];
    for p in 0..grid.len() {
        grid.node_coords(p, &mut q);
        b.push([0.0, 0.0, sign * (cfg.b0 + cfg.b1 * q[zax])]);
    }
    PotentialSpec::free(grid).with_magnetic(b, cfg.g)
}

fn join_trajectories(first: Vec<Trajectory>, second: Vec<Trajectory>) -> Vec<Trajectory> {
    first
        .into_iter()
        .zip(second)
        .map(|(a, b)| {
            let d = a.dims();
            let mut times = a.times().to_vec();
            let mut points = a.points().to_vec();
            // The second leg re-records its starting configuration.
            times.extend_from_slice(&b.times()[1..]);
            points.extend_from_slice(&b.points()[d..]);
            Trajectory::from_parts(a.member(), d, times, points)
        })
        .collect()
}

fn sg_run(
    psi0: &WaveFunction,
    ensemble: &Ensemble,
    cfg: &SgConfig,
    orientation: Orientation,
) -> Result<SgReport> {
    if psi0.spin_dim() != 2 {
        return Err(Error::SpinDimMismatch(format!(
            "beam state must have two spin components, got {}",
            psi0.spin_dim()
        )));
    }
    if psi0.grid() != &cfg.grid {
        return Err(Error::GridMismatch("beam state grid does not match the scenario".into()));
    }
    let defect = (psi0.norm_squared() - 1.0).abs();
    if !(defect <= NORM_TOL) {
        return Err(Error::NotNormalized { defect });
    }
    let zax = cfg.grid.dims() - 1;
    let sign = match orientation {
        Orientation::Normal => 1.0,
        Orientation::Flipped => -1.0,
    };
    // Side of the split toward which the spin-up branch deflects: the field
    // phase exp(-i g B1_eff z t) boosts the up component by -g * B1_eff * t.
    let up_side: i8 = if -cfg.g * sign * cfg.b1 >= 0.0 { 1 } else { -1 };

    let n_field = steps_of(cfg.t_field, cfg.dt_traj)?;
    let n_drift = steps_of(cfg.t_drift, cfg.dt_traj)?;
    let prop = Propagator::new(Method::SplitOperator, cfg.dt, cfg.units.clone())?;
    let adv = AdvectConfig {
        integrator: IntegratorSpec {
            scheme: cfg.scheme,
            dt_traj: cfg.dt_traj,
        },
        guidance: GuidanceParams::for_grid(&cfg.grid, cfg.dt_traj),
        record_stride: cfg.record_stride,
    };

    let field_pot = sg_field_potential(cfg, sign)?;
    let first = advect(ensemble, psi0, &field_pot, &prop, &adv, n_field)?;
    if !first.escaped.is_empty() {
        return Err(Error::Scenario(format!(
            "{} members left the box inside the magnet; enlarge the grid",
            first.escaped.len()
        )));
    }
    let d = cfg.grid.dims();
    let mut mid_positions = Vec::with_capacity(ensemble.len() * d);
    for t in &first.trajectories {
        mid_positions.extend_from_slice(t.final_point());
    }
    let mid_ens = Ensemble::from_positions(d, mid_positions, ensemble.rng_seed())?;
    let free_pot = PotentialSpec::free(&cfg.grid);
    let second = advect(&mid_ens, &first.psi_final, &free_pot, &prop, &adv, n_drift)?;
    if !second.escaped.is_empty() {
        return Err(Error::Scenario(format!(
            "{} members left the box during the drift; enlarge the grid",
            second.escaped.len()
        )));
    }

    let psi_final = second.psi_final.clone();
    let trajectories = join_trajectories(first.trajectories, second.trajectories);

    // Wrong-side mass at readout: spin-up density on the far side of the
    // split plus spin-down density on the near side.
    let dv = cfg.grid.cell_volume();
    let mut q = vec![0.0; d];
    let mut cross_mass = 0.0;
    let mut p_up_exact = 0.0;
    let mut p_down_exact = 0.0;
    for p in 0..cfg.grid.len() {
        cfg.grid.node_coords(p, &mut q);
        let side: i8 = if q[zax] >= cfg.z_split { 1 } else { -1 };
        let rho_up = psi_final.amp(p, 0).norm_sqr();
        let rho_down = psi_final.amp(p, 1).norm_sqr();
        p_up_exact += rho_up;
        p_down_exact += rho_down;
        if side == up_side {
            cross_mass += rho_down;
        } else {
            cross_mass += rho_up;
        }
    }
    cross_mass *= dv;
    p_up_exact *= dv;
    p_down_exact *= dv;
    if !(cross_mass <= cfg.overlap_limit) {
        return Err(Error::OverlapAtReadout {
            cross_mass,
            limit: cfg.overlap_limit,
        });
    }

    let mut values = Vec::with_capacity(trajectories.len());
    let mut up_count = 0u64;
    for t in &trajectories {
        let side: i8 = if t.final_point()[zax] >= cfg.z_split { 1 } else { -1 };
        if side == up_side {
            up_count += 1;
            values.push(1.0);
        } else {
            values.push(-1.0);
        }
    }
    let n = values.len() as f64;
    let labels = vec!["up".to_string(), "down".to_string()];
    let empirical =
        OutcomeDistribution::from_counts(labels.clone(), vec![up_count, values.len() as u64 - up_count])?;
    let exact = OutcomeDistribution::exact(labels, vec![p_up_exact, p_down_exact])?;
    Ok(SgReport {
        up_fraction: up_count as f64 / n,
        mean_value: values.iter().sum::<f64>() / n,
        values,
        empirical,
        exact,
        cross_mass,
        trajectories,
        psi_final,
    })
}

/// Run the beam-splitting experiment on the spinor packet described by the
/// config, sampling `n_traj` initial configurations from its density.
pub fn stern_gerlach(cfg: &SgConfig, n_traj: usize, seed: u64) -> Result<SgReport> {
    let psi0 = sg_initial_state(cfg)?;
    stern_gerlach_on(&psi0, cfg, n_traj, seed)
}

/// Same experiment, but on an arbitrary prepared two-component state (for
/// re-running a branch through the apparatus).
pub fn stern_gerlach_on(
    psi0: &WaveFunction,
    cfg: &SgConfig,
    n_traj: usize,
    seed: u64,
) -> Result<SgReport> {
    let ens = sample_density(psi0, n_traj, seed)?;
    sg_run(psi0, &ens, cfg, Orientation::Normal)
}

fn sg_initial_state(cfg: &SgConfig) -> Result<WaveFunction> {
    let spatial = packets::gaussian(&cfg.grid, &cfg.center, &cfg.sigma, &cfg.momentum)?;
    packets::spinor_product(&[cfg.up, cfg.down], &spatial)
}

/// The reported outcome for one initial configuration.
#[derive(Clone, Debug)]
pub struct ContextualityOutcome {
    pub label: String,
    /// Calibrated value the device reports (+1 or -1).
    pub value: f64,
    /// Side of the symmetry plane the configuration started on.
    pub initial_side: i8,
    pub final_side: i8,
}

fn check_symmetric(cfg: &SgConfig) -> Result<()> {
    let zax = cfg.grid.dims() - 1;
    let ax = cfg.grid.axis(zax);
    let mut problems = Vec::new();
    if ax.lo != -ax.hi {
        problems.push("deflection axis box is not centered on zero");
    }
    if cfg.center[zax] != 0.0 {
        problems.push("packet is not centered on the plane");
    }
    if cfg.momentum[zax] != 0.0 {
        problems.push("packet carries deflection-axis momentum");
    }
    if cfg.b0 != 0.0 {
        problems.push("uniform field offset breaks the reflection symmetry");
    }
    if cfg.z_split != 0.0 {
        problems.push("detector split is off the symmetry plane");
    }
    if (cfg.up.norm() - cfg.down.norm()).abs() > 1e-12 {
        problems.push("spin amplitudes have unequal weight");
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Scenario(format!(
            "scenario is not reflection-symmetric: {}",
            problems.join("; ")
        )))
    }
}

/// Deterministic single-configuration run of the symmetric scenario: the
/// outcome is fixed by which side of the plane `q0` starts on, and flipping
/// the field (with its calibration) reverses the reported value.
pub fn contextuality_demo(
    q0: &[f64],
    orientation: Orientation,
    cfg: &SgConfig,
) -> Result<ContextualityOutcome> {
    check_symmetric(cfg)?;
    let zax = cfg.grid.dims() - 1;
    if q0.len() != cfg.grid.dims() {
        return Err(Error::GridMismatch(
            "initial configuration dimension does not match the grid".into(),
        ));
    }
    if q0[zax] == 0.0 {
        return Err(Error::OnSymmetryPlane);
    }
    let initial_side: i8 = if q0[zax] > 0.0 { 1 } else { -1 };
    let psi0 = sg_initial_state(cfg)?;
    let ens = Ensemble::from_positions(cfg.grid.dims(), q0.to_vec(), 0)?;
    let report = sg_run(&psi0, &ens, cfg, orientation)?;
    let zf = report.trajectories[0].final_point()[zax];
    Ok(ContextualityOutcome {
        label: if report.values[0] > 0.0 { "up".into() } else { "down".into() },
        value: report.values[0],
        initial_side,
        final_side: if zf >= 0.0 { 1 } else { -1 },
    })
}

/// Ensemble version: `n` configurations sampled from the prepared density,
/// run through one orientation of the device.
pub fn contextuality_ensemble(
    n: usize,
    seed: u64,
    orientation: Orientation,
    cfg: &SgConfig,
) -> Result<SgReport> {
    check_symmetric(cfg)?;
    let psi0 = sg_initial_state(cfg)?;
    let ens = sample_density(&psi0, n, seed)?;
    sg_run(&psi0, &ens, cfg, orientation)
}
