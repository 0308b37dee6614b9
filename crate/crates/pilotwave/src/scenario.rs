//! Scenario runner: parse a TOML config, execute a named scenario, and
//! emit a deterministic artifact set (trajectories, field snapshots,
//! histograms, a check report, and a digest manifest), or verify the
//! scenario's checks without writing anything.
//!
//! Everything an artifact contains is a pure function of the config file
//! and the seed, so a rerun reproduces every byte and the manifest digests
//! can stand in CI. Numbers are printed in shortest round-trip form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{density, sample_density, Grid, Units, WaveFunction};
use crate::guidance::{velocity_field, GuidanceParams};
use crate::observables::{
    pov_bilinearity_check, pov_pipeline, stern_gerlach, ExperimentSpec, Orientation, OutcomeSpec,
    PointerFunction, PovSetup, Projection, SgConfig,
};
use crate::packets;
use crate::polar::{polar_decompose, quantum_potential};
use crate::propagate::{evolve_observed, Method, PotentialSpec, Propagator};
use crate::statistics::{binomial_band, ks_band, ks_statistic, Cdf1d};
use crate::subsystem::{
    conditional_probability_check, lln_quantum_equilibrium, Composite, EventPartition,
};
use crate::trajectory::{
    advect, crossing_check, plane_side_check, AdvectConfig, AdvectReport, IntegratorSpec, Scheme,
    Trajectory,
};

const FORMAT_VERSION: u32 = 1;
const HISTOGRAM_BINS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    FreePacket,
    Harmonic,
    DoubleSlit,
    SternGerlach,
    Contextuality,
    PovPipeline,
    Conditional,
    Lln,
    Equivariance,
}

impl ScenarioKind {
    pub const NAMES: [&'static str; 9] = [
        "free-packet",
        "harmonic",
        "double-slit",
        "stern-gerlach",
        "contextuality",
        "pov-pipeline",
        "conditional",
        "lln",
        "equivariance",
    ];

    fn from_name(name: &str) -> Result<ScenarioKind> {
        Ok(match name {
            "free-packet" => ScenarioKind::FreePacket,
            "harmonic" => ScenarioKind::Harmonic,
            "double-slit" => ScenarioKind::DoubleSlit,
            "stern-gerlach" => ScenarioKind::SternGerlach,
            "contextuality" => ScenarioKind::Contextuality,
            "pov-pipeline" => ScenarioKind::PovPipeline,
            "conditional" => ScenarioKind::Conditional,
            "lln" => ScenarioKind::Lln,
            "equivariance" => ScenarioKind::Equivariance,
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario `{other}`; expected one of: {}",
                    ScenarioKind::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::FreePacket => "free-packet",
            ScenarioKind::Harmonic => "harmonic",
            ScenarioKind::DoubleSlit => "double-slit",
            ScenarioKind::SternGerlach => "stern-gerlach",
            ScenarioKind::Contextuality => "contextuality",
            ScenarioKind::PovPipeline => "pov-pipeline",
            ScenarioKind::Conditional => "conditional",
            ScenarioKind::Lln => "lln",
            ScenarioKind::Equivariance => "equivariance",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct RawConfig {
    scenario: String,
    seed: u64,
    grid: Option<GridCfg>,
    units: Option<UnitsCfg>,
    potential: Option<PotentialCfg>,
    initial_psi: Option<PsiCfg>,
    ensemble: Option<EnsembleCfg>,
    propagator: Option<PropagatorCfg>,
    integrator: Option<IntegratorCfg>,
    output: Option<OutputCfg>,
    params: Option<toml::Table>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridCfg {
    axis: Vec<AxisCfg>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisCfg {
    lo: f64,
    hi: f64,
    n: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitsCfg {
    /// Naturalized mass per axis.
    mass: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialCfg {
    kind: String,
    omega: Option<f64>,
    center: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PsiCfg {
    kind: String,
    center: Option<Vec<f64>>,
    sigma: Option<Vec<f64>>,
    k: Option<Vec<f64>>,
    term: Option<Vec<TermCfg>>,
    /// Spinor coefficients as [re, im] pairs.
    spin: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermCfg {
    coeff: [f64; 2],
    center: Vec<f64>,
    sigma: Vec<f64>,
    k: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleCfg {
    size: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropagatorCfg {
    method: String,
    dt: f64,
    steps: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct IntegratorCfg {
    scheme: String,
    dt: f64,
    record_stride: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct OutputCfg {
    dir: Option<String>,
    snapshot_stride: Option<usize>,
}

/// A parsed and named scenario configuration, plus the digest of the raw
/// config text that every artifact's provenance block carries.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub config_sha256: String,
    raw: RawConfig,
}

impl ScenarioConfig {
    /// Output directory named in the config, if any (the CLI flag wins).
    pub fn out_dir(&self) -> Option<PathBuf> {
        self.raw
            .output
            .as_ref()
            .and_then(|o| o.dir.as_ref())
            .map(PathBuf::from)
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {}", e.message())))?;
    let kind = ScenarioKind::from_name(&raw.scenario)?;
    let config_sha256 = hex::encode(Sha256::digest(text.as_bytes()));
    Ok(ScenarioConfig {
        kind,
        seed: raw.seed,
        config_sha256,
        raw,
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Overrides that arrive from the command line rather than the config.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExecOptions {
    /// Field snapshot every this-many propagator steps; default writes
    /// only the initial and final fields.
    pub snapshot_stride: Option<usize>,
}

/// One named invariant check with its measured value; `passed` means
/// `measured <= tolerance`.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn check(name: &str, measured: f64, tolerance: f64) -> Check {
    Check {
        name: name.to_string(),
        measured,
        tolerance,
        passed: measured <= tolerance,
    }
}

#[derive(Clone, Debug)]
pub struct ArtifactFile {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub checks: Vec<Check>,
    pub artifacts: Vec<ArtifactFile>,
}

impl ScenarioOutcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Serialize)]
struct Provenance {
    scenario: &'static str,
    seed: u64,
    config_sha256: String,
    versions: Versions,
}

#[derive(Serialize)]
struct Versions {
    pilotwave: &'static str,
    format: u32,
}

fn provenance(cfg: &ScenarioConfig) -> Provenance {
    Provenance {
        scenario: cfg.kind.name(),
        seed: cfg.seed,
        config_sha256: cfg.config_sha256.clone(),
        versions: Versions {
            pilotwave: env!("CARGO_PKG_VERSION"),
            format: FORMAT_VERSION,
        },
    }
}

#[derive(Serialize)]
struct GridMeta {
    axes: Vec<AxisMeta>,
}

#[derive(Serialize)]
struct AxisMeta {
    lo: f64,
    hi: f64,
    n: usize,
}

fn grid_meta(grid: &Grid) -> GridMeta {
    GridMeta {
        axes: grid
            .axes()
            .iter()
            .map(|a| AxisMeta {
                lo: a.lo,
                hi: a.hi,
                n: a.n,
            })
            .collect(),
    }
}

#[derive(Serialize)]
struct FieldDoc<'a> {
    kind: &'static str,
    step: usize,
    time: f64,
    grid: GridMeta,
    spin_dim: usize,
    /// Row-major over grid points (last axis fastest), spin interleaved.
    layout: &'static str,
    re: Vec<f64>,
    im: Vec<f64>,
    provenance: &'a Provenance,
}

fn field_doc(psi: &WaveFunction, step: usize, prov: &Provenance) -> Vec<u8> {
    let doc = FieldDoc {
        kind: "wavefunction",
        step,
        time: psi.time(),
        grid: grid_meta(psi.grid()),
        spin_dim: psi.spin_dim(),
        layout: "row-major points, spin interleaved",
        re: psi.amplitudes().iter().map(|c| c.re).collect(),
        im: psi.amplitudes().iter().map(|c| c.im).collect(),
        provenance: prov,
    };
    to_json(&doc)
}

#[derive(Serialize)]
struct HistogramDoc<'a> {
    kind: &'static str,
    axis: usize,
    time: f64,
    grid: GridMeta,
    edges: Vec<f64>,
    counts: Vec<u64>,
    /// |psi|^2 mass per bin at the same time.
    expected_mass: Vec<f64>,
    provenance: &'a Provenance,
}

fn to_json<T: Serialize>(doc: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(doc).expect("artifact serialization");
    bytes.push(b'\n');
    bytes
}

fn trajectories_csv(trajectories: &[Trajectory]) -> Vec<u8> {
    let dims = trajectories.first().map_or(1, |t| t.dims());
    let mut s = String::from("member,t");
    for i in 1..=dims {
        let _ = write!(s, ",q{i}");
    }
    s.push('\n');
    for tr in trajectories {
        for (i, &t) in tr.times().iter().enumerate() {
            let _ = write!(s, "{},{:?}", tr.member(), t);
            for &q in tr.point(i) {
                let _ = write!(s, ",{q:?}");
            }
            s.push('\n');
        }
    }
    s.into_bytes()
}

fn position_histogram(
    trajectories: &[Trajectory],
    psi_final: &WaveFunction,
    axis: usize,
    prov: &Provenance,
) -> Vec<u8> {
    let ax = psi_final.grid().axis(axis);
    let width = ax.length() / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS)
        .map(|b| ax.lo + b as f64 * width)
        .collect();
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    for tr in trajectories {
        let x = tr.final_point()[axis];
        let b = (((x - ax.lo) / width).floor() as usize).min(HISTOGRAM_BINS - 1);
        counts[b] += 1;
    }
    let rho = density(psi_final);
    let cdf = Cdf1d::from_marginal(psi_final.grid(), &rho, axis).expect("marginal cdf");
    let expected_mass: Vec<f64> = (0..HISTOGRAM_BINS)
        .map(|b| cdf.eval(edges[b + 1]) - cdf.eval(edges[b]))
        .collect();
    to_json(&HistogramDoc {
        kind: "histogram",
        axis,
        time: psi_final.time(),
        grid: grid_meta(psi_final.grid()),
        edges,
        counts,
        expected_mass,
        provenance: prov,
    })
}

pub fn execute(cfg: &ScenarioConfig, opts: &ExecOptions) -> Result<ScenarioOutcome> {
    match cfg.kind {
        ScenarioKind::FreePacket => exec_spreading(cfg, opts, false),
        ScenarioKind::Equivariance => exec_spreading(cfg, opts, true),
        ScenarioKind::Harmonic => exec_harmonic(cfg, opts),
        ScenarioKind::DoubleSlit => exec_double_slit(cfg, opts),
        ScenarioKind::SternGerlach => exec_stern_gerlach(cfg),
        ScenarioKind::Contextuality => exec_contextuality(cfg),
        ScenarioKind::PovPipeline => exec_pov_pipeline(cfg),
        ScenarioKind::Conditional => exec_conditional(cfg),
        ScenarioKind::Lln => exec_lln(cfg),
    }
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    kind: &'static str,
    scenario: &'static str,
    checks: &'a [Check],
    all_passed: bool,
    provenance: &'a Provenance,
}

#[derive(Serialize)]
struct ManifestDoc<'a> {
    kind: &'static str,
    artifacts: Vec<ManifestEntry>,
    provenance: &'a Provenance,
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub checks: Vec<Check>,
    pub files_written: usize,
    pub all_passed: bool,
}

/// Execute the scenario and write its artifact set (plus `report.json` and
/// `manifest.json`) under `out_dir`.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path, opts: &ExecOptions) -> Result<RunSummary> {
    let outcome = execute(cfg, opts)?;
    let prov = provenance(cfg);
    let mut files = outcome.artifacts;
    files.push(ArtifactFile {
        path: "report.json".into(),
        bytes: to_json(&ReportDoc {
            kind: "report",
            scenario: cfg.kind.name(),
            checks: &outcome.checks,
            all_passed: outcome.checks.iter().all(|c| c.passed),
            provenance: &prov,
        }),
    });
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = ManifestDoc {
        kind: "manifest",
        artifacts: files
            .iter()
            .map(|f| ManifestEntry {
                path: f.path.clone(),
                sha256: hex::encode(Sha256::digest(&f.bytes)),
                bytes: f.bytes.len(),
            })
            .collect(),
        provenance: &prov,
    };
    files.push(ArtifactFile {
        path: "manifest.json".into(),
        bytes: to_json(&manifest),
    });

    for f in &files {
        let dest = out_dir.join(&f.path);
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&dest, &f.bytes)?;
    }
    Ok(RunSummary {
        all_passed: outcome.checks.iter().all(|c| c.passed),
        checks: outcome.checks,
        files_written: files.len(),
    })
}

/// Execute the scenario's checks without writing anything.
pub fn verify(cfg: &ScenarioConfig, opts: &ExecOptions) -> Result<Vec<Check>> {
    Ok(execute(cfg, opts)?.checks)
}

fn need<'a, T>(opt: &'a Option<T>, kind: ScenarioKind, section: &str) -> Result<&'a T> {
    opt.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "scenario `{}` requires section `{section}`",
            kind.name()
        ))
    })
}

fn forbid<T>(opt: &Option<T>, kind: ScenarioKind, section: &str) -> Result<()> {
    if opt.is_some() {
        return Err(Error::Config(format!(
            "section `{section}` is not used by scenario `{}`",
            kind.name()
        )));
    }
    Ok(())
}

fn parse_params<T: serde::de::DeserializeOwned>(raw: &RawConfig) -> Result<T> {
    let table = raw.params.clone().unwrap_or_default();
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("params: {}", e.message())))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

fn build_grid(cfg: &GridCfg) -> Result<Grid> {
    let extents: Vec<(f64, f64, usize)> = cfg.axis.iter().map(|a| (a.lo, a.hi, a.n)).collect();
    Grid::new(&extents)
}

fn build_units(cfg: &Option<UnitsCfg>, grid: &Grid) -> Result<Units> {
    match cfg {
        None => Units::uniform(1.0, grid.dims()),
        Some(u) => {
            if u.mass.len() != grid.dims() {
                return Err(Error::Config(format!(
                    "units.mass needs one entry per axis ({} given, {} axes)",
                    u.mass.len(),
                    grid.dims()
                )));
            }
            Units::per_axis(u.mass.clone())
        }
    }
}

fn build_potential(
    cfg: &Option<PotentialCfg>,
    grid: &Grid,
    units: &Units,
) -> Result<PotentialSpec> {
    let Some(p) = cfg else {
        return Ok(PotentialSpec::free(grid));
    };
    match p.kind.as_str() {
        "free" => {
            if p.omega.is_some() || p.center.is_some() {
                return Err(Error::Config(
                    "potential: `omega`/`center` only apply to kind = \"harmonic\"".into(),
                ));
            }
            Ok(PotentialSpec::free(grid))
        }
        "harmonic" => {
            let omega = p.omega.ok_or_else(|| {
                Error::Config("potential: kind = \"harmonic\" needs `omega`".into())
            })?;
            if !(omega > 0.0) {
                return Err(Error::Config("potential.omega must be positive".into()));
            }
            let center = match &p.center {
                None => vec![0.0; grid.dims()],
                Some(c) if c.len() == grid.dims() => c.clone(),
                Some(c) => {
                    return Err(Error::Config(format!(
                        "potential.center needs one entry per axis ({} given)",
                        c.len()
                    )))
                }
            };
            let mus: Vec<f64> = (0..grid.dims()).map(|i| units.mu(i)).collect();
            PotentialSpec::from_fn(grid, |q| {
                0.5 * omega
                    * omega
                    * q.iter()
                        .zip(&center)
                        .zip(&mus)
                        .map(|((x, c), mu)| mu * (x - c) * (x - c))
                        .sum::<f64>()
            })
        }
        other => Err(Error::Config(format!(
            "potential.kind `{other}` is not one of: free, harmonic"
        ))),
    }
}

fn psi_vectors(cfg: &PsiCfg, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let d = grid.dims();
    let take = |v: &Option<Vec<f64>>, key: &str| -> Result<Vec<f64>> {
        let v = v
            .as_ref()
            .ok_or_else(|| Error::Config(format!("initial-psi: `{key}` is required")))?;
        if v.len() != d {
            return Err(Error::Config(format!(
                "initial-psi.{key} needs one entry per axis ({} given, {d} axes)",
                v.len()
            )));
        }
        Ok(v.clone())
    };
    Ok((
        take(&cfg.center, "center")?,
        take(&cfg.sigma, "sigma")?,
        take(&cfg.k, "k")?,
    ))
}

fn build_psi(cfg: &PsiCfg, grid: &Grid) -> Result<WaveFunction> {
    match cfg.kind.as_str() {
        "gaussian" => {
            if cfg.term.is_some() || cfg.spin.is_some() {
                return Err(Error::Config(
                    "initial-psi: `term`/`spin` do not apply to kind = \"gaussian\"".into(),
                ));
            }
            let (center, sigma, k) = psi_vectors(cfg, grid)?;
            packets::gaussian(grid, &center, &sigma, &k)
        }
        "superposition" => {
            if cfg.center.is_some() || cfg.sigma.is_some() || cfg.k.is_some() || cfg.spin.is_some()
            {
                return Err(Error::Config(
                    "initial-psi: kind = \"superposition\" takes only `term` tables".into(),
                ));
            }
            let terms = cfg.term.as_ref().filter(|t| !t.is_empty()).ok_or_else(|| {
                Error::Config("initial-psi: superposition needs at least one [[initial-psi.term]]".into())
            })?;
            let packets_: Result<Vec<WaveFunction>> = terms
                .iter()
                .map(|t| packets::gaussian(grid, &t.center, &t.sigma, &t.k))
                .collect();
            let packets_ = packets_?;
            let weighted: Vec<(Complex64, &WaveFunction)> = terms
                .iter()
                .zip(&packets_)
                .map(|(t, p)| (Complex64::new(t.coeff[0], t.coeff[1]), p))
                .collect();
            packets::superpose(&weighted)?.normalized()
        }
        "spinor" => {
            let spin = cfg.spin.as_ref().ok_or_else(|| {
                Error::Config("initial-psi: kind = \"spinor\" needs `spin` coefficients".into())
            })?;
            if cfg.term.is_some() {
                return Err(Error::Config(
                    "initial-psi: `term` does not apply to kind = \"spinor\"".into(),
                ));
            }
            let (center, sigma, k) = psi_vectors(cfg, grid)?;
            let spatial = packets::gaussian(grid, &center, &sigma, &k)?;
            let coeffs: Vec<Complex64> = spin
                .iter()
                .map(|[re, im]| Complex64::new(*re, *im))
                .collect();
            packets::spinor_product(&coeffs, &spatial)
        }
        other => Err(Error::Config(format!(
            "initial-psi.kind `{other}` is not one of: gaussian, superposition, spinor"
        ))),
    }
}

fn build_propagator(cfg: &PropagatorCfg, units: &Units) -> Result<Propagator> {
    let method = match cfg.method.as_str() {
        "split-operator" => Method::SplitOperator,
        "crank-nicolson" => Method::CrankNicolson,
        other => {
            return Err(Error::Config(format!(
                "propagator.method `{other}` is not one of: split-operator, crank-nicolson"
            )))
        }
    };
    Propagator::new(method, cfg.dt, units.clone())
}

fn build_scheme(name: &str) -> Result<Scheme> {
    match name {
        "midpoint" => Ok(Scheme::ExplicitMidpoint),
        "rk4" => Ok(Scheme::Rk4),
        other => Err(Error::Config(format!(
            "integrator.scheme `{other}` is not one of: midpoint, rk4"
        ))),
    }
}

/// Propagator steps per trajectory step.
fn traj_chunk(dt_traj: f64, dt: f64) -> Result<usize> {
    let ratio = dt_traj / dt;
    let k = ratio.round() as usize;
    if !(dt_traj > 0.0) || k == 0 || (ratio - k as f64).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "integrator.dt = {dt_traj} must be a positive integer multiple of propagator.dt = {dt}"
        )));
    }
    Ok(k)
}

fn traj_steps(dt_traj: f64, dt: f64, prop_steps: usize) -> Result<usize> {
    let k = traj_chunk(dt_traj, dt)?;
    if prop_steps == 0 || prop_steps % k != 0 {
        return Err(Error::Config(format!(
            "propagator.steps = {prop_steps} must be a positive multiple of integrator.dt / propagator.dt = {k}"
        )));
    }
    Ok(prop_steps / k)
}

struct WaveRun {
    trajectories: Vec<Trajectory>,
    escaped: usize,
    psi_final: WaveFunction,
    snapshots: Vec<(usize, Vec<u8>)>,
    samples: usize,
}

/// Shared engine for the wave + ensemble scenarios: sample |psi0|^2,
/// advect, and collect field snapshots from an identical second pass of
/// the propagator.
#[allow(clippy::too_many_arguments)]
fn wave_run(
    cfg: &ScenarioConfig,
    opts: Option<&ExecOptions>,
    psi0: &WaveFunction,
    pot: &PotentialSpec,
    prop: &Propagator,
    integrator: &IntegratorCfg,
    prop_steps: usize,
    prov: &Provenance,
) -> Result<WaveRun> {
    let ensemble_cfg = need(&cfg.raw.ensemble, cfg.kind, "ensemble")?;
    if ensemble_cfg.size == 0 {
        return Err(Error::Config("ensemble.size must be positive".into()));
    }
    let n_traj_steps = traj_steps(integrator.dt, prop.dt, prop_steps)?;
    let ensemble = sample_density(psi0, ensemble_cfg.size, cfg.seed)?;
    let advect_cfg = AdvectConfig {
        integrator: IntegratorSpec {
            scheme: build_scheme(&integrator.scheme)?,
            dt_traj: integrator.dt,
        },
        guidance: GuidanceParams::for_grid(psi0.grid(), integrator.dt),
        record_stride: integrator.record_stride.unwrap_or(1),
    };
    let report: AdvectReport = advect(&ensemble, psi0, pot, prop, &advect_cfg, n_traj_steps)?;

    let mut snapshots = Vec::new();
    let stride = opts
        .and_then(|o| o.snapshot_stride)
        .or(cfg.raw.output.as_ref().and_then(|o| o.snapshot_stride))
        .unwrap_or(prop_steps)
        .max(1);
    let psi_final = evolve_observed(psi0, pot, prop, prop_steps, stride, |step, psi| {
        snapshots.push((step, field_doc(psi, step, prov)));
    })?;
    if prop_steps % stride != 0 {
        // The final field goes on disk even when the stride skips it.
        snapshots.push((prop_steps, field_doc(&psi_final, prop_steps, prov)));
    }
    Ok(WaveRun {
        trajectories: report.trajectories,
        escaped: report.escaped.len(),
        psi_final,
        snapshots,
        samples: ensemble_cfg.size,
    })
}

fn wave_artifacts(run: &WaveRun, prov: &Provenance) -> Vec<ArtifactFile> {
    let mut artifacts = vec![ArtifactFile {
        path: "trajectories.csv".into(),
        bytes: trajectories_csv(&run.trajectories),
    }];
    for (step, bytes) in &run.snapshots {
        artifacts.push(ArtifactFile {
            path: format!("fields/snapshot_{step:06}.json"),
            bytes: bytes.clone(),
        });
    }
    artifacts.push(ArtifactFile {
        path: "histograms/final-positions.json".into(),
        bytes: position_histogram(&run.trajectories, &run.psi_final, 0, prov),
    });
    artifacts
}

fn unitarity_check(psi_final: &WaveFunction) -> Check {
    check(
        "unitarity-drift",
        (psi_final.norm_squared() - 1.0).abs(),
        1e-10,
    )
}

fn ks_check(run: &WaveRun) -> Check {
    let mut finals: Vec<f64> = run
        .trajectories
        .iter()
        .map(|t| t.final_point()[0])
        .collect();
    finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rho = density(&run.psi_final);
    let cdf = Cdf1d::from_marginal(run.psi_final.grid(), &rho, 0).expect("marginal cdf");
    let d = ks_statistic(&finals, |x| cdf.eval(x));
    check("equivariance-ks", d, ks_band(run.samples, 0.01))
}

/// free-packet and equivariance: a spreading Gaussian carried by its own
/// flow stays |psi_t|^2-distributed. The equivariance variant derives the
/// evolution time from the packet (width doubles) instead of the config.
fn exec_spreading(
    cfg: &ScenarioConfig,
    opts: &ExecOptions,
    derive_steps: bool,
) -> Result<ScenarioOutcome> {
    let raw = &cfg.raw;
    let grid = build_grid(need(&raw.grid, cfg.kind, "grid")?)?;
    let units = build_units(&raw.units, &grid)?;
    let psi_cfg = need(&raw.initial_psi, cfg.kind, "initial-psi")?;
    let psi0 = build_psi(psi_cfg, &grid)?;
    let pot = build_potential(&raw.potential, &grid, &units)?;
    let prop_cfg = need(&raw.propagator, cfg.kind, "propagator")?;
    let integrator = need(&raw.integrator, cfg.kind, "integrator")?;
    let prop = build_propagator(prop_cfg, &units)?;
    let _: NoParams = parse_params(raw)?;

    let prop_steps = if derive_steps {
        if psi_cfg.kind != "gaussian" {
            return Err(Error::Config(
                "equivariance needs initial-psi.kind = \"gaussian\" to size the run".into(),
            ));
        }
        if prop_cfg.steps.is_some() {
            return Err(Error::Config(
                "equivariance derives propagator.steps; remove the key".into(),
            ));
        }
        // A free packet of width sigma doubles its width at 2 sqrt(3) mu
        // sigma^2; round to a whole number of trajectory steps.
        let sigma0 = psi_cfg.sigma.as_ref().expect("validated by build_psi")[0];
        let t_double = 2.0 * 3.0f64.sqrt() * units.mu(0) * sigma0 * sigma0;
        let k = traj_chunk(integrator.dt, prop_cfg.dt)?;
        let chunks = (t_double / (k as f64 * prop_cfg.dt)).round().max(1.0) as usize;
        chunks * k
    } else {
        prop_cfg
            .steps
            .ok_or_else(|| Error::Config("propagator.steps is required".into()))?
    };

    let prov = provenance(cfg);
    let run = wave_run(
        cfg,
        Some(opts),
        &psi0,
        &pot,
        &prop,
        integrator,
        prop_steps,
        &prov,
    )?;

    let mut checks = vec![
        check("escaped-members", run.escaped as f64, 0.0),
        unitarity_check(&run.psi_final),
        ks_check(&run),
    ];
    if grid.dims() == 1 {
        let crossings = crossing_check(&run.trajectories)?;
        checks.push(check(
            "order-inversions",
            crossings.violations.len() as f64,
            0.0,
        ));
    }
    Ok(ScenarioOutcome {
        checks,
        artifacts: wave_artifacts(&run, &prov),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HarmonicParams {
    periods: Option<f64>,
}

fn exec_harmonic(cfg: &ScenarioConfig, opts: &ExecOptions) -> Result<ScenarioOutcome> {
    let raw = &cfg.raw;
    forbid(&raw.initial_psi, cfg.kind, "initial-psi")?;
    let grid = build_grid(need(&raw.grid, cfg.kind, "grid")?)?;
    let units = build_units(&raw.units, &grid)?;
    let pot_cfg = need(&raw.potential, cfg.kind, "potential")?;
    if pot_cfg.kind != "harmonic" {
        return Err(Error::Config(
            "harmonic scenario needs potential.kind = \"harmonic\"".into(),
        ));
    }
    let pot = build_potential(&raw.potential, &grid, &units)?;
    let omega = pot_cfg.omega.expect("validated by build_potential");
    let center = pot_cfg
        .center
        .clone()
        .unwrap_or_else(|| vec![0.0; grid.dims()]);
    let psi0 = packets::harmonic_ground_state(&grid, &units, omega, &center)?;
    let prop_cfg = need(&raw.propagator, cfg.kind, "propagator")?;
    let integrator = need(&raw.integrator, cfg.kind, "integrator")?;
    let prop = build_propagator(prop_cfg, &units)?;
    let params: HarmonicParams = parse_params(raw)?;
    if prop_cfg.steps.is_some() {
        return Err(Error::Config(
            "harmonic derives propagator.steps from params.periods; remove the key".into(),
        ));
    }
    let periods = params.periods.unwrap_or(10.0);
    if !(periods > 0.0) {
        return Err(Error::Config("params.periods must be positive".into()));
    }
    let k = traj_chunk(integrator.dt, prop_cfg.dt)?;
    let total_t = periods * std::f64::consts::TAU / omega;
    let prop_steps = ((total_t / (k as f64 * prop_cfg.dt)).round().max(1.0) as usize) * k;

    let prov = provenance(cfg);
    let run = wave_run(
        cfg,
        Some(opts),
        &psi0,
        &pot,
        &prop,
        integrator,
        prop_steps,
        &prov,
    )?;

    // Stationarity: the ground state's trajectories do not move and its
    // velocity field vanishes.
    let diagonal = grid.box_diagonal();
    let mut max_disp = 0.0f64;
    for tr in &run.trajectories {
        let q0 = tr.point(0).to_vec();
        for i in 1..tr.len() {
            let d2: f64 = tr
                .point(i)
                .iter()
                .zip(&q0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            max_disp = max_disp.max(d2.sqrt());
        }
    }
    let vf = velocity_field(&psi0, &units, GuidanceParams::for_grid(&grid, integrator.dt))?;
    let rho = vf.rho();
    let rho_max = rho.iter().cloned().fold(0.0, f64::max);
    let mut max_v = 0.0f64;
    for p in 0..grid.len() {
        if rho[p] >= 1e-6 * rho_max {
            let v2: f64 = vf.v_at_node(p).iter().map(|v| v * v).sum();
            max_v = max_v.max(v2.sqrt());
        }
    }

    // The quantum potential exactly cancels the trap's profile: V + U is
    // flat wherever the polar decomposition is defined.
    let pf = polar_decompose(&psi0)?;
    let u = quantum_potential(&pf, &units)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in 0..grid.len() {
        if !pf.mask()[p] {
            let total = pot.vhat()[p] + u[p];
            lo = lo.min(total);
            hi = hi.max(total);
        }
    }
    let scale = 0.5 * (lo.abs() + hi.abs()).max(f64::MIN_POSITIVE);
    let flatness = (hi - lo) / scale;

    let checks = vec![
        check("escaped-members", run.escaped as f64, 0.0),
        unitarity_check(&run.psi_final),
        check("stationarity-displacement", max_disp / diagonal, 1e-6),
        check("stationarity-velocity", max_v, 1e-8),
        check("quantum-potential-flatness", flatness, 1e-6),
    ];
    Ok(ScenarioOutcome {
        checks,
        artifacts: wave_artifacts(&run, &prov),
    })
}

fn exec_double_slit(cfg: &ScenarioConfig, opts: &ExecOptions) -> Result<ScenarioOutcome> {
    let raw = &cfg.raw;
    let grid = build_grid(need(&raw.grid, cfg.kind, "grid")?)?;
    let units = build_units(&raw.units, &grid)?;
    let psi_cfg = need(&raw.initial_psi, cfg.kind, "initial-psi")?;
    if psi_cfg.kind != "superposition" {
        return Err(Error::Config(
            "double-slit needs initial-psi.kind = \"superposition\"".into(),
        ));
    }
    let terms = psi_cfg.term.as_deref().unwrap_or(&[]);
    if terms.len() != 2 {
        return Err(Error::Config(
            "double-slit needs exactly two [[initial-psi.term]] slits".into(),
        ));
    }
    let (a, b) = (&terms[0], &terms[1]);
    let mirrored = a.coeff == b.coeff
        && a.sigma == b.sigma
        && a.center[0] == -b.center[0]
        && a.k[0] == -b.k[0]
        && a.center[1..] == b.center[1..]
        && a.k[1..] == b.k[1..];
    if !mirrored {
        return Err(Error::Config(
            "double-slit slits must mirror each other across the first axis \
             (equal coeff and sigma, opposite center and k on axis 1)"
                .into(),
        ));
    }
    let psi0 = build_psi(psi_cfg, &grid)?;
    let pot = build_potential(&raw.potential, &grid, &units)?;
    let prop_cfg = need(&raw.propagator, cfg.kind, "propagator")?;
    let integrator = need(&raw.integrator, cfg.kind, "integrator")?;
    let prop = build_propagator(prop_cfg, &units)?;
    let _: NoParams = parse_params(raw)?;
    let prop_steps = prop_cfg
        .steps
        .ok_or_else(|| Error::Config("propagator.steps is required".into()))?;

    let prov = provenance(cfg);
    let run = wave_run(
        cfg,
        Some(opts),
        &psi0,
        &pot,
        &prop,
        integrator,
        prop_steps,
        &prov,
    )?;

    let mut checks = vec![
        check("escaped-members", run.escaped as f64, 0.0),
        unitarity_check(&run.psi_final),
    ];
    // No trajectory may cross the symmetry plane; in one dimension the
    // full initial ordering must survive.
    let plane = plane_side_check(&run.trajectories, 0, 0.0);
    checks.push(check(
        "plane-crossings",
        plane.violations.len() as f64,
        0.0,
    ));
    if grid.dims() == 1 {
        let crossings = crossing_check(&run.trajectories)?;
        checks.push(check(
            "order-inversions",
            crossings.violations.len() as f64,
            0.0,
        ));
    }
    Ok(ScenarioOutcome {
        checks,
        artifacts: wave_artifacts(&run, &prov),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct SgParams {
    b0: Option<f64>,
    b1: Option<f64>,
    g: Option<f64>,
    t_field: Option<f64>,
    t_drift: Option<f64>,
    z_split: Option<f64>,
    overlap_limit: Option<f64>,
    /// Contextuality only: number of sampled configurations.
    count: Option<usize>,
}

fn build_sg_config(cfg: &ScenarioConfig) -> Result<(SgConfig, f64, SgParams)> {
    let raw = &cfg.raw;
    forbid(&raw.potential, cfg.kind, "potential")?;
    let grid = build_grid(need(&raw.grid, cfg.kind, "grid")?)?;
    let units = build_units(&raw.units, &grid)?;
    let psi_cfg = need(&raw.initial_psi, cfg.kind, "initial-psi")?;
    if psi_cfg.kind != "spinor" {
        return Err(Error::Config(format!(
            "{} needs initial-psi.kind = \"spinor\"",
            cfg.kind.name()
        )));
    }
    let spin = psi_cfg
        .spin
        .as_ref()
        .ok_or_else(|| Error::Config("initial-psi.spin is required".into()))?;
    if spin.len() != 2 {
        return Err(Error::Config(
            "initial-psi.spin needs exactly two [re, im] pairs".into(),
        ));
    }
    let (center, sigma, momentum) = psi_vectors(psi_cfg, &grid)?;
    let up = Complex64::new(spin[0][0], spin[0][1]);
    let down = Complex64::new(spin[1][0], spin[1][1]);
    let weight = up.norm_sqr() + down.norm_sqr();
    if !(weight > 0.0) {
        return Err(Error::Config("initial-psi.spin must not vanish".into()));
    }
    let prop_cfg = need(&raw.propagator, cfg.kind, "propagator")?;
    if prop_cfg.method != "split-operator" {
        return Err(Error::Config(
            "the spin coupling needs propagator.method = \"split-operator\"".into(),
        ));
    }
    if prop_cfg.steps.is_some() {
        return Err(Error::Config(
            "propagator.steps is derived from params.t-field/t-drift; remove the key".into(),
        ));
    }
    let integrator = need(&raw.integrator, cfg.kind, "integrator")?;
    let params: SgParams = parse_params(raw)?;
    let defaults = SgConfig::standard_1d(up, down)?;
    let sg = SgConfig {
        grid,
        units,
        up,
        down,
        center,
        sigma,
        momentum,
        b0: params.b0.unwrap_or(defaults.b0),
        b1: params.b1.unwrap_or(defaults.b1),
        g: params.g.unwrap_or(defaults.g),
        t_field: params.t_field.unwrap_or(defaults.t_field),
        t_drift: params.t_drift.unwrap_or(defaults.t_drift),
        dt: prop_cfg.dt,
        dt_traj: integrator.dt,
        scheme: build_scheme(&integrator.scheme)?,
        record_stride: integrator.record_stride.unwrap_or(defaults.record_stride),
        z_split: params.z_split.unwrap_or(defaults.z_split),
        overlap_limit: params.overlap_limit.unwrap_or(defaults.overlap_limit),
    };
    Ok((sg, up.norm_sqr() / weight, params))
}

#[derive(Serialize)]
struct OutcomeDoc<'a> {
    kind: &'static str,
    labels: Vec<String>,
    exact: Vec<f64>,
    counts: Vec<u64>,
    provenance: &'a Provenance,
}

fn exec_stern_gerlach(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let (sg, p_up, params) = build_sg_config(cfg)?;
    if params.count.is_some() {
        return Err(Error::Config(
            "params.count is only used by the contextuality scenario".into(),
        ));
    }
    let n = need(&cfg.raw.ensemble, cfg.kind, "ensemble")?.size;
    if n == 0 {
        return Err(Error::Config("ensemble.size must be positive".into()));
    }
    let report = stern_gerlach(&sg, n, cfg.seed)?;
    let prov = provenance(cfg);

    let exact_up = report.exact.probability("up").unwrap_or(0.0);
    let checks = vec![
        check(
            "born-exact",
            (exact_up - p_up).abs(),
            1e-8,
        ),
        check(
            "born-up-fraction",
            (report.up_fraction - exact_up).abs(),
            binomial_band(exact_up, n, 3.0),
        ),
        check("readout-cross-mass", report.cross_mass, sg.overlap_limit),
    ];

    let counts: Vec<u64> = report
        .empirical
        .counts()
        .map(|c| c.to_vec())
        .unwrap_or_default();
    let artifacts = vec![
        ArtifactFile {
            path: "trajectories.csv".into(),
            bytes: trajectories_csv(&report.trajectories),
        },
        ArtifactFile {
            path: "fields/final.json".into(),
            bytes: field_doc(&report.psi_final, 0, &prov),
        },
        ArtifactFile {
            path: "histograms/final-positions.json".into(),
            bytes: position_histogram(&report.trajectories, &report.psi_final, 0, &prov),
        },
        ArtifactFile {
            path: "histograms/outcomes.json".into(),
            bytes: to_json(&OutcomeDoc {
                kind: "outcomes",
                labels: report.exact.labels().to_vec(),
                exact: report.exact.probabilities().to_vec(),
                counts,
                provenance: &prov,
            }),
        },
    ];
    Ok(ScenarioOutcome { checks, artifacts })
}

#[derive(Serialize)]
struct ContextualityDoc<'a> {
    kind: &'static str,
    count: usize,
    reversed: usize,
    up_normal: u64,
    up_flipped: u64,
    /// Per member: reported value under the normal device orientation.
    values_normal: Vec<f64>,
    values_flipped: Vec<f64>,
    provenance: &'a Provenance,
}

fn exec_contextuality(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    forbid(&cfg.raw.ensemble, cfg.kind, "ensemble")?;
    let (sg, _, params) = build_sg_config(cfg)?;
    let count = params.count.unwrap_or(100);
    if count == 0 {
        return Err(Error::Config("params.count must be positive".into()));
    }

    // Same seed, hence the same sampled configurations, through both device
    // orientations: the reported value must reverse member by member while
    // the aggregate statistics stay identical.
    let normal = crate::observables::contextuality_ensemble(
        count,
        cfg.seed,
        Orientation::Normal,
        &sg,
    )?;
    let flipped = crate::observables::contextuality_ensemble(
        count,
        cfg.seed,
        Orientation::Flipped,
        &sg,
    )?;
    let reversed = normal
        .values
        .iter()
        .zip(&flipped.values)
        .filter(|(a, b)| **a == -**b)
        .count();
    let up_normal = normal.values.iter().filter(|v| **v > 0.0).count() as u64;
    let up_flipped = flipped.values.iter().filter(|v| **v > 0.0).count() as u64;
    let band = binomial_band(0.5, count, 3.0);

    let checks = vec![
        check("unreversed-members", (count - reversed) as f64, 0.0),
        check(
            "born-symmetric-normal",
            (up_normal as f64 / count as f64 - 0.5).abs(),
            band,
        ),
        check(
            "born-symmetric-flipped",
            (up_flipped as f64 / count as f64 - 0.5).abs(),
            band,
        ),
    ];
    let prov = provenance(cfg);
    let artifacts = vec![
        ArtifactFile {
            path: "trajectories.csv".into(),
            bytes: trajectories_csv(&normal.trajectories),
        },
        ArtifactFile {
            path: "histograms/outcomes.json".into(),
            bytes: to_json(&ContextualityDoc {
                kind: "contextuality",
                count,
                reversed,
                up_normal,
                up_flipped,
                values_normal: normal.values.clone(),
                values_flipped: flipped.values.clone(),
                provenance: &prov,
            }),
        },
    ];
    Ok(ScenarioOutcome { checks, artifacts })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct PovParams {
    strength: Option<f64>,
    apparatus: Option<AxisCfg>,
    basis_size: Option<usize>,
}

fn exec_pov_pipeline(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let raw = &cfg.raw;
    forbid(&raw.potential, cfg.kind, "potential")?;
    forbid(&raw.integrator, cfg.kind, "integrator")?;
    let grid = build_grid(need(&raw.grid, cfg.kind, "grid")?)?;
    if grid.dims() != 1 {
        return Err(Error::Config(
            "pov-pipeline runs on a one-dimensional system grid".into(),
        ));
    }
    let psi = build_psi(need(&raw.initial_psi, cfg.kind, "initial-psi")?, &grid)?;
    let n = need(&raw.ensemble, cfg.kind, "ensemble")?.size;
    if n == 0 {
        return Err(Error::Config("ensemble.size must be positive".into()));
    }
    let prop_cfg = need(&raw.propagator, cfg.kind, "propagator")?;
    if prop_cfg.method != "split-operator" {
        return Err(Error::Config(
            "pov-pipeline needs propagator.method = \"split-operator\"".into(),
        ));
    }
    let steps = prop_cfg
        .steps
        .ok_or_else(|| Error::Config("propagator.steps is required".into()))?;
    let params: PovParams = parse_params(raw)?;
    let strength = params.strength.unwrap_or(-2.5);
    if !(strength < 0.0) {
        return Err(Error::Config(
            "params.strength must be negative (the pointer kicks toward +y for the right region)"
                .into(),
        ));
    }
    let app_axis = params.apparatus.unwrap_or(AxisCfg {
        lo: -64.0,
        hi: 64.0,
        n: 1024,
    });
    let basis_size = params.basis_size.unwrap_or(8);
    if basis_size < 2 {
        return Err(Error::Config("params.basis-size must be at least 2".into()));
    }

    let app_grid = Grid::new(&[(app_axis.lo, app_axis.hi, app_axis.n)])?;
    let apparatus = packets::gaussian(&app_grid, &[0.0], &[1.0], &[0.0])?;
    let comp_grid = Grid::new(&[
        (grid.axis(0).lo, grid.axis(0).hi, grid.axis(0).n),
        (app_axis.lo, app_axis.hi, app_axis.n),
    ])?;
    let pot = PotentialSpec::from_fn(&comp_grid, |q| {
        strength * if q[0] >= 0.0 { 1.0 } else { -1.0 } * q[1]
    })?;
    let units = Units::per_axis(vec![f64::INFINITY, 1.0])?;
    let prop = Propagator::new(Method::SplitOperator, prop_cfg.dt, units)?;
    let pointer = PointerFunction::new(vec!["left".into(), "right".into()], |q: &[f64]| {
        usize::from(q[1] >= 0.0)
    })?;
    let setup = PovSetup {
        apparatus: &apparatus,
        pot: &pot,
        prop: &prop,
        n_steps: steps,
        pointer: &pointer,
    };
    let spec = ExperimentSpec::new(
        &grid,
        1,
        vec![
            OutcomeSpec {
                label: "left".into(),
                projection: Projection::region(&grid, |q| q[0] < 0.0),
                calibration: -1.0,
            },
            OutcomeSpec {
                label: "right".into(),
                projection: Projection::region(&grid, |q| q[0] >= 0.0),
                calibration: 1.0,
            },
        ],
    )?;

    let report = pov_pipeline(&psi, &setup, n, cfg.seed)?;
    // The pointer statistics must be the projection masses.
    let projected = crate::observables::outcome_probabilities(&psi, &spec)?;
    let mut exact_defect = 0.0f64;
    for (label, p) in projected
        .labels()
        .iter()
        .zip(projected.probabilities())
    {
        let q = report.exact.probability(label).unwrap_or(0.0);
        exact_defect = exact_defect.max((p - q).abs());
    }
    let tv = report.exact.total_variation_from(&report.empirical)?;

    // Sesquilinearity of the outcome form over a small packet basis. The
    // polarization needs 4 * basis^2 composite evolutions, so it audits a
    // reduced instance of the same coupling (sesquilinearity is a property
    // of each pipeline, not of the pointer separation, which is why the
    // audit does not need the big apparatus box or the full kick time).
    let mut basis = Vec::with_capacity(basis_size);
    let ax = grid.axis(0);
    for i in 0..basis_size {
        let frac = (i as f64 + 0.5) / basis_size as f64 - 0.5;
        let center = 0.7 * frac * ax.length();
        let momentum = if i % 2 == 0 { 0.0 } else { 0.5 };
        basis.push(packets::gaussian(
            &grid,
            &[center],
            &[0.05 * ax.length()],
            &[momentum],
        )?);
    }
    let audit_app_grid = Grid::new(&[(-16.0, 16.0, 128)])?;
    let audit_apparatus = packets::gaussian(&audit_app_grid, &[0.0], &[1.0], &[0.0])?;
    let audit_comp = Grid::new(&[
        (grid.axis(0).lo, grid.axis(0).hi, grid.axis(0).n),
        (-16.0, 16.0, 128),
    ])?;
    let audit_pot = PotentialSpec::from_fn(&audit_comp, |q| {
        strength * if q[0] >= 0.0 { 1.0 } else { -1.0 } * q[1]
    })?;
    let audit_setup = PovSetup {
        apparatus: &audit_apparatus,
        pot: &audit_pot,
        prop: &prop,
        n_steps: steps.min(25),
        pointer: &pointer,
    };
    // One call audits every outcome (the defects are maxima over all of
    // them); the label only picks which Gram matrix comes back.
    let bilinearity = pov_bilinearity_check(&audit_setup, &basis, "left")?.max_defect();

    let checks = vec![
        check("pointer-vs-projection", exact_defect, 1e-8),
        check("bilinearity-defect", bilinearity, 1e-8),
        // Total variation over two labels is twice the count deviation;
        // bound it by three sigma at the worst-case variance.
        check(
            "empirical-total-variation",
            tv,
            2.0 * binomial_band(0.5, n, 3.0),
        ),
    ];
    let prov = provenance(cfg);
    let counts: Vec<u64> = report
        .empirical
        .counts()
        .map(|c| c.to_vec())
        .unwrap_or_default();
    let artifacts = vec![ArtifactFile {
        path: "histograms/outcomes.json".into(),
        bytes: to_json(&OutcomeDoc {
            kind: "outcomes",
            labels: report.exact.labels().to_vec(),
            exact: report.exact.probabilities().to_vec(),
            counts,
            provenance: &prov,
        }),
    }];
    Ok(ScenarioOutcome { checks, artifacts })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ConditionalParams {
    /// Center of the conditional x-Gaussian tracks alpha * y.
    alpha: Option<f64>,
    env_bins: usize,
    x_bins: usize,
}

#[derive(Serialize)]
struct ConditionalDoc<'a> {
    kind: &'static str,
    samples: usize,
    mean_l1: f64,
    bins: Vec<ConditionalBinDoc>,
    underflow: Vec<(usize, usize)>,
    provenance: &'a Provenance,
}

#[derive(Serialize)]
struct ConditionalBinDoc {
    index: usize,
    count: usize,
    centroid: Vec<f64>,
    l1: f64,
}

fn exec_conditional(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let raw = &cfg.raw;
    forbid(&raw.initial_psi, cfg.kind, "initial-psi")?;
    forbid(&raw.potential, cfg.kind, "potential")?;
    forbid(&raw.propagator, cfg.kind, "propagator")?;
    forbid(&raw.integrator, cfg.kind, "integrator")?;
    let grid = build_grid(need(&raw.grid, cfg.kind, "grid")?)?;
    if grid.dims() != 2 {
        return Err(Error::Config(
            "conditional runs on a two-dimensional (system, environment) grid".into(),
        ));
    }
    let n = need(&raw.ensemble, cfg.kind, "ensemble")?.size;
    let params: ConditionalParams = parse_params(raw)?;
    let alpha = params.alpha.unwrap_or(0.2);

    // Entangled Gaussian pair: conditionally on y, x is a unit-width
    // packet centered at alpha * y; the y marginal has width 2.
    let xax = grid.axis(0);
    let yax = grid.axis(1);
    let mut amps = Vec::with_capacity(grid.len());
    for ix in 0..xax.n {
        for iy in 0..yax.n {
            let (x, y) = (xax.node(ix), yax.node(iy));
            let m = x - alpha * y;
            amps.push(Complex64::new((-m * m / 4.0 - y * y / 16.0).exp(), 0.0));
        }
    }
    let psi = WaveFunction::from_amplitudes(grid.clone(), 1, 0.0, amps)?.normalized()?;
    let comp = Composite::new(psi, 1)?;
    let report =
        conditional_probability_check(&comp, &[params.env_bins], &[params.x_bins], n, cfg.seed)?;

    let checks = vec![
        check("conditional-mean-l1", report.mean_l1, 0.05),
        check(
            "kept-bins-deficit",
            (5usize.saturating_sub(report.bins.len())) as f64,
            0.0,
        ),
    ];
    let prov = provenance(cfg);
    let artifacts = vec![ArtifactFile {
        path: "histograms/conditional-bins.json".into(),
        bytes: to_json(&ConditionalDoc {
            kind: "conditional",
            samples: report.samples,
            mean_l1: report.mean_l1,
            bins: report
                .bins
                .iter()
                .map(|b| ConditionalBinDoc {
                    index: b.index,
                    count: b.count,
                    centroid: b.centroid.clone(),
                    l1: b.l1,
                })
                .collect(),
            underflow: report.underflow.clone(),
            provenance: &prov,
        }),
    }];
    Ok(ScenarioOutcome { checks, artifacts })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LlnParams {
    labels: Vec<String>,
    edges: Vec<f64>,
}

#[derive(Serialize)]
struct EventsDoc<'a> {
    kind: &'static str,
    labels: Vec<String>,
    weights: Vec<f64>,
    counts: Vec<u64>,
    frequencies: Vec<f64>,
    subsystems: usize,
    provenance: &'a Provenance,
}

fn exec_lln(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let raw = &cfg.raw;
    forbid(&raw.potential, cfg.kind, "potential")?;
    forbid(&raw.propagator, cfg.kind, "propagator")?;
    forbid(&raw.integrator, cfg.kind, "integrator")?;
    let grid = build_grid(need(&raw.grid, cfg.kind, "grid")?)?;
    let psi = build_psi(need(&raw.initial_psi, cfg.kind, "initial-psi")?, &grid)?;
    let m = need(&raw.ensemble, cfg.kind, "ensemble")?.size;
    let params: LlnParams = parse_params(raw)?;
    let events = EventPartition::new(params.labels, params.edges)?;
    let report = lln_quantum_equilibrium(&psi, &events, m, cfg.seed)?;

    // Every event frequency must sit inside its own 3 sigma band; report
    // the worst band fraction.
    let mut worst = 0.0f64;
    for (f, w) in report.frequencies.iter().zip(&report.weights) {
        let band = binomial_band(*w, m, 3.0);
        if band > 0.0 {
            worst = worst.max((f - w).abs() / band);
        }
    }
    let checks = vec![
        check("event-band-fraction", worst, 1.0),
        check(
            "weight-sum-defect",
            (report.weights.iter().sum::<f64>() - 1.0).abs(),
            1e-12,
        ),
    ];
    let prov = provenance(cfg);
    let artifacts = vec![ArtifactFile {
        path: "histograms/events.json".into(),
        bytes: to_json(&EventsDoc {
            kind: "events",
            labels: report.labels.clone(),
            weights: report.weights.clone(),
            counts: report.counts.clone(),
            frequencies: report.frequencies.clone(),
            subsystems: report.subsystems,
            provenance: &prov,
        }),
    }];
    Ok(ScenarioOutcome { checks, artifacts })
}
