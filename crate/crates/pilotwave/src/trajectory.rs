//! Ensemble advection along the guiding equation, synchronized with the
//! wave-function stepping.
//!
//! The wave function never feels the particles: each trajectory step of
//! size dt_traj advances the shared psi chain by k = dt_traj/dt propagator
//! steps and builds immutable velocity snapshots at the step start, the
//! midpoint (one extra half step when k is odd), and, for RK4, the step
//! end. Members then integrate independently against those snapshots, in
//! parallel, each writing only its own slot, so results are bit-identical
//! for any thread count.
//!
//! A member that leaves the box is frozen where it was and reported; the
//! rest of the ensemble continues. Escapes mean the scenario box was too
//! small and acceptance runs require zero of them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Ensemble, WaveFunction};
use crate::guidance::{velocity_field, GuidanceParams};
use crate::propagate::{self, PotentialSpec, Propagator};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    ExplicitMidpoint,
    Rk4,
}

#[derive(Clone, Copy, Debug)]
pub struct IntegratorSpec {
    pub scheme: Scheme,
    /// Trajectory step; must be a (positive integer) multiple of the
    /// propagator dt.
    pub dt_traj: f64,
}

#[derive(Clone, Debug)]
pub struct AdvectConfig {
    pub integrator: IntegratorSpec,
    pub guidance: GuidanceParams,
    /// Record every this-many trajectory steps (the initial and final
    /// configurations are always recorded).
    pub record_stride: usize,
}

/// One member's recorded path.
#[derive(Clone, Debug)]
pub struct Trajectory {
    member: usize,
    dims: usize,
    times: Vec<f64>,
    points: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn from_parts(
        member: usize,
        dims: usize,
        times: Vec<f64>,
        points: Vec<f64>,
    ) -> Trajectory {
        debug_assert_eq!(times.len() * dims, points.len());
        Trajectory {
            member,
            dims,
            times,
            points,
        }
    }

    pub fn member(&self) -> usize {
        self.member
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dims..(i + 1) * self.dims]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn final_point(&self) -> &[f64] {
        self.point(self.times.len() - 1)
    }
}

#[derive(Clone, Debug)]
pub struct AdvectReport {
    pub trajectories: Vec<Trajectory>,
    /// (member, time at which it left the box); its trajectory keeps the
    /// recorded prefix and the member is frozen afterwards.
    pub escaped: Vec<(usize, f64)>,
    /// Wave function at the final time.
    pub psi_final: WaveFunction,
}

fn integrate_member<VS, VM, VE>(
    scheme: Scheme,
    q: &mut [f64],
    dt: f64,
    v_start: VS,
    v_mid: VM,
    v_end: VE,
) -> Result<()>
where
    VS: Fn(&[f64], &mut [f64]) -> Result<()>,
    VM: Fn(&[f64], &mut [f64]) -> Result<()>,
    VE: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let d = q.len();
    let mut k1 = [0.0f64; 3];
    let mut k2 = [0.0f64; 3];
    let mut stage = [0.0f64; 3];
    match scheme {
        Scheme::ExplicitMidpoint => {
            v_start(q, &mut k1[..d])?;
            for i in 0..d {
                stage[i] = q[i] + 0.5 * dt * k1[i];
            }
            v_mid(&stage[..d], &mut k2[..d])?;
            for i in 0..d {
                q[i] += dt * k2[i];
            }
        }
        Scheme::Rk4 => {
            let mut k3 = [0.0f64; 3];
            let mut k4 = [0.0f64; 3];
            v_start(q, &mut k1[..d])?;
            for i in 0..d {
                stage[i] = q[i] + 0.5 * dt * k1[i];
            }
            v_mid(&stage[..d], &mut k2[..d])?;
            for i in 0..d {
                stage[i] = q[i] + 0.5 * dt * k2[i];
            }
            v_mid(&stage[..d], &mut k3[..d])?;
            for i in 0..d {
                stage[i] = q[i] + dt * k3[i];
            }
            v_end(&stage[..d], &mut k4[..d])?;
            for i in 0..d {
                q[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    Ok(())
}

/// Advect every ensemble member for `n_steps` trajectory steps.
pub fn advect(
    ensemble: &Ensemble,
    psi0: &WaveFunction,
    pot: &PotentialSpec,
    prop: &Propagator,
    cfg: &AdvectConfig,
    n_steps: usize,
) -> Result<AdvectReport> {
    let grid = psi0.grid();
    let d = grid.dims();
    if ensemble.dims() != d {
        return Err(Error::GridMismatch(
            "ensemble dimension does not match the grid".into(),
        ));
    }
    let dt_traj = cfg.integrator.dt_traj;
    let ratio = dt_traj / prop.dt;
    let k = ratio.round() as usize;
    if !(dt_traj > 0.0) || k == 0 || (ratio - k as f64).abs() > 1e-9 {
        return Err(Error::IncompatibleTimestep(format!(
            "dt_traj = {dt_traj} must be a positive integer multiple of dt = {}",
            prop.dt
        )));
    }
    let stride = cfg.record_stride.max(1);
    let half_prop = prop.with_dt(prop.dt / 2.0)?;

    let n_members = ensemble.len();
    let mut positions: Vec<f64> = ensemble.positions().to_vec();
    let mut frozen: Vec<Option<usize>> = vec![None; n_members]; // escape step
    let mut times: Vec<f64> = Vec::new();
    let mut recorded: Vec<Vec<f64>> = vec![Vec::new(); n_members];

    let record = |m_step: usize, positions: &[f64], recorded: &mut Vec<Vec<f64>>,
                  times: &mut Vec<f64>| {
        times.push(psi0.time() + m_step as f64 * dt_traj);
        for (buf, q) in recorded.iter_mut().zip(positions.chunks(d)) {
            buf.extend_from_slice(q);
        }
    };
    record(0, &positions, &mut recorded, &mut times);

    let mut psi = psi0.clone();
    for m in 1..=n_steps {
        let vf_start = velocity_field(&psi, &prop.units, cfg.guidance)?;
        for _ in 0..k / 2 {
            psi = propagate::step(&psi, pot, prop)?;
        }
        let vf_mid = if k % 2 == 0 {
            velocity_field(&psi, &prop.units, cfg.guidance)?
        } else {
            let half = propagate::step(&psi, pot, &half_prop)?;
            velocity_field(&half, &prop.units, cfg.guidance)?
        };
        for _ in 0..(k - k / 2) {
            psi = propagate::step(&psi, pot, prop)?;
        }
        let vf_end = if cfg.integrator.scheme == Scheme::Rk4 {
            Some(velocity_field(&psi, &prop.units, cfg.guidance)?)
        } else {
            None
        };

        let scheme = cfg.integrator.scheme;
        positions
            .par_chunks_mut(d)
            .zip(frozen.par_iter_mut())
            .for_each(|(q, frozen)| {
                if frozen.is_some() {
                    return;
                }
                let end_field = vf_end.as_ref().unwrap_or(&vf_start);
                let result = integrate_member(
                    scheme,
                    q,
                    dt_traj,
                    |x: &[f64], out: &mut [f64]| vf_start.velocity_into(x, out),
                    |x: &[f64], out: &mut [f64]| vf_mid.velocity_into(x, out),
                    |x: &[f64], out: &mut [f64]| end_field.velocity_into(x, out),
                );
                let left = match &result {
                    Ok(()) => !vf_start.grid().contains(q),
                    Err(_) => true,
                };
                if left {
                    *frozen = Some(m);
                }
            });

        if m % stride == 0 || m == n_steps {
            record(m, &positions, &mut recorded, &mut times);
        }
    }

    // A frozen member's last recorded positions repeat its freeze point,
    // which may sit outside the box; trim those rows off its trajectory.
    let mut trajectories = Vec::with_capacity(n_members);
    let mut escaped = Vec::new();
    for (member, buf) in recorded.into_iter().enumerate() {
        let mut t = Trajectory {
            member,
            dims: d,
            times: times.clone(),
            points: buf,
        };
        if let Some(m_escape) = frozen[member] {
            // Same arithmetic as `record`, so the comparison below is exact.
            let t_escape = psi0.time() + m_escape as f64 * dt_traj;
            escaped.push((member, t_escape));
            let keep = t.times.iter().take_while(|&&x| x < t_escape).count();
            t.times.truncate(keep);
            t.points.truncate(keep * d);
        }
        trajectories.push(t);
    }
    Ok(AdvectReport {
        trajectories,
        escaped,
        psi_final: psi,
    })
}

#[derive(Clone, Debug)]
pub struct CrossingEvent {
    pub member_a: usize,
    pub member_b: usize,
    pub time: f64,
}

#[derive(Clone, Debug)]
pub struct CrossingReport {
    pub violations: Vec<CrossingEvent>,
    pub compared_times: usize,
}

impl CrossingReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// First-order ODE trajectories in 1D cannot cross: the initial ordering
/// must persist at every recorded time. Only full-length trajectories are
/// compared (escaped members drop out of the ordering).
pub fn crossing_check(trajectories: &[Trajectory]) -> Result<CrossingReport> {
    let full: Vec<&Trajectory> = trajectories.iter().filter(|t| !t.is_empty()).collect();
    let Some(first) = full.first() else {
        return Ok(CrossingReport {
            violations: Vec::new(),
            compared_times: 0,
        });
    };
    if first.dims() != 1 {
        return Err(Error::GridMismatch(
            "order-preservation check is one-dimensional; use plane_side_check".into(),
        ));
    }
    let n_times = first.len();
    let full: Vec<&&Trajectory> = full.iter().filter(|t| t.len() == n_times).collect();
    let mut order: Vec<usize> = (0..full.len()).collect();
    order.sort_by(|&a, &b| {
        full[a].point(0)[0]
            .partial_cmp(&full[b].point(0)[0])
            .unwrap()
    });
    let mut violations = Vec::new();
    for ti in 0..n_times {
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            if full[a].point(ti)[0] > full[b].point(ti)[0] {
                violations.push(CrossingEvent {
                    member_a: full[a].member(),
                    member_b: full[b].member(),
                    time: full[a].times()[ti],
                });
            }
        }
    }
    Ok(CrossingReport {
        violations,
        compared_times: n_times,
    })
}

/// Side preservation with respect to the hyperplane q[axis] = coordinate:
/// a trajectory that starts strictly on one side must stay there.
pub fn plane_side_check(
    trajectories: &[Trajectory],
    axis: usize,
    coordinate: f64,
) -> CrossingReport {
    let mut violations = Vec::new();
    let mut compared_times = 0;
    for t in trajectories {
        if t.is_empty() {
            continue;
        }
        compared_times = compared_times.max(t.len());
        let side0 = (t.point(0)[axis] - coordinate).signum();
        if side0 == 0.0 {
            continue;
        }
        for ti in 1..t.len() {
            let side = (t.point(ti)[axis] - coordinate).signum();
            if side != 0.0 && side != side0 {
                violations.push(CrossingEvent {
                    member_a: t.member(),
                    member_b: t.member(),
                    time: t.times()[ti],
                });
                break;
            }
        }
    }
    CrossingReport {
        violations,
        compared_times,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_density, Grid, Units};
    use crate::packets;
    use crate::propagate::Method;
    use num_complex::Complex64;

    fn units_1d() -> Units {
        Units::uniform(1.0, 1).unwrap()
    }

    fn midpoint_cfg(dt_traj: f64) -> AdvectConfig {
        AdvectConfig {
            integrator: IntegratorSpec {
                scheme: Scheme::ExplicitMidpoint,
                dt_traj,
            },
            guidance: GuidanceParams::default(),
            record_stride: 1,
        }
    }

    #[test]
    fn plane_wave_carries_a_particle_at_constant_speed() {
        let g = Grid::new(&[(-4.0 * std::f64::consts::PI, 4.0 * std::f64::consts::PI, 128)])
            .unwrap();
        let psi = packets::plane_wave(&g, &[8]).unwrap(); // k = 2
        let pot = PotentialSpec::free(&g);
        let prop = Propagator::new(Method::SplitOperator, 0.01, units_1d()).unwrap();
        let ens = Ensemble::from_positions(1, vec![0.0], 0).unwrap();
        let rep = advect(&ens, &psi, &pot, &prop, &midpoint_cfg(0.05), 60).unwrap();
        assert!(rep.escaped.is_empty());
        let q = rep.trajectories[0].final_point()[0];
        assert!((q - 6.0).abs() < 1e-6, "Q(3) = {q}");
    }

    #[test]
    fn particles_rest_in_the_harmonic_ground_state() {
        let g = Grid::new(&[(-8.0, 8.0, 128)]).unwrap();
        let units = units_1d();
        let omega = 1.0;
        let psi = packets::harmonic_ground_state(&g, &units, omega, &[0.0]).unwrap();
        let pot = PotentialSpec::from_fn(&g, |q| 0.5 * omega * omega * q[0] * q[0]).unwrap();
        let prop = Propagator::new(Method::SplitOperator, 1e-3, units).unwrap();
        let starts = vec![-1.3, -0.2, 0.45, 1.7];
        let ens = Ensemble::from_positions(1, starts.clone(), 0).unwrap();
        let mut cfg = midpoint_cfg(1e-2);
        cfg.record_stride = 100;
        // ten periods of 2 pi
        let n_steps = (10.0 * std::f64::consts::TAU / 1e-2).round() as usize;
        let rep = advect(&ens, &psi, &pot, &prop, &cfg, n_steps).unwrap();
        assert!(rep.escaped.is_empty());
        for (tr, q0) in rep.trajectories.iter().zip(&starts) {
            let drift = tr
                .points()
                .iter()
                .map(|q| (q - q0).abs())
                .fold(0.0f64, f64::max);
            assert!(drift < 1e-6, "member at {q0} drifted {drift}");
        }
    }

    /// Oracle: the free-Gaussian trajectories scale with the packet width,
    /// Q(t) = Q0 sigma(t)/sigma0 = Q0 sqrt(1 + (t/(2 mu sigma0^2))^2).
    #[test]
    fn free_gaussian_trajectory_follows_the_scaling_law() {
        let g = Grid::new(&[(-16.0, 16.0, 512)]).unwrap();
        let psi = packets::gaussian(&g, &[0.0], &[1.0], &[0.0]).unwrap();
        let pot = PotentialSpec::free(&g);
        let prop = Propagator::new(Method::SplitOperator, 5e-3, units_1d()).unwrap();
        let ens = Ensemble::from_positions(1, vec![1.0], 0).unwrap();
        let rep = advect(&ens, &psi, &pot, &prop, &midpoint_cfg(1e-2), 200).unwrap();
        let q = rep.trajectories[0].final_point()[0];
        let expect = (1.0f64 + 1.0).sqrt(); // t = 2: sqrt(1 + (t/2)^2) = sqrt 2
        assert!((q - expect).abs() < 1e-3, "Q(2) = {q} vs {expect}");
        // every recorded point matches the law, not just the endpoint
        for (i, &t) in rep.trajectories[0].times().iter().enumerate() {
            let sigma = (1.0f64 + (t / 2.0) * (t / 2.0)).sqrt();
            assert!(
                (rep.trajectories[0].point(i)[0] - sigma).abs() < 1e-3,
                "t = {t}"
            );
        }
    }

    #[test]
    fn integrators_converge_at_their_formal_order() {
        // dq/dt = q sin(t), solved exactly by q(t) = q0 e^{1 - cos t};
        // closures stand in for the sampled fields so spatial interpolation
        // cannot blur the order measurement
        let exact = |t: f64| (1.0 - t.cos()).exp();
        for (scheme, expect_order) in [(Scheme::ExplicitMidpoint, 2.0), (Scheme::Rk4, 4.0)] {
            let mut errs = Vec::new();
            for &n in &[20usize, 40, 80] {
                let dt = 1.0 / n as f64;
                let mut q = [1.0f64];
                for m in 0..n {
                    let t0 = m as f64 * dt;
                    let v = |t: f64| {
                        move |x: &[f64], out: &mut [f64]| -> Result<()> {
                            out[0] = x[0] * t.sin();
                            Ok(())
                        }
                    };
                    integrate_member(
                        scheme,
                        &mut q,
                        dt,
                        v(t0),
                        v(t0 + 0.5 * dt),
                        v(t0 + dt),
                    )
                    .unwrap();
                }
                errs.push((q[0] - exact(1.0)).abs());
            }
            let o1 = (errs[0] / errs[1]).log2();
            let o2 = (errs[1] / errs[2]).log2();
            assert!(
                (o1 - expect_order).abs() < 0.3 && (o2 - expect_order).abs() < 0.3,
                "{scheme:?}: orders {o1:.2}, {o2:.2} (errors {errs:?})"
            );
        }
    }

    #[test]
    fn one_dimensional_trajectories_never_cross() {
        let g = Grid::new(&[(-16.0, 16.0, 256)]).unwrap();
        let a = packets::gaussian(&g, &[-2.0], &[0.8], &[1.2]).unwrap();
        let b = packets::gaussian(&g, &[2.0], &[0.8], &[-1.2]).unwrap();
        let half = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let psi = packets::superpose(&[(half, &a), (half, &b)]).unwrap();
        let norm = psi.norm_squared().sqrt();
        let psi = WaveFunction::from_amplitudes(
            g.clone(),
            1,
            0.0,
            psi.amplitudes().iter().map(|x| x / norm).collect(),
        )
        .unwrap();
        let pot = PotentialSpec::free(&g);
        let prop = Propagator::new(Method::SplitOperator, 5e-3, units_1d()).unwrap();
        let ens = sample_density(&psi, 200, 42).unwrap();
        let mut cfg = midpoint_cfg(1e-2);
        cfg.record_stride = 10;
        let rep = advect(&ens, &psi, &pot, &prop, &cfg, 150).unwrap();
        assert!(rep.escaped.is_empty());
        let crossing = crossing_check(&rep.trajectories).unwrap();
        assert!(
            crossing.is_clean(),
            "{} order inversions",
            crossing.violations.len()
        );

        // coincident starts give bit-identical trajectories
        let twins = Ensemble::from_positions(1, vec![0.7, 0.7], 0).unwrap();
        let rep = advect(&twins, &psi, &pot, &prop, &cfg, 50).unwrap();
        assert_eq!(rep.trajectories[0].points(), rep.trajectories[1].points());
    }

    #[test]
    fn timestep_mismatch_is_rejected() {
        let g = Grid::new(&[(-8.0, 8.0, 64)]).unwrap();
        let psi = packets::gaussian(&g, &[0.0], &[1.0], &[0.0]).unwrap();
        let pot = PotentialSpec::free(&g);
        let prop = Propagator::new(Method::SplitOperator, 1e-3, units_1d()).unwrap();
        let ens = Ensemble::from_positions(1, vec![0.0], 0).unwrap();
        for bad in [2.5e-3, 0.5e-3] {
            match advect(&ens, &psi, &pot, &prop, &midpoint_cfg(bad), 1) {
                Err(Error::IncompatibleTimestep(_)) => {}
                other => panic!("dt_traj {bad}: expected IncompatibleTimestep, got {other:?}"),
            }
        }
    }

    #[test]
    fn escaping_member_is_frozen_and_reported() {
        let g = Grid::new(&[(-4.0, 4.0, 128)]).unwrap();
        let psi = packets::gaussian(&g, &[0.0], &[0.8], &[6.0]).unwrap();
        let pot = PotentialSpec::free(&g);
        let prop = Propagator::new(Method::SplitOperator, 1e-3, units_1d()).unwrap();
        let ens = Ensemble::from_positions(1, vec![3.7, -0.5], 0).unwrap();
        let rep = advect(&ens, &psi, &pot, &prop, &midpoint_cfg(1e-2), 40).unwrap();
        assert_eq!(rep.escaped.len(), 1);
        assert_eq!(rep.escaped[0].0, 0);
        // the survivor has the full record, the escapee a strict prefix
        assert_eq!(rep.trajectories[1].len(), 41);
        assert!(rep.trajectories[0].len() < 41);
        for i in 0..rep.trajectories[0].len() {
            assert!(g.contains(rep.trajectories[0].point(i)));
        }
    }

    #[test]
    fn rk4_and_midpoint_agree_on_smooth_fields() {
        let g = Grid::new(&[(-16.0, 16.0, 512)]).unwrap();
        let psi = packets::gaussian(&g, &[0.0], &[1.0], &[0.5]).unwrap();
        let pot = PotentialSpec::free(&g);
        let prop = Propagator::new(Method::SplitOperator, 5e-3, units_1d()).unwrap();
        let ens = Ensemble::from_positions(1, vec![0.9], 0).unwrap();
        let mid = advect(&ens, &psi, &pot, &prop, &midpoint_cfg(1e-2), 100).unwrap();
        let mut cfg = midpoint_cfg(1e-2);
        cfg.integrator.scheme = Scheme::Rk4;
        let rk = advect(&ens, &psi, &pot, &prop, &cfg, 100).unwrap();
        let d = (mid.trajectories[0].final_point()[0] - rk.trajectories[0].final_point()[0])
            .abs();
        assert!(d < 1e-5, "schemes diverged by {d}");
    }

    #[test]
    fn plane_side_check_flags_a_crosser() {
        let mk = |member: usize, xs: &[f64]| Trajectory {
            member,
            dims: 2,
            times: (0..xs.len()).map(|i| i as f64).collect(),
            points: xs.iter().flat_map(|&x| [x, 0.0]).collect(),
        };
        let stay = mk(0, &[1.0, 1.2, 0.8]);
        let cross = mk(1, &[-0.5, -0.1, 0.3]);
        let rep = plane_side_check(&[stay, cross], 0, 0.0);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].member_a, 1);
    }
}
