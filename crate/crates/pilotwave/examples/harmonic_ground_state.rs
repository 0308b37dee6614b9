//! The harmonic ground state is a stationary point of the guidance flow:
//! its phase is spatially constant, so every trajectory freezes, and the
//! quantum potential cancels the trap profile up to a constant. Ten
//! oscillator periods of split-operator evolution leave both facts intact.

use pilotwave::grid::{sample_density, Grid, Units};
use pilotwave::guidance::{velocity_field, GuidanceParams};
use pilotwave::packets;
use pilotwave::polar::{polar_decompose, quantum_potential};
use pilotwave::propagate::{Method, PotentialSpec, Propagator};
use pilotwave::trajectory::{advect, AdvectConfig, IntegratorSpec, Scheme};

fn main() -> pilotwave::Result<()> {
    let grid = Grid::new(&[(-12.0, 12.0, 512)])?;
    let units = Units::uniform(1.0, 1)?;
    let omega = 1.0;
    let psi0 = packets::harmonic_ground_state(&grid, &units, omega, &[0.0])?;
    let pot = PotentialSpec::from_fn(&grid, |q| 0.5 * omega * omega * q[0] * q[0])?;

    let dt = 0.0025;
    let dt_traj = 0.025;
    let prop = Propagator::new(Method::SplitOperator, dt, units.clone())?;
    let periods = 10.0;
    let n_steps = (periods * std::f64::consts::TAU / omega / dt_traj).round() as usize;

    let ensemble = sample_density(&psi0, 200, 3)?;
    let cfg = AdvectConfig {
        integrator: IntegratorSpec {
            scheme: Scheme::ExplicitMidpoint,
            dt_traj,
        },
        guidance: GuidanceParams::for_grid(&grid, dt_traj),
        record_stride: 50,
    };
    let report = advect(&ensemble, &psi0, &pot, &prop, &cfg, n_steps)?;

    let mut max_disp = 0.0f64;
    for tr in &report.trajectories {
        let q0 = tr.point(0)[0];
        for i in 1..tr.len() {
            max_disp = max_disp.max((tr.point(i)[0] - q0).abs());
        }
    }

    let vf = velocity_field(&psi0, &units, GuidanceParams::for_grid(&grid, dt_traj))?;
    let rho_max = vf.rho().iter().cloned().fold(0.0, f64::max);
    let mut max_v = 0.0f64;
    for p in 0..grid.len() {
        if vf.rho()[p] >= 1e-6 * rho_max {
            max_v = max_v.max(vf.v_at_node(p)[0].abs());
        }
    }

    // V + U off the mask: flat up to rounding, at the ground state energy.
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

    println!("periods evolved        {periods}");
    println!("norm drift           = {:.3e}", (report.psi_final.norm_squared() - 1.0).abs());
    println!("max displacement     = {:.3e} (box diagonal {:.1})", max_disp, grid.box_diagonal());
    println!("max |v| off mask     = {:.3e}", max_v);
    println!("V + U range          = [{:.10}, {:.10}]", lo, hi);
    println!("expected E_0         = {:.10}", 0.5 * omega);
    println!("flatness (hi - lo)   = {:.3e}", hi - lo);
    Ok(())
}
