//! The polar lens: R e^{iS} turns the Schrodinger equation into a
//! Hamilton-Jacobi equation with one extra term, the quantum potential U.
//! This example measures the HJ residual's convergence order in the time
//! step, rides a coherent state to test F = mu a with the quantum force
//! included, and compares the classicality metric of a heavy narrow
//! packet against an interfering superposition.

use num_complex::Complex64;
use pilotwave::grid::{Grid, Units};
use pilotwave::packets;
use pilotwave::polar::{
    classicality_metric, hj_residual, newtonian_check, polar_decompose, total_force,
};
use pilotwave::propagate::{self, Method, PotentialSpec, Propagator};

fn main() -> pilotwave::Result<()> {
    let grid = Grid::new(&[(-16.0, 16.0, 512)])?;
    let units = Units::uniform(1.0, 1)?;

    // HJ residual of a spreading packet, halving dt: second order. The
    // squeezing phase S grows from zero, so grad S is nontrivial while the
    // spatial floor stays below the dt term.
    let psi0 = packets::gaussian(&grid, &[0.0], &[1.0], &[0.0])?;
    let pot = PotentialSpec::free(&grid);
    let warm = Propagator::new(Method::SplitOperator, 1e-2, units.clone())?;
    let psi = propagate::evolve(&psi0, &pot, &warm, 50)?;
    let mut l2s = Vec::new();
    for dt in [1.6e-2, 8e-3, 4e-3] {
        let p = Propagator::new(Method::SplitOperator, dt, units.clone())?;
        let next = propagate::step(&psi, &pot, &p)?;
        let rep = hj_residual(
            &polar_decompose(&psi)?,
            &polar_decompose(&next)?,
            pot.vhat(),
            &units,
        )?;
        l2s.push((dt, rep.l2));
    }
    println!("HJ residual under dt halving:");
    for (dt, l2) in &l2s {
        println!("  dt = {dt:.4}   |residual|_2 = {l2:.6e}");
    }
    println!(
        "  orders: {:.2}, {:.2}",
        (l2s[0].1 / l2s[1].1).log2(),
        (l2s[1].1 / l2s[2].1).log2()
    );

    // Coherent state in a trap: constant width, zero quantum force, so the
    // guided particle obeys Newton with the trap force alone. Ride the
    // packet center and compare finite-difference acceleration with
    // -(1/mu) d(V + U)/dx at two record spacings.
    let omega = 1.0;
    let hpot = PotentialSpec::from_fn(&grid, |q| 0.5 * omega * omega * q[0] * q[0])?;
    println!("\ncoherent state, F = mu a along the ridden center:");
    let mut devs = Vec::new();
    for record_every in [16usize, 8] {
        let dt = 2.5e-3;
        let prop = Propagator::new(Method::SplitOperator, dt, units.clone())?;
        let mut psi = packets::harmonic_ground_state(&grid, &units, omega, &[2.0])?;
        let n_records = 12;
        let mut times = Vec::new();
        let mut points = Vec::new();
        let mut forces = Vec::new();
        for r in 0..n_records {
            let t = (r * record_every) as f64 * dt;
            times.push(t);
            points.push(2.0 * (omega * t).cos());
            forces.push(total_force(&polar_decompose(&psi)?, hpot.vhat(), &units)?);
            if r + 1 < n_records {
                psi = propagate::evolve(&psi, &hpot, &prop, record_every)?;
            }
        }
        let rep = newtonian_check(&times, &points, 1, &forces)?;
        println!(
            "  record spacing {:.3}: max deviation = {:.4e} over {} times",
            record_every as f64 * dt,
            rep.max_deviation,
            rep.compared
        );
        devs.push(rep.max_deviation);
    }
    println!("  deviation order: {:.2}", (devs[0] / devs[1]).log2());

    // Classicality: |U| against the kinetic scale. A heavy, wide packet is
    // nearly classical; a fringe-covered superposition is not.
    let heavy = Units::uniform(64.0, 1)?;
    let calm = packets::gaussian(&grid, &[0.0], &[2.0], &[8.0])?;
    let calm_metric = classicality_metric(&polar_decompose(&calm)?, pot.vhat(), &heavy)?;
    let a = packets::gaussian(&grid, &[-2.0], &[0.7], &[3.0])?;
    let b = packets::gaussian(&grid, &[2.0], &[0.7], &[-3.0])?;
    let half = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let fringes = packets::superpose(&[(half, &a), (half, &b)])?.normalized()?;
    let fringe_metric = classicality_metric(&polar_decompose(&fringes)?, pot.vhat(), &units)?;
    println!("\nclassicality metric (smaller = more classical):");
    println!("  heavy drifting packet   = {calm_metric:.4e}");
    println!("  colliding superposition = {fringe_metric:.4e}");
    Ok(())
}
