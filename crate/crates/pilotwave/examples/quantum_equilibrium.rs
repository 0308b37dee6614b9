//! The law of large numbers inside a single universe: when the effective
//! wave function of M identical subsystems is the product psi(x_1) ...
//! psi(x_M), one configuration of the whole universe already carries Born
//! statistics across its subsystems. Twenty universes, one draw each;
//! the left-of-zero frequency lands in the 3 sigma band almost always.

use pilotwave::grid::Grid;
use pilotwave::packets;
use pilotwave::statistics::binomial_band;
use pilotwave::subsystem::{lln_quantum_equilibrium, EventPartition};

fn main() -> pilotwave::Result<()> {
    let grid = Grid::new(&[(-8.0, 8.0, 128)])?;
    let psi = packets::gaussian(&grid, &[0.0], &[1.5], &[0.0])?;
    let events = EventPartition::new(
        vec!["left".into(), "right".into()],
        vec![0.0],
    )?;

    let m = 10_000;
    let band = binomial_band(0.5, m, 3.0);
    println!("subsystems per universe  {m}");
    println!("band around 1/2          {band:.4}\n");

    let mut inside = 0;
    for seed in 0..20u64 {
        let report = lln_quantum_equilibrium(&psi, &events, m, seed)?;
        let f_left = report.frequencies[0];
        let ok = (f_left - 0.5).abs() <= band;
        if ok {
            inside += 1;
        }
        println!(
            "universe {seed:>2}: left frequency = {f_left:.4}  {}",
            if ok { "in band" } else { "outside band" }
        );
    }
    println!("\n{inside} of 20 universes inside the 3 sigma band");
    Ok(())
}
