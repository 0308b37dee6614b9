//! A spin measurement without any collapse postulate: the gradient field
//! splits the spinor packet, each trajectory ends up in exactly one beam,
//! and the beam frequencies reproduce the Born weights |a|^2, |b|^2 of
//! the prepared spinor.

use num_complex::Complex64;
use pilotwave::observables::{stern_gerlach, SgConfig};
use pilotwave::statistics::binomial_band;

fn main() -> pilotwave::Result<()> {
    let up = Complex64::new(0.6, 0.0);
    let down = Complex64::new(0.8, 0.0);
    let cfg = SgConfig::standard_1d(up, down)?;

    let n = 10_000;
    let report = stern_gerlach(&cfg, n, 99)?;

    let exact_up = report.exact.probability("up").unwrap();
    let band = binomial_band(exact_up, n, 3.0);

    println!("prepared |up|^2        = {:.6}", up.norm_sqr());
    println!("readout mass up        = {:.10}", exact_up);
    println!("trajectories up        = {:.4} ({} of {})", report.up_fraction, (report.up_fraction * n as f64).round() as u64, n);
    println!("3 sigma band           = {:.4}", band);
    println!("mean calibrated value  = {:+.4}", report.mean_value);
    println!("cross mass at readout  = {:.3e}", report.cross_mass);
    println!(
        "born statistics        : {}",
        if (report.up_fraction - exact_up).abs() <= band {
            "inside the band"
        } else {
            "OUTSIDE the band"
        }
    );
    Ok(())
}
