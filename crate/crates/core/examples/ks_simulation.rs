//! Integrates the desk-scale 1D Kuramoto–Sivashinsky case and prints how
//! the mean, spread and dominant wavenumber evolve.

use ssp::sim_ks::{ks_simulate, KsConfig};
use ssp::spectral;

fn main() -> ssp::Result<()> {
    let cfg = KsConfig {
        nu: 0.25,
        ..KsConfig::desk(1)
    };
    let traj = ks_simulate(&cfg)?;
    println!(
        "{} frames of {} points, every {} s",
        traj.len(),
        traj.frames()[0].len(),
        traj.dt()
    );
    for f in traj.frames().iter().step_by(25) {
        let v = f.values();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        let mags = spectral::forward(f)?.magnitudes();
        let peak = (1..mags.len() / 2).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap_or(1);
        println!(
            "t = {:5.1}  mean {:8.3}  std {:7.3}  peak mode {peak}",
            f.time().unwrap_or(0.0),
            mean,
            std
        );
    }
    Ok(())
}
