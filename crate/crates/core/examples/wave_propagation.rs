//! Propagates a random-phase wave group over a padded domain and tracks the
//! energy that stays in the observed window.

use ssp::sim_waves::{wave_simulate, WaveConfig};

fn main() -> ssp::Result<()> {
    let cfg = WaveConfig::desk();
    println!(
        "fastest group {:.2} m/s, padding {} points (needs {})",
        cfg.max_group_speed(),
        cfg.pad_points,
        cfg.min_pad_points()
    );
    let traj = wave_simulate(&cfg)?;
    let energy = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let total0 = energy(traj.frames()[0].values());
    for f in traj.frames().iter().step_by(100) {
        let v = f.values();
        println!(
            "t = {:5.1} s  observed {:.3}  padding {:.3}",
            f.time().unwrap_or(0.0),
            energy(&v[..cfg.n]) / total0,
            energy(&v[cfg.n..]) / total0
        );
    }
    Ok(())
}
