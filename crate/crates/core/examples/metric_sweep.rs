//! Scores amplitude, phase and frequency variants of a chirped test signal
//! with MSE, MAE and SSP and prints a coarse table.

use ssp::experiments::{metric_sweep, SweepConfig};

fn main() -> ssp::Result<()> {
    let cfg = SweepConfig {
        steps: 9,
        ..SweepConfig::default()
    };
    println!("{:>10} {:>8} {:>10} {:>10} {:>8}", "parameter", "value", "MSE", "MAE", "SSP");
    for r in metric_sweep(&cfg)? {
        println!(
            "{:>10} {:>8.3} {:>10.5} {:>10.5} {:>8.4}",
            r.parameter, r.value, r.mse, r.mae, r.ssp
        );
    }
    Ok(())
}
