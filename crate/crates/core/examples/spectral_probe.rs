//! Trains on the wave case for two epochs per loss and prints how the
//! magnitude integral of one prediction approaches that of the truth.

use ssp::experiments::{cmd_probe, Case, ExperimentConfig, ProbeSignature};

fn main() -> ssp::Result<()> {
    let mut cfg = ExperimentConfig::defaults(Case::Waves);
    cfg.data.simulations = 4;
    let out = std::env::temp_dir().join("ssp-spectral-probe");
    let report = cmd_probe(&cfg, &out, 1)?;
    for (sig, record) in report.signatures.iter().zip(&report.records) {
        let trace = record.probe.as_ref().expect("probed");
        let ProbeSignature { loss, initial_gap, max_gap, final_gap, first_overshoot, .. } = sig;
        println!("{loss}: gap {initial_gap:+.3} -> peak {max_gap:+.3} -> {final_gap:+.3}, first overshoot {first_overshoot:?}");
        let step = (trace.integrals.len() / 10).max(1);
        for (u, v) in trace.integrals.iter().enumerate().step_by(step) {
            println!("  update {u:4}  {:.4}", v / trace.truth_integral);
        }
    }
    println!("outputs in {}", out.display());
    Ok(())
}
