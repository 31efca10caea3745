//! A small loss comparison on the 1D KS case: three losses, two shared
//! splits, summary statistics read back from disk.

use ssp::experiments::{cmd_compare, cmd_stats, Case, ExperimentConfig};
use ssp::metrics::LossKind;

fn main() -> ssp::Result<()> {
    let mut cfg = ExperimentConfig::defaults(Case::Ks1d);
    cfg.data.simulations = 4;
    cfg.train.runs = 2;
    cfg.train.epochs = 10;
    cfg.train.losses = vec![LossKind::Ssp, LossKind::Mae, LossKind::Mse];
    let out = std::env::temp_dir().join("ssp-compare-losses");
    let report = cmd_compare(&cfg, &out, 2)?;
    for l in &report.summary.losses {
        let s = l.final_ssp.as_ref();
        let m = l.final_mse.as_ref();
        println!(
            "{:4}  final SSP {:.4} ± {:.4}   final MSE {:.3} ± {:.3}   diverged {}",
            l.loss,
            s.map_or(f64::NAN, |s| s.mean),
            s.map_or(f64::NAN, |s| s.std),
            m.map_or(f64::NAN, |s| s.mean),
            m.map_or(f64::NAN, |s| s.std),
            l.diverged
        );
    }
    let again = cmd_stats(&[out.join("runs")], Some(cfg.tail()), cfg.train.threshold_ssp, cfg.train.threshold_mse)?;
    assert_eq!(again, report.summary);
    println!("statistics recomputed from {} agree", out.display());
    Ok(())
}
