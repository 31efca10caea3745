//! Trains the convolutional flow map with the SSP loss on a few KS
//! simulations and reports validation SSP and MSE per epoch.

use ssp::dataset::{split, Dataset};
use ssp::metrics::LossKind;
use ssp::model::{ModelConfig, OptimizerSpec};
use ssp::sim_ks::{ks_simulate, KsConfig};
use ssp::trainer::{train, RunSpec};

fn main() -> ssp::Result<()> {
    let trajectories = (0..4)
        .map(|seed| ks_simulate(&KsConfig { seed, ..KsConfig::desk(1) }))
        .collect::<ssp::Result<Vec<_>>>()?;
    let data = Dataset::from_trajectories(&trajectories, 1)?;
    let plan = split(data.len(), 0, 0, 0.8)?;
    let spec = RunSpec {
        loss: LossKind::Ssp,
        huber_delta: 1.0,
        optimizer: OptimizerSpec::adam(1e-3),
        epochs: 10,
        batch_size: 32,
        split_id: 0,
        seed: 0,
        model: ModelConfig::desk(1, data.dims()[0]),
        probe: None,
    };
    let record = train(&data, &plan, &spec)?;
    for (e, (s, m)) in record.val_ssp.iter().zip(&record.val_mse).enumerate() {
        println!("epoch {:3}  val SSP {s:.4}  val MSE {m:.4}", e + 1);
    }
    println!("{} pairs, {:.1?}", data.len(), record.wall_time);
    Ok(())
}
