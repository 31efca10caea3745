//! Briefly trains a model, then maps SSP, MSE and MAE over two output-layer
//! weights around the trained values for one validation sample.

use ssp::dataset::{split, Dataset};
use ssp::experiments::loss_hyperplane;
use ssp::metrics::LossKind;
use ssp::model::{ModelConfig, Network, OptimizerSpec};
use ssp::sim_ks::{ks_simulate, KsConfig};
use ssp::trainer::{train, RunSpec};

fn main() -> ssp::Result<()> {
    let trajectories = (0..2)
        .map(|seed| ks_simulate(&KsConfig { seed, ..KsConfig::desk(1) }))
        .collect::<ssp::Result<Vec<_>>>()?;
    let data = Dataset::from_trajectories(&trajectories, 1)?;
    let plan = split(data.len(), 0, 0, 0.8)?;
    let model = ModelConfig::desk(1, data.dims()[0]);
    let spec = RunSpec {
        loss: LossKind::Mse,
        huber_delta: 1.0,
        optimizer: OptimizerSpec::adam(1e-3),
        epochs: 3,
        batch_size: 32,
        split_id: 0,
        seed: 0,
        model: model.clone(),
        probe: None,
    };
    let record = train(&data, &plan, &spec)?;
    let i = plan.validation[0];
    let input: Vec<f64> = data.input(i).iter().map(|&v| v as f64).collect();
    let grid = loss_hyperplane(&Network::new(&model)?, &record.params, &input, &data.target_field(i)?, [0, 1], 0.5, 9)?;
    println!("centre {:?}", grid.center);
    for (name, values) in [("SSP", &grid.ssp), ("MSE", &grid.mse), ("MAE", &grid.mae)] {
        println!("{name}");
        for row in values.chunks(grid.axis2.len()) {
            println!("  {}", row.iter().map(|v| format!("{v:9.4}")).collect::<String>());
        }
    }
    Ok(())
}
