//! Saves a trained network with its standardization and reloads it for
//! forecasting in demand units.
//!
//! cargo run --release --example checkpoint

use fclnet::data::{synthesize, GridSpec, Prepared, Scenario};
use fclnet::model::{Checkpoint, FclNet, FclNetConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = synthesize(&GridSpec::with_size(3, 3), 24 * 14, 8, Scenario::Default)?;
    let data = Prepared::new(&ds, 0.7)?;
    let mut cfg = FclNetConfig::full(3);
    cfg.demand.layers = 1;
    cfg.demand.channels = 2;
    cfg.ttr = Some(cfg.demand.clone());
    cfg.train.max_epochs = 20;
    let (model, _) = FclNet::train(cfg, &data)?;

    let path = std::env::temp_dir().join("fclnet-example.ckpt");
    Checkpoint { model, grid: ds.grid.clone(), scaling: data.scaling.clone() }.save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    let t = data.train_len + 5;
    let forecast = loaded.predict(&data, t)?;
    println!("{} bytes in {}", std::fs::metadata(&path)?.len(), path.display());
    println!("forecast for {}: {:?}", data.timestamps[t], forecast.iter().map(|v| v.round()).collect::<Vec<_>>());
    println!("observed: {:?}", data.raw_demand[t]);
    Ok(())
}
