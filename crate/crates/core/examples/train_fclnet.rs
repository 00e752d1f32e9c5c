//! Trains the fused network and the demand-only conv-LSTM on the same
//! synthetic city and compares their test error.
//!
//! cargo run --release --example train_fclnet -- [epochs] [weeks]

use fclnet::data::{synthesize, GridSpec, Prepared, Scenario};
use fclnet::eval::{evaluate, Scale};
use fclnet::model::{FclNet, FclNetConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map_or(Ok(15), |s| s.parse())?;
    let weeks: usize = args.get(2).map_or(Ok(4), |s| s.parse())?;

    let ds = synthesize(&GridSpec::with_size(5, 5), 24 * 7 * weeks, 2, Scenario::Default)?;
    let data = Prepared::new(&ds, 0.7)?;

    let mut full = FclNetConfig::full(6);
    full.demand.layers = 1;
    full.demand.channels = 6;
    full.ttr = Some(full.demand.clone());
    for b in [&mut full.calendar, &mut full.weather].into_iter().flatten() {
        b.hidden = 8;
    }
    full.train.max_epochs = epochs;
    full.train.batch_size = 8;
    let demand_only = FclNetConfig { ttr: None, calendar: None, weather: None, ..full.clone() };

    let (conv, log) = FclNet::train(demand_only, &data)?;
    println!("conv-lstm: {} epochs, best validation rmse {:.4} at epoch {}", log.epochs.len(), log.best_validation_rmse, log.best_epoch);
    // reuse the trained demand branch instead of pretraining it again
    let (net, log) = FclNet::train_from(full, &data, Some(&conv))?;
    println!("fcl-net:   {} epochs, best validation rmse {:.4} at epoch {}", log.epochs.len(), log.best_validation_rmse, log.best_epoch);
    for e in &log.epochs {
        println!("  epoch {:3} train {:.5} validation {:.5}", e.epoch, e.train_loss, e.validation_rmse);
    }

    let a = evaluate(&conv, &data, Scale::Standardized)?;
    let b = evaluate(&net, &data, Scale::Standardized)?;
    println!("test rmse: conv-lstm {:.4}, fcl-net {:.4} ({:+.1}%)", a.rmse, b.rmse, 100.0 * (b.rmse / a.rmse - 1.0));
    Ok(())
}
