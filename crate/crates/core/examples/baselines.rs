//! The classic and per-cell neural baselines on one synthetic city.
//!
//! cargo run --release --example baselines

use fclnet::baselines::{Ann, Arima, ArimaOrder, CellLstm, Forecaster, HistoricalAverage, MovingAverage, NeuralConfig};
use fclnet::data::{synthesize, GridSpec, Prepared, Scenario};
use fclnet::eval::{ComparisonTable, Scale};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = synthesize(&GridSpec::with_size(4, 4), 24 * 7 * 4, 3, Scenario::Default)?;
    let data = Prepared::new(&ds, 0.7)?;

    let ha = HistoricalAverage::fit(&data)?;
    let ma = MovingAverage::default();
    let arima = Arima::fit(&data, ArimaOrder::default())?;
    let fallbacks = arima.models.iter().filter(|m| m.fallback).count();
    println!("arima(2,1,1): {fallbacks} of {} cells fell back to a pure autoregression", arima.models.len());

    let mut ann_cfg = NeuralConfig::ann();
    ann_cfg.train.max_epochs = 20;
    let (ann, _) = Ann::fit(&data, &ann_cfg)?;
    let mut lstm_cfg = NeuralConfig::lstm();
    lstm_cfg.train.max_epochs = 10;
    let (lstm, logs) = CellLstm::fit(&data, &lstm_cfg)?;
    println!("per-cell lstm epochs: {:?}", logs.iter().map(|l| l.epochs.len()).collect::<Vec<_>>());

    let models: [(&str, &dyn Forecaster); 5] = [("HA", &ha), ("MA", &ma), ("ARIMA", &arima), ("ANN", &ann), ("LSTM", &lstm)];
    ComparisonTable::compare(&models, &data, Scale::Standardized)?.write_csv(std::io::stdout().lock())?;
    println!("in demand units:");
    ComparisonTable::compare(&models, &data, Scale::Demand)?.write_csv(std::io::stdout().lock())?;
    Ok(())
}
