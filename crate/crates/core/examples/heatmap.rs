//! Per-cell test error of a baseline and a grayscale heatmap of one hour's
//! demand next to its forecast.
//!
//! cargo run --release --example heatmap -- [out_dir]

use fclnet::baselines::{Forecaster, HistoricalAverage};
use fclnet::data::{synthesize, GridSpec, Prepared, Scenario};
use fclnet::eval::{export_heatmap, per_cell_metrics, read_grid_csv, Scale};
use chrono::Timelike;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("fclnet-heatmap"), Into::into);
    std::fs::create_dir_all(&out)?;
    let ds = synthesize(&GridSpec::default(), 24 * 7 * 4, 4, Scenario::Default)?;
    let data = Prepared::new(&ds, 0.7)?;
    let ha = HistoricalAverage::fit(&data)?;

    let cells = per_cell_metrics(&ha, &data, Scale::Demand)?;
    for r in 0..data.rows {
        println!("{}", (0..data.cols).map(|c| format!("{:6.2}", cells[r * data.cols + c].rmse)).collect::<Vec<_>>().join(" "));
    }

    // first test hour at 09:00
    let t = data.test_range().find(|&t| data.timestamps[t].hour() == 9).ok_or("no 09:00 in the test slice")?;
    let (truth, _) = export_heatmap(&data.raw_demand[t], data.rows, data.cols, &out.join("truth"))?;
    let forecast = ha.forecast(&data, t)?.iter().map(|&z| data.scaling.demand.invert(z)).collect::<Vec<_>>();
    let (_, csv) = export_heatmap(&forecast, data.rows, data.cols, &out.join("historical_average"))?;
    let (rows, cols, values) = read_grid_csv(&csv)?;
    println!("{} at {}: {truth:?} and a {rows}x{cols} forecast peaking at {:.1}", data.timestamps[t], out.display(), values.iter().cloned().fold(0.0, f64::max));
    Ok(())
}
