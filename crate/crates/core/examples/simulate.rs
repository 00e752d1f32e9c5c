//! Synthesizes a city, writes per-order records, and ingests them back
//! onto the grid.
//!
//! cargo run --release --example simulate -- [out_dir]

use fclnet::data::{read_orders, read_weather, synthesize, synthesize_orders, write_orders, write_weather, Dataset, GridSpec, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("fclnet-simulate"), Into::into);
    std::fs::create_dir_all(&out)?;

    let grid = GridSpec::with_size(5, 5);
    let ds = synthesize(&grid, 24 * 14, 11, Scenario::Default)?;
    println!("{} buckets, {} orders in total, busiest first-hour cell {:.0}", ds.len(), ds.demand.total(), ds.demand.frames[0].iter().cloned().fold(0.0, f64::max));
    ds.save_dir(&out.join("aggregated"))?;

    let (orders, weather) = synthesize_orders(&ds, 11);
    write_orders(std::fs::File::create(out.join("orders.csv"))?, &orders)?;
    write_weather(std::fs::File::create(out.join("weather.csv"))?, &weather)?;
    println!("{} order records, {} weather records", orders.len(), weather.len());

    let orders = read_orders(std::fs::File::open(out.join("orders.csv"))?)?;
    let weather = read_weather(std::fs::File::open(out.join("weather.csv"))?)?;
    let (back, report) = Dataset::from_records(&orders, &weather, &grid, 3)?;
    println!("{report:?}");
    println!("re-ingested demand matches: {}", back.demand.frames == ds.demand.frames);
    println!("written to {}", out.display());
    Ok(())
}
