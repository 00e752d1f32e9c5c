//! Spatially aggregated forest importance on a synthetic city, and the
//! look-back windows it selects.
//!
//! cargo run --release --example importance -- [trees] [weeks]

use fclnet::data::{synthesize, GridSpec, Prepared, Scenario};
use fclnet::forest::{count_feature_dimension, select_features, CategoryWindows, ForestConfig, SelectionRules, SpatialForest};
use fclnet::model::FclNetConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let trees: usize = args.get(1).map_or(Ok(30), |s| s.parse())?;
    let weeks: usize = args.get(2).map_or(Ok(6), |s| s.parse())?;

    let grid = GridSpec::default();
    let ds = synthesize(&grid, 24 * 7 * weeks, 7, Scenario::Default)?;
    let data = Prepared::new(&ds, 0.7)?;

    let windows = CategoryWindows::uniform(8);
    let start = std::time::Instant::now();
    let cfg = ForestConfig { trees, seed: 7, ..ForestConfig::default() };
    let sf = SpatialForest::fit(&data, windows, &cfg)?;
    let report = sf.importance();
    println!("{} forests x {trees} trees over {} features in {:.1?}", sf.forests.len(), sf.layout.len(), start.elapsed());

    report.write_csv(std::io::stdout().lock())?;

    let selected = select_features(&report, &SelectionRules::default());
    println!();
    for (c, total) in report.ranking() {
        println!("{c:>4} {total:7.3}%  window {}", selected.get(c));
    }
    println!(
        "features per observation: {} -> {}",
        count_feature_dimension(grid.rows, grid.cols, &windows),
        count_feature_dimension(grid.rows, grid.cols, &selected)
    );
    let net = selected.apply(&FclNetConfig::full(8));
    println!("selected network: demand {:?}, ttr {:?}, calendar {:?}, weather {:?}", net.demand.window, net.ttr.map(|b| b.window), net.calendar.map(|b| (b.window, b.inputs)), net.weather.map(|b| (b.window, b.inputs)));
    Ok(())
}
