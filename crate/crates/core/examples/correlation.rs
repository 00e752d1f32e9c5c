//! How lagged demand and travel-time rate correlate with demand as the
//! distance between cells grows.
//!
//! cargo run --release --example correlation

use fclnet::data::{chronological_split, correlation_profile, synthesize, Explanatory, GridSpec, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = synthesize(&GridSpec::default(), 24 * 7 * 4, 5, Scenario::Default)?;
    let train = chronological_split(ds.len(), 0.7)?;
    let profile = correlation_profile(&ds.demand.slice(0..train), &ds.ttr.slice(0..train), 3)?;

    println!("distance  demand(t-1)  ttr(t-1)  demand(t-3)");
    for bin in 0..profile.distances.len().min(8) {
        let get = |v, lag| profile.get(v, bin, lag).map_or(f64::NAN, |r| r.mean_corr);
        println!(
            "{:8.3}  {:11.4}  {:8.4}  {:11.4}",
            profile.distances[bin],
            get(Explanatory::Demand, 1),
            get(Explanatory::TravelTimeRate, 1),
            get(Explanatory::Demand, 3)
        );
    }
    println!("{} pairs skipped for zero variance", profile.excluded);
    Ok(())
}
