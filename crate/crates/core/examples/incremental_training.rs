//! FairDD against the pooled baseline on the default synthetic dataset.
//!
//! cargo run --release --example incremental_training -- [seeds] [epochs]

use fairdd::data::{Dataset, DatasetSpec};
use fairdd::losses::LossWeights;
use fairdd::metrics::{evaluate, fate, PredictionDump};
use fairdd::trainer::{run_incremental, run_vanilla, TrainConfig};

fn main() -> fairdd::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);

    println!("seed  method   acc     eopp0   eopp1   eodd    fate(eopp1)");
    for seed in 0..seeds {
        let data = Dataset::generate(&DatasetSpec {
            seed,
            ..Default::default()
        })?;
        let config = TrainConfig {
            epochs_per_stage: epochs,
            weights: LossWeights {
                alpha: 0.6,
                beta: 1.0,
                ..Default::default()
            },
            seed,
            ..Default::default()
        };
        let test = data.test();
        let fair = run_incremental(&config, &data)?;
        let base = run_vanilla(&config, &data)?;
        let fm = evaluate(&PredictionDump::from_network(&fair.network, &test)?)?;
        let bm = evaluate(&PredictionDump::from_network(&base.network, &test)?)?;
        let f = fate(fm.accuracy, fm.eopp1, bm.accuracy, bm.eopp1, 1.0).unwrap_or(f64::NAN);
        for (name, m) in [("fairdd", &fm), ("vanilla", &bm)] {
            println!(
                "{seed:<5} {name:<8} {:.4}  {:.4}  {:.4}  {:.4}  {}",
                m.accuracy,
                m.eopp0,
                m.eopp1,
                m.eodd,
                if name == "fairdd" {
                    format!("{f:.4}")
                } else {
                    String::new()
                }
            );
        }
    }
    Ok(())
}
