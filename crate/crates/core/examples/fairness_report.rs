//! Group fairness metrics and FATE for an incremental run against the pooled
//! baseline, computed from prediction dumps.
//!
//! cargo run --release --example fairness_report -- [seed]

use fairdd::data::{Dataset, DatasetSpec};
use fairdd::losses::LossWeights;
use fairdd::metrics::{evaluate, group_accuracy, FateReport, PredictionDump};
use fairdd::trainer::{run_incremental, run_vanilla, TrainConfig};

fn main() -> fairdd::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let data = Dataset::generate(&DatasetSpec {
        seed,
        ..Default::default()
    })?;
    let config = TrainConfig {
        weights: LossWeights {
            alpha: 0.6,
            beta: 1.0,
            ..Default::default()
        },
        seed,
        ..Default::default()
    };
    let test = data.test();
    let fair = PredictionDump::from_network(&run_incremental(&config, &data)?.network, &test)?;
    let base = PredictionDump::from_network(&run_vanilla(&config, &data)?.network, &test)?;

    let path = std::env::temp_dir().join(format!("fairdd-predictions-{seed}.csv"));
    fair.write_csv(&path)?;
    let fm = evaluate(&PredictionDump::read_csv(&path)?)?;
    let bm = evaluate(&base)?;
    std::fs::remove_file(&path)?;

    println!("method    acc    f1     eopp0  eopp1  eodd   acc(g0) acc(g1)");
    for (name, dump, m) in [("fairdd", &fair, &fm), ("vanilla", &base, &bm)] {
        println!(
            "{name:<8} {:.3}  {:.3}  {:.3}  {:.3}  {:.3}  {:.3}   {:.3}",
            m.accuracy,
            m.f1,
            m.eopp0,
            m.eopp1,
            m.eodd,
            group_accuracy(dump, 0).unwrap_or(f64::NAN),
            group_accuracy(dump, 1).unwrap_or(f64::NAN)
        );
    }
    for e in FateReport::compare(&fm, &bm, 1.0)?.entries {
        println!(
            "FATE {:<6} {:>8.2} (x100)",
            e.criterion.to_string(),
            e.scaled()
        );
    }
    Ok(())
}
